// psdid: generate oscillator pencils, solve for the smallest eigenpairs, and
// verify the convergence bounds of a recorded run against the dense oracle.
//
// Exit codes: 0 success, 2 usage/input error, 3 a target hit the iteration
// cap, 4 breakdown, 5 a verified bound was violated.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "psdid/psdid.hpp"

namespace fs = std::filesystem;
using namespace psdid;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 2;
constexpr int exit_max_iterations = 3;
constexpr int exit_breakdown = 4;
constexpr int exit_violation = 5;

std::string sha256_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cannot open '" + path + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest initialization failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0 &&
        EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1)
      throw Error("sha256: digest update failed");
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw Error("sha256: digest finalization failed");
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[k]);
  return hex.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string join_args(int argc, char **argv) {
  std::string out;
  for (int k = 1; k < argc; ++k)
    out += (k > 1 ? " " : "") + std::string(argv[k]);
  return out;
}

struct ProblemArgs {
  std::string problem = "oscillator";
  std::string disc = "pufe";
  int elems = 32;
  double half_width = 10.0;

  void add(CLI::App *app) {
    app->add_option("--problem", problem, "problem family")->check(CLI::IsMember({"oscillator"}));
    app->add_option("--disc", disc, "discretization: linear, cubic or pufe");
    app->add_option("--elems", elems, "number of elements");
    app->add_option("--half-width", half_width, "domain half width L");
  }

  OscillatorSpec spec() const {
    OscillatorSpec s;
    s.discretization = parse_discretization(disc);
    s.n_elem = elems;
    s.half_width = half_width;
    s.validate();
    return s;
  }

  Json to_json() const {
    return {{"problem", problem}, {"disc", disc}, {"elems", elems}, {"half_width", half_width}};
  }
};

// ---------------------------------------------------------------------------

int cmd_generate(const ProblemArgs &pa, const std::string &out_dir) {
  const OscillatorSpec spec = pa.spec();
  const OscillatorMatrices m = assemble_oscillator_matrices(spec);
  fs::create_directories(out_dir);
  const std::string h_path = (fs::path(out_dir) / "H.mtx").string();
  const std::string s_path = (fs::path(out_dir) / "S.mtx").string();
  write_matrix_market(m.h, h_path);
  write_matrix_market(m.s, s_path);
  Json side = pa.to_json();
  side["enrichment_decay"] = spec.enrichment_decay;
  side["enrichment_support"] = spec.enrichment_support;
  side["n"] = m.h.n();
  side["polynomial_dofs"] = m.polynomial_dofs;
  side["enrichment_dofs"] = m.enrichment_dofs;
  side["files"] = {{"H", "H.mtx"}, {"S", "S.mtx"}};
  write_json_file(side, (fs::path(out_dir) / "pencil.json").string());
  std::cout << "wrote " << h_path << " and " << s_path << " (n = " << m.h.n() << ")\n";
  return exit_ok;
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::vector<std::string> files;
  bool use_problem = false;
  std::size_t nev = 4;
  std::size_t ell = 4;
  double tol = 1e-9;
  std::uint64_t seed = 0;
  std::string precond = "switching";
  std::string exact = "none";
  std::size_t max_iter = 500;
  std::optional<double> sigma;
  bool deterministic = false;
  bool oracle_checks = false;
  std::string json_out;
  std::string csv_out;
};

Pencil load_pencil(const std::vector<std::string> &files) {
  if (files.size() != 2)
    throw UsageError("expected two Matrix Market files: H S");
  return Pencil(read_matrix_market(files[0]), read_matrix_market(files[1]));
}

ExactKind parse_exact(const std::string &name) {
  if (name == "accelerated") return ExactKind::Accelerated;
  if (name == "fixed-shift") return ExactKind::FixedShift;
  if (name == "target-shift") return ExactKind::TargetShift;
  if (name == "identity") return ExactKind::Identity;
  throw UsageError("unknown exact mode '" + name + "'");
}

int termination_exit(const SolveResult &r) {
  for (const auto &h : r.histories)
    if (h.termination == Termination::Breakdown)
      return exit_breakdown;
  for (const auto &h : r.histories)
    if (h.termination == Termination::MaxIterations)
      return exit_max_iterations;
  return r.histories.size() > 0 && r.all_converged() ? exit_ok : exit_breakdown;
}

int cmd_solve(const SolveArgs &a, const ProblemArgs &pa, const std::string &command) {
  RunManifest manifest;
  manifest.command = command;
  if (!a.deterministic)
    manifest.started = utc_now();
  std::optional<Pencil> pencil;
  Json problem = nullptr;
  if (a.files.empty()) {
    if (!a.use_problem)
      throw UsageError("solve: give H and S files or --problem");
    pencil.emplace(assemble_oscillator(pa.spec()));
    problem = pa.to_json();
  } else {
    if (a.use_problem)
      throw UsageError("solve: give either files or --problem, not both");
    pencil.emplace(load_pencil(a.files));
    for (const auto &f : a.files)
      manifest.inputs.push_back({f, sha256_file(f)});
  }
  const Pencil &p = *pencil;

  SolverConfig cfg;
  cfg.nev = a.nev;
  cfg.extra_ritz = a.ell;
  cfg.eig_tolerance = a.tol;
  cfg.rng_seed = a.seed;
  cfg.policy = parse_policy(a.precond);
  cfg.max_outer_iterations = a.max_iter;
  cfg.sigma = a.sigma;
  cfg.deterministic = a.deterministic;
  cfg.oracle_checks = a.oracle_checks;
  cfg.validate(p.n());

  std::unique_ptr<ExactHarness> harness;
  DirectionProvider direction;
  if (a.exact != "none") {
    ExactHarnessConfig hc;
    hc.kind = parse_exact(a.exact);
    harness = std::make_unique<ExactHarness>(p, hc);
    direction = harness->provider();
  }
  const SolveResult r = solve_smallest(p, cfg, direction);

  manifest.seed = a.seed;
  manifest.config = to_json(cfg);
  manifest.config["exact"] = a.exact;
  manifest.config["problem"] = problem;
  if (!a.deterministic)
    manifest.finished = utc_now();
  if (!a.json_out.empty())
    write_json_file(history_document(manifest, r), a.json_out);
  if (!a.csv_out.empty()) {
    std::ofstream out(a.csv_out, std::ios::binary);
    if (!out)
      throw Error("cannot open '" + a.csv_out + "' for writing");
    write_history_csv(r.histories, out);
  }

  std::cout << "n = " << p.n() << ", sigma = " << shortest_decimal(r.sigma) << '\n';
  std::cout << std::left << std::setw(4) << "i" << std::setw(24) << "value" << std::setw(12)
            << "residual" << std::setw(8) << "iters" << "termination\n";
  for (const auto &h : r.histories) {
    std::ostringstream res;
    res << std::scientific << std::setprecision(2) << h.final_residual;
    std::cout << std::left << std::setw(4) << h.i << std::setw(24)
              << shortest_decimal(h.final.value) << std::setw(12) << res.str() << std::setw(8)
              << (h.iterates.empty() ? 0 : h.iterates.size() - 1) << to_string(h.termination)
              << '\n';
    for (const auto &w : h.warnings)
      std::cerr << "target " << h.i << ": " << w << '\n';
  }
  return termination_exit(r);
}

// ---------------------------------------------------------------------------

Json verdict_json(StepVerdict v) { return std::string(to_string(v)); }

int cmd_verify(const std::vector<std::string> &files, const std::string &history_path,
               const std::string &report_path) {
  const Pencil p = load_pencil(files);
  const OracleDecomposition o = dense_gev_oracle(p);
  const std::vector<ConvergenceHistory> hs = histories_from_json(read_json_file(history_path));
  const ExactPreconditionerLookup lookup = [&](const IterateState &s) {
    return ExactHarness::exact_preconditioner(p, s);
  };

  Json report;
  report["history"] = history_path;
  report["n"] = p.n();
  Json targets = Json::array();
  std::vector<std::string> violations;
  const auto violate = [&](std::size_t i, std::size_t j, const std::string &what) {
    violations.push_back("target " + std::to_string(i) + " step " + std::to_string(j) + ": " +
                         what);
  };

  for (const ConvergenceHistory &h : hs) {
    if (h.i > static_cast<std::size_t>(o.size()))
      throw UsageError("history target " + std::to_string(h.i) + " exceeds the pencil order");
    const double li = o.values(static_cast<Eigen::Index>(h.i - 1));
    Json t;
    t["i"] = h.i;
    t["oracle_value"] = li;

    Json mono = Json::array();
    for (std::size_t k = 0; k + 1 < h.iterates.size(); ++k) {
      const IterateState &cur = h.iterates[k];
      const IterateState &next = h.iterates[k + 1];
      const bool ok = next.lambda < cur.lambda + 1e-14 * std::abs(cur.lambda);
      if (!ok) {
        violate(h.i, next.j, "Ritz value increased");
        mono.push_back({{"j", next.j}, {"previous", cur.lambda}, {"lambda", next.lambda}});
      }
    }
    t["monotonicity_violations"] = mono;

    Json below = Json::array();
    for (const auto &s : h.iterates)
      if (s.lambda < li - 1e-9 * std::abs(li)) {
        violate(h.i, s.j, "Ritz value below the exact eigenvalue");
        below.push_back({{"j", s.j}, {"lambda", s.lambda}});
      }
    t["lower_bound_violations"] = below;

    Json dec = Json::array();
    for (const auto &d : verify_decrease_bound(p, o, h, lookup)) {
      if (d.verdict == StepVerdict::Violated)
        violate(h.i, d.j, "decrease below the per-step lower bound");
      dec.push_back({{"j", d.j}, {"decrease", d.decrease}, {"bound", d.bound},
                     {"verdict", verdict_json(d.verdict)}, {"note", d.note}});
    }
    t["decrease_bound"] = dec;

    Json rate = Json::array();
    for (const auto &s : verify_rate_bound(p, o, h, lookup)) {
      if (s.verdict == StepVerdict::Violated)
        violate(h.i, s.j, "error reduction exceeds the rate bound");
      rate.push_back({{"j", s.j}, {"epsilon", s.epsilon}, {"next_epsilon", s.next_epsilon},
                      {"bound_factor", s.verdict == StepVerdict::Skipped ? Json(nullptr)
                                                                         : Json(s.bound_factor)},
                      {"margin", s.margin}, {"verdict", verdict_json(s.verdict)},
                      {"note", s.note}});
    }
    t["rate_bound"] = rate;

    if (h.i < static_cast<std::size_t>(o.size())) {
      const ShiftReport shift_rep = shift_analysis(o, h);
      Json steps = Json::array();
      for (const auto &s : shift_rep.steps) {
        if (s.kato == StepVerdict::Violated)
          violate(h.i, s.j, "Kato-Temple inequality fails");
        if (s.beta_below == StepVerdict::Violated)
          violate(h.i, s.j, "shift beta not below the eigenvalue");
        steps.push_back({{"j", s.j}, {"kato", verdict_json(s.kato)},
                         {"kato_lhs", s.kato_lhs}, {"kato_rhs", s.kato_rhs},
                         {"conditions", s.conditions},
                         {"beta", s.in_interval ? Json(s.beta) : Json(nullptr)},
                         {"beta_below", verdict_json(s.beta_below)},
                         {"rate_term", s.rate_term ? Json(*s.rate_term) : Json(nullptr)},
                         {"note", s.note}});
      }
      t["shift"] = {{"Delta_i", std::isfinite(shift_rep.Delta_i) ? Json(shift_rep.Delta_i) : Json(nullptr)},
                    {"c", std::isfinite(shift_rep.c) ? Json(shift_rep.c) : Json(nullptr)},
                    {"rate_term_decreasing", shift_rep.rate_term_decreasing
                                                 ? Json(*shift_rep.rate_term_decreasing)
                                                 : Json(nullptr)},
                    {"beta_converging",
                     shift_rep.beta_converging ? Json(*shift_rep.beta_converging) : Json(nullptr)},
                    {"steps", steps}};
    }
    targets.push_back(std::move(t));
  }
  report["targets"] = std::move(targets);
  report["violations"] = violations;
  report["passed"] = violations.empty();
  if (!report_path.empty())
    write_json_file(report, report_path);
  for (const auto &v : violations)
    std::cout << "VIOLATION " << v << '\n';
  std::cout << (violations.empty() ? "all applicable bounds hold\n"
                                   : std::to_string(violations.size()) + " violation(s)\n");
  return violations.empty() ? exit_ok : exit_violation;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"PSD-id sparse generalized eigensolver"};
  app.require_subcommand(1);

  ProblemArgs gen_problem;
  std::string gen_out = ".";
  CLI::App *gen = app.add_subcommand("generate", "write an oscillator pencil as Matrix Market");
  gen_problem.add(gen);
  gen->add_option("--out", gen_out, "output directory");

  ProblemArgs solve_problem;
  SolveArgs sa;
  CLI::App *solve = app.add_subcommand("solve", "compute the smallest eigenpairs");
  solve->add_option("files", sa.files, "H.mtx S.mtx");
  solve_problem.add(solve);
  solve->add_option("--nev", sa.nev, "number of eigenpairs");
  solve->add_option("--ell", sa.ell, "extra Ritz vectors");
  solve->add_option("--tol", sa.tol, "relative residual tolerance");
  solve->add_option("--seed", sa.seed, "random seed");
  solve->add_option("--precond", sa.precond, "switching, fixed-shift or identity");
  solve->add_option("--exact", sa.exact,
                    "apply a dense exact preconditioner instead: accelerated, fixed-shift, "
                    "target-shift or identity");
  solve->add_option("--max-iter", sa.max_iter, "outer iteration cap per target");
  solve->add_option("--sigma", sa.sigma, "global shift below the smallest eigenvalue");
  solve->add_flag("--deterministic", sa.deterministic, "zero wallclock and omit timestamps");
  solve->add_flag("--oracle-checks", sa.oracle_checks, "compare targets with the dense oracle");
  solve->add_option("--json", sa.json_out, "history JSON output");
  solve->add_option("--csv", sa.csv_out, "history CSV output");

  std::vector<std::string> verify_files;
  std::string verify_history, verify_report;
  CLI::App *verify = app.add_subcommand("verify", "check a history against the convergence bounds");
  verify->add_option("files", verify_files, "H.mtx S.mtx")->required();
  verify->add_option("--history", verify_history, "history JSON")->required();
  verify->add_option("--report", verify_report, "report JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (gen->parsed())
      return cmd_generate(gen_problem, gen_out);
    if (solve->parsed()) {
      sa.use_problem = solve->count("--problem") + solve->count("--disc") +
                           solve->count("--elems") > 0;
      return cmd_solve(sa, solve_problem, join_args(argc, argv));
    }
    if (verify->parsed())
      return cmd_verify(verify_files, verify_history, verify_report);
  } catch (const NumericalError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_breakdown;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  }
  return exit_usage;
}
