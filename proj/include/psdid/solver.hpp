#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "psdid/dense_oracle.hpp"
#include "psdid/format.hpp"
#include "psdid/localization.hpp"
#include "psdid/preconditioner.hpp"
#include "psdid/rayleigh_ritz.hpp"

namespace psdid {

/// Which preconditioner the production driver applies.
///  Switching:  K_sigma until localized, then the locally accelerated one.
///  FixedShift: K_sigma throughout.
///  Identity:   K = I throughout.
enum class PreconditionerPolicy { Switching, FixedShift, Identity };

inline std::string_view to_string(PreconditionerPolicy p) {
  switch (p) {
  case PreconditionerPolicy::Switching: return "switching";
  case PreconditionerPolicy::FixedShift: return "fixed-shift";
  case PreconditionerPolicy::Identity: return "identity";
  }
  return "?";
}

inline PreconditionerPolicy parse_policy(std::string_view name) {
  if (name == "switching") return PreconditionerPolicy::Switching;
  if (name == "fixed-shift") return PreconditionerPolicy::FixedShift;
  if (name == "identity") return PreconditionerPolicy::Identity;
  throw UsageError("unknown preconditioner policy '" + std::string(name) +
                   "' (expected switching, fixed-shift or identity)");
}

enum class Termination { Converged, MaxIterations, Breakdown };

inline std::string_view to_string(Termination t) {
  switch (t) {
  case Termination::Converged: return "Converged";
  case Termination::MaxIterations: return "MaxIterations";
  case Termination::Breakdown: return "Breakdown";
  }
  return "?";
}

inline Termination parse_termination(std::string_view name) {
  if (name == "Converged") return Termination::Converged;
  if (name == "MaxIterations") return Termination::MaxIterations;
  if (name == "Breakdown") return Termination::Breakdown;
  throw ParseError("unknown termination '" + std::string(name) + "'", 0);
}

struct SolverConfig {
  std::size_t nev = 4;
  std::size_t extra_ritz = 4;
  double eig_tolerance = 1e-9;
  double localization_res_threshold = 0.1;
  std::size_t max_outer_iterations = 500;
  std::uint64_t rng_seed = 0;
  /// Also compare against the dense oracle (restart on a mismatch, warn on
  /// values below the exact eigenvalue). Without it misconvergence is detected
  /// by an inertia count only.
  bool oracle_checks = false;
  PreconditionerPolicy policy = PreconditionerPolicy::Switching;
  /// Global shift; when unset it is derived from the first target's iterates.
  std::optional<double> sigma;
  /// MINRES tolerance for K_sigma solves.
  double fixed_shift_tolerance = 1e-2;
  std::size_t minres_max_iterations = 200;
  std::size_t max_restarts = 2;
  /// Record wallclock as 0 so repeated runs serialize identically.
  bool deterministic = false;

  void validate(std::size_t n) const {
    if (nev < 1)
      throw UsageError("solver: nev must be >= 1");
    if (nev + extra_ritz > n)
      throw UsageError("solver: nev + extra_ritz = " + std::to_string(nev + extra_ritz) +
                       " exceeds the pencil order " + std::to_string(n));
    if (!(eig_tolerance > 0.0))
      throw UsageError("solver: eig_tolerance must be positive");
    if (!(eig_tolerance < localization_res_threshold))
      throw UsageError("solver: eig_tolerance must be below the localization threshold");
    if (max_outer_iterations < 1)
      throw UsageError("solver: max_outer_iterations must be >= 1");
    if (!(fixed_shift_tolerance > 0.0 && fixed_shift_tolerance < 1.0))
      throw UsageError("solver: fixed_shift_tolerance must lie in (0, 1)");
    if (minres_max_iterations < 1)
      throw UsageError("solver: minres_max_iterations must be >= 1");
    if (sigma && !std::isfinite(*sigma))
      throw UsageError("solver: sigma must be finite");
  }
};

/// One outer iterate. Step data (precond, shift_used, minres_iters) describe the
/// step that produced this iterate; iterate 0 has none. `localized` is the
/// latched state after this iterate, so it selects the next step's preconditioner.
struct IterateState {
  std::size_t i = 1;
  std::size_t j = 0;
  double lambda = 0.0;
  Vector u;
  double res = 1.0;
  double r_s_inv_norm = 0.0;
  std::optional<double> shift_used;
  bool localized = false;
  /// lambda_{i;j}, lambda_{i+1;j}, ... from the projected solve.
  std::vector<double> ritz_values;
  std::size_t minres_iters = 0;
  double wallclock = 0.0;
  std::string precond = "none";
  /// max_k |u_k^T S u| over the accepted vectors.
  double deflation_error = 0.0;
};

struct ConvergenceHistory {
  std::size_t i = 1;
  std::vector<IterateState> iterates;
  EigPair final;
  double final_residual = 1.0;
  Termination termination = Termination::MaxIterations;
  std::size_t restarts = 0;
  std::vector<std::string> warnings;

  /// Index of the first localized iterate, if any.
  std::optional<std::size_t> localization_index() const {
    for (std::size_t k = 0; k < iterates.size(); ++k)
      if (iterates[k].localized)
        return k;
    return std::nullopt;
  }
};

/// Working state carried between steps.
struct StepState {
  IterateState state;
  Vector r;
  /// Ritz vectors i+1 .. i+l of the last projected solve.
  Matrix extras;
};

/// Direction p_{i;j} together with what produced it.
struct StepDirection {
  Vector p;
  std::size_t minres_iters = 0;
  std::optional<double> shift;
  std::string precond;
};

struct DirectionContext {
  const Pencil &pencil;
  std::size_t i;
  const IterateState &state;
  const Vector &r;
  bool localized;
  /// The previous step left the Ritz value unchanged.
  bool stalled;
  double sigma;
};

using DirectionProvider = std::function<StepDirection(const DirectionContext &)>;

namespace detail {

inline StepState state_from_ritz(const Pencil &p, std::size_t i, const Matrix &u_prev,
                                 const RitzPairs &rr) {
  StepState st;
  st.state.i = i;
  st.state.lambda = rr.values(0);
  st.state.u = rr.vectors.col(0);
  st.state.ritz_values.assign(rr.values.data(), rr.values.data() + rr.values.size());
  st.extras = rr.vectors.rightCols(rr.values.size() - 1);
  st.r = residual(p, st.state.lambda, st.state.u);
  st.state.res = relative_residual(p, st.state.lambda, st.state.u);
  st.state.r_s_inv_norm = s_inv_norm(p, st.r);
  if (u_prev.cols() > 0)
    st.state.deflation_error = (u_prev.transpose() * (p.s() * st.state.u)).cwiseAbs().maxCoeff();
  return st;
}

} // namespace detail

/// Initial state for target i: Ritz pairs of [U_prev, X] (U_prev locked) with
/// X a block of 1 + l random columns.
inline StepState initial_state(const Pencil &p, const Matrix &u_prev, std::size_t extra_ritz,
                               std::mt19937_64 &rng) {
  const std::size_t i = static_cast<std::size_t>(u_prev.cols()) + 1;
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const auto cols = static_cast<Eigen::Index>(1 + extra_ritz);
  Matrix z(p.size(), u_prev.cols() + cols);
  z.leftCols(u_prev.cols()) = u_prev;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index k = 0; k < p.size(); ++k)
      z(k, u_prev.cols() + c) = dist(rng);
  const RitzPairs rr =
      rayleigh_ritz_locked(p, z, u_prev.cols(), 1, static_cast<Eigen::Index>(extra_ritz));
  return detail::state_from_ritz(p, i, u_prev, rr);
}

/// One outer step: Rayleigh-Ritz on Z = [U_prev, u, extras, p] with U_prev
/// locked, keeping the i-th pair as the new iterate and the next l pairs as
/// extras.
inline StepState psdid_step(const Pencil &p, const Matrix &u_prev, const StepState &cur,
                            const StepDirection &dir) {
  const std::size_t i = cur.state.i;
  if (static_cast<std::size_t>(u_prev.cols()) + 1 != i)
    throw UsageError("psdid_step: U_prev must hold i - 1 columns");
  p.check_size(dir.p, "psdid_step");
  if (!dir.p.allFinite())
    throw BreakdownError("psdid_step: non-finite search direction");
  const Eigen::Index extra = cur.extras.cols();
  Matrix z(p.size(), u_prev.cols() + 2 + extra);
  z << u_prev, cur.state.u, cur.extras, dir.p;
  const RitzPairs rr = rayleigh_ritz_locked(p, z, u_prev.cols(), 1, extra);
  StepState next = detail::state_from_ritz(p, i, u_prev, rr);
  next.state.j = cur.state.j + 1;
  next.state.localized = cur.state.localized;
  next.state.shift_used = dir.shift;
  next.state.minres_iters = dir.minres_iters;
  next.state.precond = dir.precond;
  return next;
}

/// Same step with the direction -K r from a preconditioner spec. For
/// LocallyAccelerated the shift is lambda_{i;j} and the inner tolerance is
/// Res[lambda_{i;j}, u_{i;j}].
inline StepState psdid_step(const Pencil &p, const Matrix &u_prev, const StepState &cur,
                            const PreconditionerSpec &spec) {
  std::optional<double> eta;
  if (spec.kind == PreconditionerKind::LocallyAccelerated)
    eta = cur.state.res;
  PreconditionedDirection d = apply_preconditioner(spec, p, cur.state.lambda, cur.r, eta);
  StepDirection dir{std::move(d.direction), d.inner ? d.inner->iterations : 0, d.shift,
                    std::string(to_string(spec.kind))};
  return psdid_step(p, u_prev, cur, dir);
}

/// The production direction for a configuration.
inline DirectionProvider default_direction(const SolverConfig &cfg) {
  return [cfg](const DirectionContext &ctx) {
    MinresConfig inner;
    inner.max_iterations = cfg.minres_max_iterations;
    inner.preconditioner = MinresPreconditioner::SInverse;
    PreconditionerSpec spec;
    std::optional<double> eta;
    if (cfg.policy == PreconditionerPolicy::Identity) {
      spec = PreconditionerSpec::identity();
    } else if (cfg.policy == PreconditionerPolicy::Switching && ctx.localized && !ctx.stalled) {
      spec = PreconditionerSpec::locally_accelerated(inner);
      eta = ctx.state.res;
    } else {
      inner.rel_tolerance = cfg.fixed_shift_tolerance;
      spec = PreconditionerSpec::fixed_shift(ctx.sigma, inner);
    }
    PreconditionedDirection d = apply_preconditioner(spec, ctx.pencil, ctx.state.lambda, ctx.r, eta);
    return StepDirection{std::move(d.direction), d.inner ? d.inner->iterations : 0, d.shift,
                         std::string(to_string(spec.kind))};
  };
}

/// Global shift bookkeeping shared across targets.
struct ShiftState {
  double sigma = 0.0;
  bool set = false;
  /// Lowered while target 1 runs; fixed when supplied by the caller.
  bool adaptive = true;
};

struct TargetRequest {
  std::size_t i = 1;
  /// Accepted lambda_{i-1}; unused for i = 1.
  double previous_value = 0.0;
  std::uint64_t seed = 0;
};

using Clock = std::chrono::steady_clock;

/// Runs the outer iteration for target i against the accepted vectors U_prev.
inline ConvergenceHistory solve_target(const Pencil &p, const Matrix &u_prev,
                                       const TargetRequest &req, ShiftState &shift,
                                       const SolverConfig &cfg, const DirectionProvider &direction,
                                       Clock::time_point start = Clock::now()) {
  const std::size_t i = req.i;
  if (static_cast<std::size_t>(u_prev.cols()) + 1 != i)
    throw UsageError("solve_target: U_prev must hold i - 1 columns");
  std::seed_seq seq{static_cast<std::uint32_t>(req.seed), static_cast<std::uint32_t>(req.seed >> 32),
                    static_cast<std::uint32_t>(i)};
  std::mt19937_64 rng(seq);

  ConvergenceHistory hist;
  hist.i = i;
  const auto stamp = [&](IterateState &s) {
    s.wallclock = cfg.deterministic
                      ? 0.0
                      : std::chrono::duration<double>(Clock::now() - start).count();
  };
  const auto lower_sigma = [&](const IterateState &s) {
    if (i != 1 || !shift.adaptive)
      return;
    const double bound = s.lambda - s.r_s_inv_norm;
    if (!shift.set || bound < shift.sigma) {
      shift.sigma = bound;
      shift.set = true;
    }
  };

  StepState cur;
  try {
    cur = initial_state(p, u_prev, cfg.extra_ritz, rng);
  } catch (const NumericalError &e) {
    hist.termination = Termination::Breakdown;
    hist.warnings.push_back(std::string("initial block: ") + e.what());
    return hist;
  }
  if (i == 1 && shift.adaptive && !shift.set) {
    shift.sigma = cur.state.lambda - cur.r.norm();
    shift.set = true;
  }

  LocalizationState loc;
  bool stalled = false;
  if (cfg.extra_ritz == 0 && cfg.policy == PreconditionerPolicy::Switching)
    hist.warnings.push_back("no extra Ritz vectors: lambda_{i+1} unavailable, localization disabled");

  for (;;) {
    stamp(cur.state);
    hist.iterates.push_back(cur.state);
    if (cur.state.res <= cfg.eig_tolerance) {
      hist.termination = Termination::Converged;
      break;
    }
    if (cur.state.j >= cfg.max_outer_iterations) {
      hist.termination = Termination::MaxIterations;
      break;
    }
    lower_sigma(cur.state);
    StepState next;
    try {
      const DirectionContext ctx{p, i, cur.state, cur.r, cur.state.localized, stalled, shift.sigma};
      next = psdid_step(p, u_prev, cur, direction(ctx));
    } catch (const NumericalError &e) {
      hist.termination = Termination::Breakdown;
      hist.warnings.push_back("iteration " + std::to_string(cur.state.j + 1) + ": " + e.what());
      break;
    }
    if (next.state.lambda > cur.state.lambda + 1e-14 * std::abs(cur.state.lambda))
      hist.warnings.push_back("iteration " + std::to_string(next.state.j) +
                              ": Ritz value increased");
    // An exact inner solve at shift lambda returns p = -u, which adds nothing
    // to the basis; one step with K_sigma breaks the cycle.
    const double eps = std::numeric_limits<double>::epsilon();
    stalled = next.state.res > cfg.eig_tolerance &&
              next.state.lambda >= cur.state.lambda - 4.0 * eps * std::abs(cur.state.lambda);
    if (stalled)
      hist.warnings.push_back("iteration " + std::to_string(next.state.j) +
                              ": no decrease; next step uses the global shift");
    if (cfg.extra_ritz > 0 && next.state.ritz_values.size() > 1) {
      LocalizationInput in;
      in.j = next.state.j;
      in.res = next.state.res;
      in.lambda = next.state.lambda;
      in.prev_lambda = cur.state.lambda;
      in.next_ritz = next.state.ritz_values[1];
      in.lower_anchor = i == 1 ? shift.sigma : req.previous_value;
      in.tau1 = cfg.localization_res_threshold;
      next.state.localized = localization_test(loc, in);
    }
    cur = std::move(next);
  }
  hist.warnings.insert(hist.warnings.end(), loc.warnings.begin(), loc.warnings.end());
  hist.final = {cur.state.lambda, cur.state.u};
  hist.final_residual = cur.state.res;
  return hist;
}

struct SolveResult {
  std::vector<EigPair> pairs;
  std::vector<ConvergenceHistory> histories;
  double sigma = 0.0;

  bool all_converged() const {
    for (const auto &h : histories)
      if (h.termination != Termination::Converged)
        return false;
    return !histories.empty();
  }
};

/// The nev smallest eigenpairs, one target at a time, each deflated against
/// the previously accepted vectors. Stops at the first target that fails.
inline SolveResult solve_smallest(const Pencil &p, const SolverConfig &cfg,
                                  DirectionProvider direction = {}) {
  cfg.validate(p.n());
  if (!direction)
    direction = default_direction(cfg);
  std::optional<OracleDecomposition> oracle;
  if (cfg.oracle_checks)
    oracle = dense_gev_oracle(p);

  ShiftState shift;
  if (cfg.sigma) {
    shift.sigma = *cfg.sigma;
    shift.set = true;
    shift.adaptive = false;
  }
  const auto start = Clock::now();
  SolveResult out;
  Matrix u_prev(p.size(), 0);
  for (std::size_t i = 1; i <= cfg.nev; ++i) {
    const double prev_value = out.pairs.empty() ? 0.0 : out.pairs.back().value;
    ConvergenceHistory hist;
    std::vector<std::string> carried;
    for (std::size_t attempt = 0;; ++attempt) {
      TargetRequest req{i, prev_value, cfg.rng_seed + 0x9e3779b97f4a7c15ULL * attempt};
      hist = solve_target(p, u_prev, req, shift, cfg, direction, start);
      hist.restarts = attempt;
      if (hist.termination != Termination::Converged)
        break;
      std::string reason;
      // a target that converged to a higher eigenvalue leaves more than i
      // eigenvalues below it
      const double value = hist.final.value;
      const double margin = std::max(1e-8 * std::max(1.0, std::abs(value)),
                                     4.0 * hist.iterates.back().r_s_inv_norm);
      const std::size_t below = eigenvalue_count_below(p, value + margin);
      if (below != i)
        reason = std::to_string(below) + " eigenvalues lie below the converged value " +
                 shortest_decimal(value) + " (expected " + std::to_string(i) + ")";
      if (oracle) {
        const double exact = oracle->values(static_cast<Eigen::Index>(i - 1));
        if (std::abs(value - exact) > 1e-8 * std::max(1.0, std::abs(exact)))
          reason = "value differs from the dense oracle's eigenvalue " + shortest_decimal(exact);
        for (const auto &s : hist.iterates)
          if (s.lambda < exact - 1e-9 * std::abs(exact))
            hist.warnings.push_back("iteration " + std::to_string(s.j) +
                                    ": Ritz value below the exact eigenvalue");
      }
      if (reason.empty() || attempt >= cfg.max_restarts) {
        if (!reason.empty())
          hist.warnings.push_back("accepted after " + std::to_string(attempt) +
                                  " restarts despite: " + reason);
        break;
      }
      carried.push_back("attempt " + std::to_string(attempt) + " restarted: " + reason);
    }
    hist.warnings.insert(hist.warnings.begin(), carried.begin(), carried.end());
    const bool ok = hist.termination == Termination::Converged;
    if (ok) {
      out.pairs.push_back(hist.final);
      u_prev.conservativeResize(Eigen::NoChange, u_prev.cols() + 1);
      u_prev.col(u_prev.cols() - 1) = hist.final.vector;
    }
    out.histories.push_back(std::move(hist));
    if (!ok)
      break;
  }
  out.sigma = shift.sigma;
  return out;
}

} // namespace psdid
