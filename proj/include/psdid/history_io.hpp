#pragma once

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "psdid/format.hpp"
#include "psdid/solver.hpp"

namespace psdid {

inline constexpr std::string_view library_version = "1.0.0";

using Json = nlohmann::json;

struct InputFile {
  std::string path;
  std::string sha256; // lowercase hex
};

/// Provenance of a run. In deterministic mode the timestamps are omitted so
/// identical runs serialize to identical bytes.
struct RunManifest {
  std::string command;
  Json config = Json::object();
  std::vector<InputFile> inputs;
  std::uint64_t seed = 0;
  std::string version{library_version};
  std::optional<std::string> started;
  std::optional<std::string> finished;
};

inline Json to_json(const SolverConfig &cfg) {
  Json j;
  j["nev"] = cfg.nev;
  j["extra_ritz"] = cfg.extra_ritz;
  j["eig_tolerance"] = cfg.eig_tolerance;
  j["localization_res_threshold"] = cfg.localization_res_threshold;
  j["max_outer_iterations"] = cfg.max_outer_iterations;
  j["rng_seed"] = cfg.rng_seed;
  j["oracle_checks"] = cfg.oracle_checks;
  j["policy"] = std::string(to_string(cfg.policy));
  j["sigma"] = cfg.sigma ? Json(*cfg.sigma) : Json(nullptr);
  j["fixed_shift_tolerance"] = cfg.fixed_shift_tolerance;
  j["minres_max_iterations"] = cfg.minres_max_iterations;
  j["max_restarts"] = cfg.max_restarts;
  j["deterministic"] = cfg.deterministic;
  return j;
}

inline Json to_json(const RunManifest &m) {
  Json j;
  j["command"] = m.command;
  j["config"] = m.config;
  Json inputs = Json::array();
  for (const auto &f : m.inputs)
    inputs.push_back({{"path", f.path}, {"sha256", f.sha256}});
  j["inputs"] = std::move(inputs);
  j["seed"] = m.seed;
  j["version"] = m.version;
  if (m.started)
    j["started"] = *m.started;
  if (m.finished)
    j["finished"] = *m.finished;
  return j;
}

inline Json to_json(const IterateState &s) {
  Json j;
  j["j"] = s.j;
  j["lambda"] = s.lambda;
  j["res"] = s.res;
  j["r_s_inv_norm"] = s.r_s_inv_norm;
  j["localized"] = s.localized;
  j["shift"] = s.shift_used ? Json(*s.shift_used) : Json(nullptr);
  j["minres_iters"] = s.minres_iters;
  j["wallclock"] = s.wallclock;
  j["precond"] = s.precond;
  j["ritz_values"] = s.ritz_values;
  j["deflation_error"] = s.deflation_error;
  return j;
}

inline Json to_json(const ConvergenceHistory &h) {
  Json j;
  j["i"] = h.i;
  j["final"] = {{"value", h.final.value}, {"residual", h.final_residual}};
  j["termination"] = std::string(to_string(h.termination));
  j["restarts"] = h.restarts;
  j["warnings"] = h.warnings;
  Json its = Json::array();
  for (const auto &s : h.iterates)
    its.push_back(to_json(s));
  j["iterates"] = std::move(its);
  return j;
}

/// Top-level history document: {manifest, sigma, targets: [...]}.
inline Json history_document(const RunManifest &m, const SolveResult &r) {
  Json j;
  j["manifest"] = to_json(m);
  j["sigma"] = r.sigma;
  Json targets = Json::array();
  for (const auto &h : r.histories)
    targets.push_back(to_json(h));
  j["targets"] = std::move(targets);
  return j;
}

namespace detail {

template <typename T>
T json_field(const Json &j, const char *key, const char *where) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError(std::string(where) + ": missing field '" + key + "'", 0);
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception &e) {
    throw ParseError(std::string(where) + ": field '" + key + "': " + e.what(), 0);
  }
}

} // namespace detail

inline IterateState iterate_from_json(const Json &j, std::size_t i) {
  IterateState s;
  s.i = i;
  s.j = detail::json_field<std::size_t>(j, "j", "iterate");
  s.lambda = detail::json_field<double>(j, "lambda", "iterate");
  s.res = detail::json_field<double>(j, "res", "iterate");
  s.r_s_inv_norm = detail::json_field<double>(j, "r_s_inv_norm", "iterate");
  s.localized = detail::json_field<bool>(j, "localized", "iterate");
  if (!j.contains("shift"))
    throw ParseError("iterate: missing field 'shift'", 0);
  if (!j.at("shift").is_null())
    s.shift_used = detail::json_field<double>(j, "shift", "iterate");
  s.minres_iters = detail::json_field<std::size_t>(j, "minres_iters", "iterate");
  s.wallclock = detail::json_field<double>(j, "wallclock", "iterate");
  if (j.contains("precond"))
    s.precond = detail::json_field<std::string>(j, "precond", "iterate");
  if (j.contains("ritz_values"))
    s.ritz_values = detail::json_field<std::vector<double>>(j, "ritz_values", "iterate");
  if (j.contains("deflation_error"))
    s.deflation_error = detail::json_field<double>(j, "deflation_error", "iterate");
  return s;
}

/// Histories from a document written by history_document. Final vectors are
/// not stored and come back empty.
inline std::vector<ConvergenceHistory> histories_from_json(const Json &doc) {
  if (!doc.is_object() || !doc.contains("targets") || !doc.at("targets").is_array())
    throw ParseError("history: missing 'targets' array", 0);
  std::vector<ConvergenceHistory> out;
  for (const Json &t : doc.at("targets")) {
    ConvergenceHistory h;
    h.i = detail::json_field<std::size_t>(t, "i", "target");
    if (h.i < 1)
      throw ParseError("target: index must be >= 1", 0);
    const Json fin = detail::json_field<Json>(t, "final", "target");
    h.final.value = detail::json_field<double>(fin, "value", "final");
    h.final_residual = detail::json_field<double>(fin, "residual", "final");
    h.termination = parse_termination(detail::json_field<std::string>(t, "termination", "target"));
    if (t.contains("restarts"))
      h.restarts = detail::json_field<std::size_t>(t, "restarts", "target");
    if (t.contains("warnings"))
      h.warnings = detail::json_field<std::vector<std::string>>(t, "warnings", "target");
    const Json its = detail::json_field<Json>(t, "iterates", "target");
    if (!its.is_array())
      throw ParseError("target: 'iterates' is not an array", 0);
    for (const Json &s : its)
      h.iterates.push_back(iterate_from_json(s, h.i));
    out.push_back(std::move(h));
  }
  return out;
}

inline Json read_json_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open '" + path + "' for reading");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error &e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

/// Two-space indented JSON with a trailing newline.
inline void write_json_file(const Json &j, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out)
    throw Error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// CSV, one row per iterate

inline constexpr std::string_view csv_header =
    "i,j,lambda,res,r_s_inv_norm,localized,shift,minres_iters,wallclock,precond,"
    "deflation_error,ritz_values";

inline void write_history_csv(const std::vector<ConvergenceHistory> &hs, std::ostream &out) {
  out << csv_header << '\n';
  for (const auto &h : hs)
    for (const auto &s : h.iterates) {
      out << h.i << ',' << s.j << ',' << shortest_decimal(s.lambda) << ','
          << shortest_decimal(s.res) << ',' << shortest_decimal(s.r_s_inv_norm) << ','
          << (s.localized ? 1 : 0) << ',' << (s.shift_used ? shortest_decimal(*s.shift_used) : "")
          << ',' << s.minres_iters << ',' << shortest_decimal(s.wallclock) << ',' << s.precond
          << ',' << shortest_decimal(s.deflation_error) << ',';
      for (std::size_t k = 0; k < s.ritz_values.size(); ++k)
        out << (k ? ";" : "") << shortest_decimal(s.ritz_values[k]);
      out << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split(const std::string &line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep))
    out.push_back(cur);
  if (!line.empty() && line.back() == sep)
    out.emplace_back();
  return out;
}

inline double csv_double(const std::string &s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("csv: bad number '" + s + "'", line);
  return v;
}

inline std::size_t csv_count(const std::string &s, std::size_t line) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError("csv: bad count '" + s + "'", line);
  return static_cast<std::size_t>(std::stoull(s));
}

} // namespace detail

/// Iterates grouped by target in file order. Final pairs and termination are
/// not in the CSV and stay at their defaults.
inline std::vector<ConvergenceHistory> read_history_csv(std::istream &in) {
  std::string line;
  if (!std::getline(in, line) || line != csv_header)
    throw ParseError("csv: unexpected header", 1);
  std::vector<ConvergenceHistory> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 12)
      throw ParseError("csv: expected 12 fields, got " + std::to_string(f.size()), lineno);
    IterateState s;
    s.i = detail::csv_count(f[0], lineno);
    s.j = detail::csv_count(f[1], lineno);
    s.lambda = detail::csv_double(f[2], lineno);
    s.res = detail::csv_double(f[3], lineno);
    s.r_s_inv_norm = detail::csv_double(f[4], lineno);
    if (f[5] != "0" && f[5] != "1")
      throw ParseError("csv: localized must be 0 or 1", lineno);
    s.localized = f[5] == "1";
    if (!f[6].empty())
      s.shift_used = detail::csv_double(f[6], lineno);
    s.minres_iters = detail::csv_count(f[7], lineno);
    s.wallclock = detail::csv_double(f[8], lineno);
    s.precond = f[9];
    s.deflation_error = detail::csv_double(f[10], lineno);
    if (!f[11].empty())
      for (const auto &v : detail::split(f[11], ';'))
        s.ritz_values.push_back(detail::csv_double(v, lineno));
    if (out.empty() || out.back().i != s.i) {
      out.emplace_back();
      out.back().i = s.i;
    }
    out.back().iterates.push_back(std::move(s));
  }
  return out;
}

} // namespace psdid
