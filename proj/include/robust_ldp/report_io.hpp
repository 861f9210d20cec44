#pragma once

// JSON chain files and machine-readable reports.
//
// Chain file keys: "states", "metric" (matrix or "discrete"), "pi0",
// "kernel", "r". Reports carry "schema_version": "1"; infinite values are
// written as the string "inf" because JSON has no infinity.

#include "robust_ldp/chain_core.hpp"
#include "robust_ldp/montecarlo.hpp"
#include "robust_ldp/rate_solver.hpp"
#include "robust_ldp/set_chain.hpp"
#include "robust_ldp/transport.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>

namespace robust_ldp {

using json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";

/// Malformed input; `path` is a JSON pointer into the offending document
/// (empty for command-line values).
class InputError : public std::invalid_argument {
 public:
  InputError(std::string path, const std::string& what)
      : std::invalid_argument(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

namespace detail {

inline std::string pointer(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

inline double number_at(const json& j, const std::string& path) {
  if (!j.is_number()) throw InputError(path, "expected a number");
  return j.get<double>();
}

inline Vector vector_at(const json& j, const std::string& path, Index n) {
  if (!j.is_array()) throw InputError(path, "expected an array");
  if (static_cast<Index>(j.size()) != n) {
    throw InputError(path, "expected " + std::to_string(n) + " entries, found " + std::to_string(j.size()));
  }
  Vector v(n);
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number_at(j[i], pointer(path, i));
  return v;
}

inline Matrix matrix_at(const json& j, const std::string& path, Index n) {
  if (!j.is_array()) throw InputError(path, "expected an array of rows");
  if (static_cast<Index>(j.size()) != n) {
    throw InputError(path, "expected " + std::to_string(n) + " rows, found " + std::to_string(j.size()));
  }
  Matrix m(n, n);
  for (std::size_t i = 0; i < j.size(); ++i) m.row(static_cast<Index>(i)) = vector_at(j[i], pointer(path, i), n);
  return m;
}

/// Rows within kProbabilityTolerance of summing to one are rescaled exactly.
inline Vector snap_distribution(Vector p) {
  const double s = p.sum();
  if (std::abs(s - 1.0) <= kProbabilityTolerance && s > 0.0) p /= s;
  return p;
}

/// Maps a validate_chain location such as "kernel[2][3]" or "dist(1,2)" to a
/// JSON pointer into the chain file.
inline std::string violation_pointer(const std::string& where) {
  std::smatch m;
  static const std::regex indexed(R"(^(pi0|kernel)((?:\[\d+\])*)$)");
  static const std::regex pair(R"(^dist\((\d+),(\d+)\)$)");
  if (std::regex_match(where, m, indexed)) {
    std::string out = "/" + m[1].str();
    static const std::regex idx(R"(\[(\d+)\])");
    const std::string tail = m[2].str();
    for (std::sregex_iterator it(tail.begin(), tail.end(), idx), end; it != end; ++it) {
      out += "/" + std::to_string(std::stoi((*it)[1].str()) - 1);
    }
    return out;
  }
  if (std::regex_match(where, m, pair)) {
    return "/metric/" + std::to_string(std::stoi(m[1].str()) - 1) + "/" + std::to_string(std::stoi(m[2].str()) - 1);
  }
  if (where == "r") return "/r";
  if (where.starts_with("triangle") || where.starts_with("space")) return "/metric";
  return "/" + where;
}

inline json number_or_inf(double v) { return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : "-inf"); }

inline double number_or_inf(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    throw InputError("", "expected a number or \"inf\", found \"" + s + "\"");
  }
  return j.get<double>();
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix matrix_from(const json& j) {
  const auto r = static_cast<Index>(j.size());
  const auto c = r > 0 ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index k = 0; k < c; ++k) m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

inline void check_schema(const json& j) {
  if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion) {
    throw InputError("/schema_version", std::string("expected schema version ") + kSchemaVersion);
  }
}

}  // namespace detail

/// Parses a chain file document. Throws InputError naming the first problem.
inline ChainSpec parse_chain_spec(const json& doc) {
  if (!doc.is_object()) throw InputError("", "chain file must be a JSON object");
  for (const char* key : {"states", "metric", "pi0", "kernel", "r"}) {
    if (!doc.contains(key)) throw InputError(std::string("/") + key, "missing key");
  }
  const json& states = doc["states"];
  if (!states.is_array() || states.empty()) throw InputError("/states", "expected a nonempty array of strings");
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!states[i].is_string()) throw InputError(detail::pointer("/states", i), "expected a string");
    labels.push_back(states[i].get<std::string>());
    for (std::size_t k = 0; k < i; ++k) {
      if (labels[k] == labels[i]) throw InputError(detail::pointer("/states", i), "duplicate state label");
    }
  }
  const auto n = static_cast<Index>(labels.size());

  ChainSpec spec;
  const json& metric = doc["metric"];
  if (metric.is_string()) {
    if (metric.get<std::string>() != "discrete") throw InputError("/metric", "the only named metric is \"discrete\"");
    spec.space = MetricSpace::discrete(n);
  } else {
    spec.space = MetricSpace::from_matrix(detail::matrix_at(metric, "/metric", n));
  }
  spec.space.labels = labels;

  spec.pi0 = Dist(detail::snap_distribution(detail::vector_at(doc["pi0"], "/pi0", n)));
  Matrix k = detail::matrix_at(doc["kernel"], "/kernel", n);
  for (Index x = 0; x < n; ++x) k.row(x) = detail::snap_distribution(k.row(x).transpose()).transpose();
  spec.kernel = Kernel(std::move(k));
  spec.radius = detail::number_at(doc["r"], "/r");

  const auto problems = validate_chain(spec);
  if (!problems.empty()) {
    const auto& v = problems.front();
    throw InputError(detail::violation_pointer(v.where), v.where + ": " + v.what);
  }
  return spec;
}

inline ChainSpec load_chain_spec(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw InputError("", "cannot open chain file " + file);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("", file + ": " + e.what());
  }
  return parse_chain_spec(doc);
}

inline json chain_spec_json(const ChainSpec& spec) {
  json j;
  j["states"] = spec.space.labels;
  j["metric"] = detail::matrix_json(spec.space.dist);
  j["pi0"] = detail::vector_json(spec.pi0.probs());
  j["kernel"] = detail::matrix_json(spec.kernel.matrix());
  j["r"] = spec.radius;
  return j;
}

/// A state label gives a point mass; otherwise comma-separated probabilities.
inline Dist parse_dist(const std::string& text, const std::vector<std::string>& labels) {
  const auto n = static_cast<Index>(labels.size());
  for (Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] == text) return Dist::dirac(n, i);
  }
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos) {
      throw InputError("", "'" + text + "' is neither a state label nor a list of probabilities");
    }
    vals.push_back(v);
  }
  if (static_cast<Index>(vals.size()) != n) {
    throw InputError("", "distribution '" + text + "' has " + std::to_string(vals.size()) + " entries, expected " +
                             std::to_string(n));
  }
  Vector p = Eigen::Map<Vector>(vals.data(), n);
  if (p.minCoeff() < 0.0 || std::abs(p.sum() - 1.0) > kProbabilityTolerance) {
    throw InputError("", "distribution '" + text + "' is not a probability vector");
  }
  return Dist(p / p.sum());
}

// Reports.

inline json to_json(const RateReport& r) {
  return {{"schema_version", kSchemaVersion},
          {"value", detail::number_or_inf(r.value)},
          {"nu_star", detail::vector_json(r.nu_star.probs())},
          {"q_star", detail::matrix_json(r.q_star.matrix())},
          {"pi_hat", detail::matrix_json(r.pi_hat.matrix())},
          {"kkt_residual", r.kkt_residual},
          {"marginal_residual", r.marginal_residual},
          {"invariance_residual", r.invariance_residual},
          {"converged", r.converged}};
}

inline RateReport rate_report_from_json(const json& j) {
  detail::check_schema(j);
  RateReport r;
  r.value = detail::number_or_inf(j.at("value"));
  r.nu_star = Dist(detail::vector_from(j.at("nu_star")));
  r.q_star = Kernel(detail::matrix_from(j.at("q_star")));
  r.pi_hat = Kernel(detail::matrix_from(j.at("pi_hat")));
  r.kkt_residual = j.at("kkt_residual").get<double>();
  r.marginal_residual = j.at("marginal_residual").get<double>();
  r.invariance_residual = j.at("invariance_residual").get<double>();
  r.converged = j.at("converged").get<bool>();
  return r;
}

inline json to_json(const Envelope& e) {
  return {{"schema_version", kSchemaVersion}, {"lo", detail::vector_json(e.lo)}, {"hi", detail::vector_json(e.hi)}};
}

inline Envelope envelope_from_json(const json& j) {
  detail::check_schema(j);
  return {detail::vector_from(j.at("lo")), detail::vector_from(j.at("hi"))};
}

inline json to_json(const FunctionalBound& b) {
  return {{"schema_version", kSchemaVersion}, {"max", b.max}, {"argmax", detail::vector_json(b.argmax.probs())}};
}

inline FunctionalBound functional_bound_from_json(const json& j) {
  detail::check_schema(j);
  return {j.at("max").get<double>(), Dist(detail::vector_from(j.at("argmax")))};
}

inline json to_json(const ConditionReport& c) {
  json j = {{"schema_version", kSchemaVersion},
            {"m1_holds", c.m1_holds},
            {"l0", c.l0 ? json(*c.l0) : json(nullptr)},
            {"n0", c.n0 ? json(*c.n0) : json(nullptr)},
            {"m2_holds", c.m2_holds},
            {"invariant", c.invariant ? detail::vector_json(c.invariant->probs()) : json(nullptr)},
            {"unique_invariant", c.unique_invariant},
            {"note", c.note}};
  return j;
}

inline ConditionReport condition_report_from_json(const json& j) {
  detail::check_schema(j);
  ConditionReport c;
  c.m1_holds = j.at("m1_holds").get<bool>();
  if (!j.at("l0").is_null()) c.l0 = j["l0"].get<int>();
  if (!j.at("n0").is_null()) c.n0 = j["n0"].get<int>();
  c.m2_holds = j.at("m2_holds").get<bool>();
  if (!j.at("invariant").is_null()) c.invariant = Dist(detail::vector_from(j["invariant"]));
  c.unique_invariant = j.at("unique_invariant").get<bool>();
  c.note = j.at("note").get<std::string>();
  return c;
}

inline json to_json(const RateEstimate& e) {
  json lnp = json::array();
  for (double p : e.p_hat) lnp.push_back(detail::number_or_inf(p > 0.0 ? std::log(p) : -kInfinity));
  return {{"schema_version", kSchemaVersion},
          {"lengths", e.lengths},
          {"hits", e.hits},
          {"p_hat", e.p_hat},
          {"ln_p_hat", lnp},
          {"paths_per_length", e.paths_per_length},
          {"slope", e.slope},
          {"intercept", e.intercept},
          {"stderr", e.std_error},
          {"usable_lengths", e.usable_lengths},
          {"fit_lengths", e.fit_lengths},
          {"usable", e.usable},
          {"status", e.status}};
}

inline RateEstimate rate_estimate_from_json(const json& j) {
  detail::check_schema(j);
  RateEstimate e;
  e.lengths = j.at("lengths").get<std::vector<int>>();
  e.hits = j.at("hits").get<std::vector<std::uint64_t>>();
  e.p_hat = j.at("p_hat").get<std::vector<double>>();
  e.paths_per_length = j.at("paths_per_length").get<std::uint64_t>();
  e.slope = j.at("slope").get<double>();
  e.intercept = j.at("intercept").get<double>();
  e.std_error = j.at("stderr").get<double>();
  e.usable_lengths = j.at("usable_lengths").get<std::vector<int>>();
  e.fit_lengths = j.at("fit_lengths").get<std::vector<int>>();
  e.usable = j.at("usable").get<bool>();
  e.status = j.at("status").get<std::string>();
  return e;
}

inline json to_json(const RateVerdict& v) {
  return {{"pass", v.pass},         {"status", v.status}, {"analytic", v.analytic},
          {"slope", v.slope},       {"stderr", v.std_error}, {"margin", v.margin}};
}

inline json to_json(const W1Result& w) {
  return {{"schema_version", kSchemaVersion},
          {"value", w.value},
          {"plan", detail::matrix_json(w.plan.gamma)},
          {"potential", detail::vector_json(w.potential.f)},
          {"duality_gap", w.duality_gap}};
}

}  // namespace robust_ldp
