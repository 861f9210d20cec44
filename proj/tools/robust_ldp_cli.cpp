// Command-line front end: condition checks, robust rates, envelopes, path
// simulation and Wasserstein distances for a chain described in a JSON file.

#include "robust_ldp/chain_core.hpp"
#include "robust_ldp/divergence.hpp"
#include "robust_ldp/montecarlo.hpp"
#include "robust_ldp/rate_solver.hpp"
#include "robust_ldp/report_io.hpp"
#include "robust_ldp/set_chain.hpp"
#include "robust_ldp/transport.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace {

using namespace robust_ldp;

enum Exit : int {
  kOk = 0,
  kInputError = 2,
  kConditionNotWitnessed = 3,
  kNotConverged = 4,
  kUnusableEstimate = 5,
};

struct Common {
  std::string chain;
  std::optional<double> radius;
  std::string out;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  bool reproducible = false;
};

unsigned effective_threads(const Common& c) {
  if (const char* env = std::getenv("ROBUST_LDP_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw InputError("", std::string("ROBUST_LDP_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, c.threads);
}

ChainSpec load(const Common& c) {
  effective_threads(c);
  ChainSpec spec = load_chain_spec(c.chain);
  if (c.radius) {
    if (!(*c.radius >= 0.0)) throw InputError("", "--radius must be nonnegative");
    spec.radius = *c.radius;
  }
  return spec;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void emit(json doc, const Common& c, const std::string& summary) {
  if (!c.reproducible) doc["timestamp"] = utc_timestamp();
  const std::string text = doc.dump(2) + "\n";
  if (c.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(c.out);
  if (!f) throw InputError("", "cannot write " + c.out);
  f << text;
  std::cout << summary << "\n";
}

std::vector<int> parse_lengths(const std::string& s) {
  // A..B:S
  const auto dots = s.find("..");
  const auto colon = s.find(':');
  if (dots == std::string::npos || colon == std::string::npos || colon < dots) {
    throw InputError("", "--lengths must look like A..B:S, got '" + s + "'");
  }
  int a = 0, b = 0, step = 0;
  try {
    a = std::stoi(s.substr(0, dots));
    b = std::stoi(s.substr(dots + 2, colon - dots - 2));
    step = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw InputError("", "--lengths must look like A..B:S, got '" + s + "'");
  }
  if (a < 1 || b < a || step < 1) throw InputError("", "--lengths needs 1 <= A <= B and S >= 1");
  std::vector<int> out;
  for (int n = a; n <= b; n += step) out.push_back(n);
  return out;
}

Vector parse_weights(const std::string& s, Index n) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      vals.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InputError("", "--weights must be comma-separated numbers, got '" + s + "'");
    }
  }
  if (static_cast<Index>(vals.size()) != n) {
    throw InputError("", "--weights needs " + std::to_string(n) + " entries, got " + std::to_string(vals.size()));
  }
  return Eigen::Map<Vector>(vals.data(), n);
}

Divergence parse_model(const std::string& s, std::initializer_list<Divergence> allowed) {
  Divergence d{};
  try {
    d = divergence_from_string(s);
  } catch (const std::exception&) {
    throw InputError("", "unknown model '" + s + "'");
  }
  for (auto a : allowed) {
    if (a == d) return d;
  }
  throw InputError("", std::string("model ") + to_string(d) + " is not available for this command");
}

int cmd_check(const Common& c, std::optional<int> max_exponent) {
  const ChainSpec spec = load(c);
  const int k = max_exponent.value_or(default_max_exponent(spec.size()));
  if (k < 1) throw InputError("", "--max-exponent must be positive");
  const ConditionReport rep = check_conditions(spec, k);
  std::ostringstream summary;
  summary << "m1_holds=" << rep.m1_holds << " m2_holds=" << rep.m2_holds;
  if (rep.l0) summary << " l0=" << *rep.l0 << " n0=" << *rep.n0;
  emit(to_json(rep), c, summary.str());
  if (!rep.m1_holds) return kConditionNotWitnessed;
  return rep.m2_holds ? kOk : kConditionNotWitnessed;
}

int cmd_rate(const Common& c, const std::string& center, double kappa, const std::string& model_name) {
  const ChainSpec spec = load(c);
  const Divergence model =
      parse_model(model_name, {Divergence::robust_entropy, Divergence::robust_entropy_ac, Divergence::entropy});
  if (!(kappa >= 0.0)) throw InputError("", "--kappa must be nonnegative");
  const BallSet ball{parse_dist(center, spec.space.labels), kappa};
  const RateReport rep = tail_rate(spec, ball, model);

  json doc = to_json(rep);
  doc["model"] = to_string(model);
  doc["center"] = detail::vector_json(ball.center.probs());
  doc["kappa"] = kappa;
  doc["r"] = spec.radius;
  doc["nonvacuous"] = rep.converged ? json(rep.value > 1e-6) : json(nullptr);
  doc["sharp"] = rep.converged && std::isfinite(rep.value) ? json(sharpness_check(spec, rep)) : json(nullptr);
  std::ostringstream summary;
  summary << std::setprecision(10) << "value=" << rep.value << " converged=" << rep.converged;
  emit(std::move(doc), c, summary.str());
  return rep.converged ? kOk : kNotConverged;
}

int cmd_envelope(const Common& c, const std::string& model_name, const std::string& weights) {
  const ChainSpec spec = load(c);
  const Divergence model = parse_model(model_name, {Divergence::ball_indicator, Divergence::ball_indicator_ac});
  try {
    if (!weights.empty()) {
      const FunctionalBound fb = robust_functional_bound(spec, model, parse_weights(weights, spec.size()));
      json doc = to_json(fb);
      doc["model"] = to_string(model);
      doc["r"] = spec.radius;
      std::ostringstream summary;
      summary << std::setprecision(10) << "max=" << fb.max;
      emit(std::move(doc), c, summary.str());
      return kOk;
    }
    const Envelope env = envelope(spec, model, effective_threads(c));
    json doc = to_json(env);
    doc["model"] = to_string(model);
    doc["r"] = spec.radius;
    doc["states"] = spec.space.labels;
    emit(std::move(doc), c, "envelope written to " + c.out);
    return kOk;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNotConverged;
  }
}

struct SimulateArgs {
  std::string center;
  double kappa = 0.0;
  bool worst_case = false;
  std::string lengths = "40..160:20";
  std::uint64_t paths = 200000;
  std::uint64_t seed = 42;
  std::string plot;
  double rel_tol = 0.2;
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  const ChainSpec spec = load(c);
  if (!(a.kappa >= 0.0)) throw InputError("", "--kappa must be nonnegative");
  if (a.paths < 1) throw InputError("", "--paths must be positive");
  const BallSet ball{parse_dist(a.center, spec.space.labels), a.kappa};

  // Nominal runs are compared with the non-robust rate, worst-case runs with
  // the robust rate under the optimizing kernel.
  const RateReport analytic =
      tail_rate(spec, ball, a.worst_case ? Divergence::robust_entropy : Divergence::entropy);
  if (!analytic.converged) {
    std::cerr << "error: analytic tail-rate solve did not converge\n";
    return kNotConverged;
  }
  if (a.worst_case && !std::isfinite(analytic.value)) {
    throw InputError("", "the tail rate is infinite; there is no worst-case kernel to simulate");
  }
  const SimPlan plan{spec, a.worst_case ? analytic.pi_hat : spec.kernel, ball, parse_lengths(a.lengths), a.paths,
                     a.seed};
  const RateEstimate est = simulate_paths(plan, effective_threads(c));
  const RateVerdict verdict = compare_rates(analytic.value, est, a.rel_tol);

  if (!a.plot.empty()) {
    std::ofstream f(a.plot);
    if (!f) throw InputError("", "cannot write " + a.plot);
    write_plot_csv(f, est);
  }
  json doc = to_json(est);
  doc["kernel"] = a.worst_case ? "worst_case" : "nominal";
  doc["seed"] = a.seed;
  doc["analytic_rate"] = detail::number_or_inf(analytic.value);
  doc["verdict"] = to_json(verdict);
  std::ostringstream summary;
  summary << std::setprecision(6) << "slope=" << est.slope << " stderr=" << est.std_error
          << " analytic=" << analytic.value << " verdict=" << verdict.status;
  emit(std::move(doc), c, summary.str());
  return est.usable ? kOk : kUnusableEstimate;
}

int cmd_wasserstein(const Common& c, const std::string& mu, const std::string& nu) {
  const ChainSpec spec = load(c);
  const W1Result w = w1(spec.space, parse_dist(mu, spec.space.labels), parse_dist(nu, spec.space.labels));
  std::ostringstream summary;
  summary << std::setprecision(12) << "w1=" << w.value;
  emit(to_json(w), c, summary.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein-robust large-deviation rates for finite Markov chains"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--chain", common.chain, "chain specification (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--radius", common.radius, "override the robustness radius r of the chain file");
    sub->add_option("--out", common.out, "write the JSON report to this file");
    sub->add_option("--threads", common.threads, "worker threads (ROBUST_LDP_THREADS overrides)");
    sub->add_flag("--reproducible", common.reproducible, "omit the timestamp from reports");
  };

  std::optional<int> max_exponent;
  auto* check = app.add_subcommand("check", "verify the support conditions on the nominal kernel");
  add_common(check);
  check->add_option("--max-exponent", max_exponent, "largest kernel power examined");

  std::string center, model = "RobustEntropy";
  double kappa = 0.0;
  auto* rate = app.add_subcommand("rate", "robust tail rate over a Wasserstein ball");
  add_common(rate);
  rate->add_option("--center", center, "ball center: state label or comma-separated probabilities")->required();
  rate->add_option("--kappa", kappa, "ball radius")->required();
  rate->add_option("--model", model, "RobustEntropy, RobustEntropyAC or Entropy");

  std::string env_model = "BallIndicator", weights;
  auto* env = app.add_subcommand("envelope", "robust invariant envelope or linear-functional bound");
  add_common(env);
  env->add_option("--model", env_model, "BallIndicator or BallIndicatorAC");
  env->add_option("--weights", weights, "comma-separated weights; prints max of the linear functional");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimate of the tail decay rate");
  add_common(simulate);
  simulate->add_option("--center", sim.center, "ball center: state label or comma-separated probabilities")
      ->required();
  simulate->add_option("--kappa", sim.kappa, "ball radius")->required();
  simulate->add_flag("--worst-case", sim.worst_case, "simulate under the worst-case kernel");
  simulate->add_option("--lengths", sim.lengths, "path lengths A..B:S")->capture_default_str();
  simulate->add_option("--paths", sim.paths, "paths per length")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  simulate->add_option("--plot", sim.plot, "write CSV plot data to this file");
  simulate->add_option("--rel-tol", sim.rel_tol, "relative tolerance of the verdict")->capture_default_str();

  std::string mu, nu;
  auto* wass = app.add_subcommand("wasserstein", "Wasserstein-1 distance between two distributions");
  add_common(wass);
  wass->add_option("--mu", mu, "first distribution")->required();
  wass->add_option("--nu", nu, "second distribution")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (*check) return cmd_check(common, max_exponent);
    if (*rate) return cmd_rate(common, center, kappa, model);
    if (*env) return cmd_envelope(common, env_model, weights);
    if (*simulate) return cmd_simulate(common, sim);
    if (*wass) return cmd_wasserstein(common, mu, nu);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNotConverged;
  }
  return kInputError;
}
