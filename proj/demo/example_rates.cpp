// Library walk-through on the three-state example chain: nominal and robust
// tail rates of the ball around state 3, the worst-case kernel, and the
// robust invariant envelope.

#include "robust_ldp/rate_solver.hpp"
#include "robust_ldp/report_io.hpp"
#include "robust_ldp/set_chain.hpp"

#include <iomanip>
#include <iostream>

int main(int argc, char** argv) {
  using namespace robust_ldp;
  const std::string file = argc > 1 ? argv[1] : ROBUST_LDP_DATA_DIR "/three_state.json";
  ChainSpec spec = load_chain_spec(file);
  const BallSet ball{parse_dist("3", spec.space.labels), 0.2};

  std::cout << std::setprecision(6);
  const RateReport nominal = tail_rate(spec, ball, Divergence::entropy);
  const RateReport robust = tail_rate(spec, ball, Divergence::robust_entropy);
  std::cout << "nominal tail rate (r = 0):    " << nominal.value << "\n";
  std::cout << "robust tail rate  (r = " << spec.radius << "): " << robust.value << "\n";
  std::cout << "optimal empirical law nu*:     " << robust.nu_star.probs().transpose() << "\n";
  std::cout << "worst-case kernel:\n" << robust.pi_hat.matrix() << "\n";
  std::cout << "worst-case kernel is absolutely continuous: " << std::boolalpha << sharpness_check(spec, robust)
            << "\n";

  const Envelope env = envelope(spec, Divergence::ball_indicator);
  std::cout << "stationary law:  " << stationary(spec.kernel).dist.probs().transpose() << "\n";
  std::cout << "envelope lower:  " << env.lo.transpose() << "\n";
  std::cout << "envelope upper:  " << env.hi.transpose() << "\n";
  return 0;
}
