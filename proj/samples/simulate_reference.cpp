// Integrates the reference chemostat for 50 days and prints daily D and M
// together with the exponential-phase growth rate.

#include "diatom/diatom.hpp"

#include <cstdio>

int main() {
  using namespace diatom;
  const ParameterSet p = reference_parameters();
  const Trajectory traj = integrate(reference_initial_state(p), p, IntegrationConfig{});

  std::printf("%6s %14s %14s %14s\n", "t", "D", "N", "M");
  for (std::size_t j = 0; j < traj.size(); ++j)
    std::printf("%6.1f %14.6e %14.6f %14.6f\n", traj.times[j], traj.states[j][kD],
                traj.states[j][kN], traj.states[j][kM]);
  std::printf("growth rate over days 5-20: %.5f per day\n", exponential_growth_rate(traj, 5, 20));
  return 0;
}
