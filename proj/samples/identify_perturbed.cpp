// Perturbs the reference parameters by a relative amplitude (default 5%)
// and recovers them from daily samples of the reference run.

#include "diatom/diatom.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
  using namespace diatom;
  const double epsilon = argc > 1 ? std::atof(argv[1]) : 0.05;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;

  const ParameterSet target = reference_parameters();
  const ObservationSet obs = generate_target(target, reference_initial_state(target), 50.0, 1.0);
  const FreeVector p_tg = free_parameters(target);
  const FreeVector p0 = perturb_parameters(p_tg, epsilon, seed);

  const IdentificationResult result = staged_identify(p0, obs);
  write_stage_log(std::cout, result);

  std::printf("\n%-10s %14s %14s %14s\n", "parameter", "guess", "identified", "target");
  for (Eigen::Index k = 0; k < kFreeParamCount; ++k)
    std::printf("%-10s %14.6g %14.10g %14.6g\n", kFreeParameterNames[k].data(), p0[k],
                result.parameters[k], p_tg[k]);
  std::printf("final relative residual %.3e, max relative error %.3e %%\n",
              result.relative_residual, 100.0 * max_relative_error(result.parameters, p_tg));
  return result.succeeded() ? 0 : 1;
}
