// diatomid: simulate the chemostat model, identify its parameters from
// sampled observations, and run Monte-Carlo robustness studies.

#include "diatom/diatom.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace diatom;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitBlowUp = 2;

struct CommonOptions {
  std::string params;
  std::string out = ".";
  double t_end = 50.0;
  double dt = 0.01;
  unsigned threads = 0;
  std::uint64_t seed = 0;
};

struct SimulateOptions {
  std::vector<double> initial;
  double sample_period = 1.0;
  bool sensitivities = false;
};

struct IdentifyOptions {
  std::string guess;
  std::string observations;
  double sample_period = 1.0;
  double epsilon = 0.0;
};

struct EvaluateOptions {
  std::vector<double> epsilons{0.01, 0.05, 0.5};
  std::vector<double> sample_periods{1.0};
  int trials = 20;
  bool full = false;
};

ParameterSet target_parameters(const CommonOptions& c) {
  return c.params.empty() ? reference_parameters() : load_parameters(c.params);
}

fs::path output_path(const CommonOptions& c, const std::string& name) {
  fs::create_directories(c.out);
  return fs::path(c.out) / name;
}

std::ofstream open_output(const CommonOptions& c, const std::string& name) {
  const fs::path path = output_path(c, name);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int cmd_simulate(const CommonOptions& c, const SimulateOptions& s) {
  const ParameterSet p = target_parameters(c);
  StateVector x0 = reference_initial_state(p);
  if (!s.initial.empty()) {
    if (s.initial.size() != static_cast<std::size_t>(kStateDim))
      throw std::invalid_argument("--initial needs six values N,C,Q_N,Q_C,D,M");
    for (Eigen::Index i = 0; i < kStateDim; ++i) x0[i] = s.initial[static_cast<std::size_t>(i)];
  }
  IntegrationConfig cfg;
  cfg.t_end = c.t_end;
  cfg.dt = c.dt;
  cfg.sample_period = s.sample_period;

  const Trajectory traj = s.sensitivities ? integrate_with_sensitivity(x0, p, cfg)
                                          : integrate(x0, p, cfg);
  {
    auto out = open_output(c, "trajectory.csv");
    write_trajectory_csv(out, traj);
  }
  if (s.sensitivities) {
    auto out = open_output(c, "sensitivities.csv");
    write_trajectory_csv(out, traj, false, true);
  }
  {
    auto out = open_output(c, "diagnostics.csv");
    write_report_header(out);
    write_report(out, check_positivity(traj, 1e-9));
    write_report(out, check_quota_threshold(traj, p, 1e-9));
  }

  std::cout << "samples " << traj.size() << '\n';
  try {
    const double rate = exponential_growth_rate(traj, 5.0, 20.0);
    std::cout << "growth_rate " << rate << '\n';
  } catch (const std::exception&) {
    std::cout << "growth_rate n/a\n";
  }
  return kExitOk;
}

ObservationSet load_observations(const CommonOptions& c, const IdentifyOptions& o,
                                 const ParameterSet& target) {
  if (o.observations.empty())
    return generate_target(target, reference_initial_state(target), c.t_end, o.sample_period, c.dt);
  bool has_initial = false;
  const Trajectory traj = load_trajectory_csv(o.observations, &has_initial);
  if (traj.size() == 0) throw std::invalid_argument("observation file has no samples");
  ObservationSet obs;
  obs.times = traj.times;
  obs.targets = traj.states;
  obs.data = target;
  obs.initial = has_initial ? traj.initial : reference_initial_state(target);
  obs.dt = c.dt;
  obs.sample_period = traj.times.front();
  obs.validate();
  obs.integration_config().validate();
  return obs;
}

int cmd_identify(const CommonOptions& c, const IdentifyOptions& o) {
  const ParameterSet target = target_parameters(c);
  const ObservationSet obs = load_observations(c, o, target);
  const FreeVector p0 = o.guess.empty()
                            ? perturb_parameters(free_parameters(target), o.epsilon, c.seed)
                            : free_parameters(load_parameters(o.guess));

  IdentificationConfig cfg;
  cfg.final_time = obs.times.back();
  cfg.half_window = std::min(cfg.half_window, 0.5 * cfg.final_time);
  const IdentificationResult result = staged_identify(p0, obs, cfg);

  {
    auto out = open_output(c, "stage_log.csv");
    write_stage_log(out, result);
  }
  save_parameters(output_path(c, "identified.params").string(),
                  with_free_parameters(target, result.parameters));

  std::cout << "final_relative_residual " << result.relative_residual << '\n';
  if (o.observations.empty())
    std::cout << "max_relative_error_pct "
              << 100.0 * max_relative_error(result.parameters, free_parameters(target)) << '\n';
  if (result.failed) {
    const auto& phase = result.stages.back().phases.back();
    std::cerr << "identification failed at window " << result.stages.back().window_end << ": "
              << phase.cause() << '\n';
    return kExitBlowUp;
  }
  return kExitOk;
}

int cmd_evaluate(const CommonOptions& c, EvaluateOptions e) {
  if (e.full) {
    e.epsilons = {0.01, 0.05, 0.10, 0.15, 0.20, 0.25, 0.50};
    e.sample_periods = {1.0, 0.5, 0.25};
    e.trials = 200;
  }
  const ParameterSet target = target_parameters(c);
  TrialOptions opts;
  opts.t_end = c.t_end;
  opts.dt = c.dt;
  opts.threads = c.threads;

  auto stats_out = open_output(c, "statistics.csv");
  auto trials_out = open_output(c, "trials.csv");
  write_statistics_header(stats_out);
  write_statistics_header(std::cout);
  bool first = true;
  for (const double period : e.sample_periods) {
    for (const double eps : e.epsilons) {
      const auto records = run_trials(target, eps, e.trials, period, c.seed, opts);
      const TrialStatistics stats = summarize(records, period, c.seed);
      write_statistics_row(stats_out, stats);
      write_statistics_row(std::cout, stats);
      std::ostringstream block;
      write_trial_records(block, records);
      std::string text = block.str();
      if (!first) text.erase(0, text.find('\n') + 1);
      trials_out << text;
      first = false;
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chemostat diatom/TEP model: simulation and parameter identification"};
  app.require_subcommand(1);

  CommonOptions common;
  SimulateOptions sim;
  IdentifyOptions ident;
  EvaluateOptions eval;

  auto add_common = [&common](CLI::App* cmd) {
    cmd->add_option("--params", common.params, "Target parameter file (default: reference set)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", common.out, "Output directory")->capture_default_str();
    cmd->add_option("--t-end", common.t_end, "Final time [day]")->capture_default_str();
    cmd->add_option("--dt", common.dt, "RK4 step [day]")->capture_default_str();
    cmd->add_option("--seed", common.seed, "Random seed")->capture_default_str();
  };

  auto* simulate = app.add_subcommand("simulate", "Integrate the model and write CSV output");
  add_common(simulate);
  simulate->add_option("--sample-period", sim.sample_period, "Recording period [day]")
      ->capture_default_str();
  simulate->add_option("--initial", sim.initial, "Initial state N,C,Q_N,Q_C,D,M")
      ->delimiter(',')
      ->expected(6);
  simulate->add_flag("--sensitivities", sim.sensitivities, "Also write sensitivities.csv");

  auto* identify = app.add_subcommand("identify", "Run the staged identification pipeline");
  add_common(identify);
  identify->add_option("--sample-period", ident.sample_period, "Observation period [day]")
      ->capture_default_str();
  identify->add_option("--guess", ident.guess, "Initial-guess parameter file")
      ->check(CLI::ExistingFile);
  identify->add_option("--epsilon", ident.epsilon,
                       "Without --guess: perturb the target by this relative amplitude")
      ->capture_default_str();
  identify->add_option("--observations", ident.observations, "Observation trajectory CSV")
      ->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Monte-Carlo perturbation study");
  add_common(evaluate);
  evaluate->add_option("--epsilon", eval.epsilons, "Perturbation amplitudes")
      ->delimiter(',')
      ->capture_default_str();
  evaluate->add_option("--sample-period", eval.sample_periods, "Observation periods [day]")
      ->delimiter(',')
      ->capture_default_str();
  evaluate->add_option("--trials", eval.trials, "Trials per (epsilon, period)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_option("--threads", common.threads, "Worker threads (0: all cores)");
  evaluate->add_flag("--full", eval.full, "200 trials over the full amplitude/period grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*simulate) return cmd_simulate(common, sim);
    if (*identify) return cmd_identify(common, ident);
    return cmd_evaluate(common, eval);
  } catch (const BlowUpError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBlowUp;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}
