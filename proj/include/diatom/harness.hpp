#pragma once

// Monte-Carlo evaluation of the identification pipeline on virtual
// chemostat data generated from known target parameters.

#include "diatom/identification.hpp"
#include "diatom/model.hpp"
#include "diatom/ode.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace diatom {

/// Noise-free observations of the target system, sampled every
/// `sample_period` up to `t_end`, integrated at `dt`.
inline ObservationSet generate_target(const ParameterSet& target, const StateVector& x0,
                                      double t_end, double sample_period, double dt = 0.01) {
  IntegrationConfig cfg;
  cfg.t_end = t_end;
  cfg.dt = dt;
  cfg.sample_period = sample_period;
  const Trajectory traj = integrate(x0, target, cfg);

  ObservationSet obs;
  obs.times = traj.times;
  obs.targets = traj.states;
  obs.data = target;
  obs.initial = x0;
  obs.dt = dt;
  obs.sample_period = sample_period;
  obs.validate();
  return obs;
}

/// P_i (1 + theta_i), theta_i uniform on [-epsilon, epsilon], drawn from a
/// mt19937_64 seeded with `seed`. `theta`, when given, receives the draws.
inline FreeVector perturb_parameters(const FreeVector& target, double epsilon, std::uint64_t seed,
                                     FreeVector* theta = nullptr) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  FreeVector draws;
  for (Eigen::Index k = 0; k < kFreeParamCount; ++k) draws[k] = epsilon * unit(rng);
  if (theta) *theta = draws;
  return target.cwiseProduct((FreeVector::Ones() + draws));
}

struct TrialRecord {
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  FreeVector theta = FreeVector::Zero();
  FreeVector estimate = FreeVector::Zero();
  bool success = false;
  double final_residual = std::numeric_limits<double>::quiet_NaN();
  double max_relative_error = std::numeric_limits<double>::quiet_NaN();  // fraction, not %
  double wall_time_s = 0.0;
};

struct TrialOptions {
  IdentificationConfig identification{};
  double t_end = 50.0;
  double dt = 0.01;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// |P_num - P_tg|_inf / |P_tg|_inf.
inline double max_relative_error(const FreeVector& estimate, const FreeVector& target) {
  return (estimate - target).cwiseAbs().maxCoeff() / target.cwiseAbs().maxCoeff();
}

inline TrialRecord run_trial(const ObservationSet& obs, const FreeVector& target, double epsilon,
                             std::uint64_t seed, const IdentificationConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  TrialRecord rec;
  rec.seed = seed;
  rec.epsilon = epsilon;
  const FreeVector p0 = perturb_parameters(target, epsilon, seed, &rec.theta);
  const IdentificationResult result = staged_identify(p0, obs, cfg);
  rec.estimate = result.parameters;
  rec.success = result.succeeded();
  rec.final_residual = result.relative_residual;
  rec.max_relative_error = max_relative_error(result.parameters, target);
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// One identification per seed base_seed + i; records come back in index
/// order whatever the thread count.
inline std::vector<TrialRecord> run_trials(const ParameterSet& target, double epsilon, int n_trials,
                                           double sample_period, std::uint64_t base_seed,
                                           const TrialOptions& opts = {}) {
  if (n_trials < 1) throw std::invalid_argument("n_trials must be at least 1");
  const ObservationSet obs = generate_target(target, reference_initial_state(target), opts.t_end,
                                             sample_period, opts.dt);
  const FreeVector p_tg = free_parameters(target);
  std::vector<TrialRecord> records(static_cast<std::size_t>(n_trials));

  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n_trials));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n_trials; i = next++)
      records[static_cast<std::size_t>(i)] =
          run_trial(obs, p_tg, epsilon, base_seed + static_cast<std::uint64_t>(i),
                    opts.identification);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return records;
}

struct TrialStatistics {
  double epsilon = 0.0;
  double sample_period = 0.0;
  int n_trials = 0;
  double success_rate_pct = 0.0;
  /// Over every trial with a finite residual (failed trials contribute the
  /// last residual they reached).
  double mean_residual = std::numeric_limits<double>::quiet_NaN();
  int residual_count = 0;
  /// Over successful trials, in percent.
  double mean_max_error_pct = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t base_seed = 0;
};

inline TrialStatistics summarize(const std::vector<TrialRecord>& records, double sample_period = 0.0,
                                 std::uint64_t base_seed = 0) {
  if (records.empty()) throw std::invalid_argument("summarize: empty record list");
  TrialStatistics s;
  s.epsilon = records.front().epsilon;
  s.sample_period = sample_period;
  s.base_seed = base_seed;
  s.n_trials = static_cast<int>(records.size());
  int successes = 0;
  double residual_sum = 0.0;
  double error_sum = 0.0;
  for (const auto& r : records) {
    if (std::isfinite(r.final_residual)) {
      residual_sum += r.final_residual;
      ++s.residual_count;
    }
    if (r.success) {
      ++successes;
      error_sum += r.max_relative_error;
    }
  }
  s.success_rate_pct = 100.0 * successes / s.n_trials;
  if (s.residual_count > 0) s.mean_residual = residual_sum / s.residual_count;
  if (successes > 0) s.mean_max_error_pct = 100.0 * error_sum / successes;
  return s;
}

inline void write_statistics_header(std::ostream& out) {
  out << "epsilon,sampling_period,n_trials,success_rate_pct,mean_residual,mean_max_error_pct,"
         "base_seed\n";
}

inline void write_statistics_row(std::ostream& out, const TrialStatistics& s) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << s.epsilon << ',' << s.sample_period << ',' << s.n_trials << ',' << s.success_rate_pct
      << ',' << s.mean_residual << ',' << s.mean_max_error_pct << ',' << s.base_seed << '\n';
  out.precision(old_precision);
}

inline void write_trial_records(std::ostream& out, const std::vector<TrialRecord>& records) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "seed,epsilon";
  for (const auto name : kFreeParameterNames) out << ",theta_" << name;
  out << ",success,final_residual,max_relative_error,wall_time_s\n";
  for (const auto& r : records) {
    out << r.seed << ',' << r.epsilon;
    for (Eigen::Index k = 0; k < kFreeParamCount; ++k) out << ',' << r.theta[k];
    out << ',' << (r.success ? 1 : 0) << ',' << r.final_residual << ',' << r.max_relative_error
        << ',' << r.wall_time_s << '\n';
  }
  out.precision(old_precision);
}

}  // namespace diatom
