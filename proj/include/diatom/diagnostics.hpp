#pragma once

// Checks of qualitative properties of sampled trajectories: positivity,
// persistence of the quota thresholds, and the closed forms that hold while
// the nitrogen quota sits below its minimum.

#include "diatom/model.hpp"
#include "diatom/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace diatom {

struct RegimeReport {
  std::string property;
  double interval_start = 0.0;
  double interval_end = 0.0;
  double max_violation = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

class PreconditionNotMet : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline RegimeReport make_report(std::string property, double t0, double t1, double violation,
                                double tol) {
  return {std::move(property), t0, t1, violation, tol, violation <= tol};
}

inline double last_time(const Trajectory& traj) {
  return traj.times.empty() ? 0.0 : traj.times.back();
}

}  // namespace detail

/// Smallest component over the initial state and all samples must be >= -tol.
inline RegimeReport check_positivity(const Trajectory& traj, double tol) {
  double lowest = std::min(0.0, traj.initial.minCoeff());
  for (const auto& x : traj.states) lowest = std::min(lowest, x.minCoeff());
  return detail::make_report("positivity", 0.0, detail::last_time(traj), std::max(0.0, -lowest),
                             tol);
}

/// Once Q_N >= Q_min_N (resp. Q_C >= Q_min_C) at some sample, every later
/// sample stays above Q_min - tol. Vacuous for a quota that never gets there.
inline RegimeReport check_quota_threshold(const Trajectory& traj, const ParameterSet& p,
                                          double tol) {
  double violation = 0.0;
  double start = detail::last_time(traj);
  for (const auto [index, q_min] : {std::pair{kQN, p.Q_min_N}, std::pair{kQC, p.Q_min_C}}) {
    bool crossed = traj.initial[index] >= q_min;
    if (crossed) start = 0.0;
    for (std::size_t j = 0; j < traj.size(); ++j) {
      const double q = traj.states[j][index];
      if (!crossed && q >= q_min) {
        crossed = true;
        start = std::min(start, traj.times[j]);
      }
      if (crossed) violation = std::max(violation, q_min - q);
    }
  }
  return detail::make_report("quota_threshold", start, detail::last_time(traj), violation, tol);
}

struct LimitedRegimeReport {
  RegimeReport biomass_decay;
  RegimeReport nitrogen_quota;
  RegimeReport carbon_quota;

  bool pass() const { return biomass_decay.pass && nitrogen_quota.pass && carbon_quota.pass; }
};

/// While Q_N < Q_min_N growth stops, so D(t) = D(0) exp(-(a + m_D) t) and
/// Q_N(t) = Q_N(0) + int_0^t tau_N(N) ds; while Q_C < Q_min_C as well,
/// Q_C(t) = Q_C(0) + int_0^t tau_C(C) ds. The trajectory is recomputed on
/// the dt grid and the integrals use composite Simpson at even grid indices.
///
/// A quota's window is the longest initial stretch on which both the sampled
/// quota and its uptake-only prediction stay below the minimum; the
/// prediction bounds the window because the continuous solution follows it
/// exactly until the threshold is reached. The nitrogen window also bounds
/// the biomass check.
inline LimitedRegimeReport limited_regime_oracle(const StateVector& x0, const ParameterSet& p,
                                                 IntegrationConfig cfg, double tol = 1e-6) {
  if (!(x0[kQN] < p.Q_min_N))
    throw PreconditionNotMet("limited regime needs Q_N(0) < Q_min_N");
  cfg.sample_period = cfg.dt;
  const Trajectory traj = integrate(x0, p, cfg);

  std::vector<double> t{0.0};
  std::vector<StateVector> x{x0};
  for (std::size_t j = 0; j < traj.size(); ++j) {
    t.push_back(traj.times[j]);
    x.push_back(traj.states[j]);
  }
  const double h = cfg.dt;
  auto relative = [](double value, double expected) {
    const double scale = std::abs(expected);
    return scale > 0.0 ? std::abs(value - expected) / scale : std::abs(value);
  };

  struct Window {
    std::size_t end = 0;  // last even grid index inside the window
    double violation = 0.0;
  };
  auto uptake_window = [&](Eigen::Index quota, double q_min, auto uptake) {
    Window w;
    double integral = 0.0;
    for (std::size_t i = 2; i < x.size(); i += 2) {
      integral += h / 3.0 * (uptake(x[i - 2]) + 4.0 * uptake(x[i - 1]) + uptake(x[i]));
      const double predicted = x0[quota] + integral;
      if (!(x[i - 1][quota] < q_min) || !(x[i][quota] < q_min) || !(predicted < q_min)) break;
      w.violation = std::max(w.violation, relative(x[i][quota], predicted));
      w.end = i;
    }
    return w;
  };

  const Window n_window = uptake_window(
      kQN, p.Q_min_N, [&p](const StateVector& s) { return nitrogen_uptake(positive_part(s[kN]), p); });
  if (n_window.end == 0) throw PreconditionNotMet("limited regime lasts less than two steps");
  const Window c_window =
      x0[kQC] < p.Q_min_C
          ? uptake_window(kQC, p.Q_min_C,
                          [&p](const StateVector& s) { return carbon_uptake(positive_part(s[kC]), p); })
          : Window{};

  const double decay = p.a + p.m_D;
  double d_violation = 0.0;
  for (std::size_t i = 1; i <= n_window.end; ++i)
    d_violation = std::max(d_violation, relative(x[i][kD], x0[kD] * std::exp(-decay * t[i])));

  return {detail::make_report("limited_biomass_decay", 0.0, t[n_window.end], d_violation, tol),
          detail::make_report("limited_nitrogen_quota", 0.0, t[n_window.end], n_window.violation, tol),
          detail::make_report("limited_carbon_quota", 0.0, t[c_window.end], c_window.violation, tol)};
}

/// Least-squares slope of log D against t over the samples in [t0, t1]
/// (the initial state counts as t = 0).
inline double exponential_growth_rate(const Trajectory& traj, double t0, double t1) {
  double n = 0.0, st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  auto add = [&](double t, double d) {
    if (t < t0 - 1e-12 || t > t1 + 1e-12) return;
    if (!(d > 0.0)) throw std::domain_error("log-slope needs D > 0 on the fitting window");
    const double y = std::log(d);
    n += 1.0;
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  };
  add(0.0, traj.initial[kD]);
  for (std::size_t j = 0; j < traj.size(); ++j) add(traj.times[j], traj.states[j][kD]);
  const double denom = n * stt - st * st;
  if (n < 2.0 || !(denom > 0.0))
    throw std::invalid_argument("log-slope needs at least two samples in the window");
  return (n * sty - st * sy) / denom;
}

inline void write_report_header(std::ostream& out) {
  out << "property,interval_start,interval_end,max_violation,pass\n";
}

inline void write_report(std::ostream& out, const RegimeReport& r) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << r.property << ',' << r.interval_start << ',' << r.interval_end << ',' << r.max_violation
      << ',' << (r.pass ? 1 : 0) << '\n';
  out.precision(old_precision);
}

}  // namespace diatom
