#pragma once

// Fixed-step RK4 integration of the model, optionally augmented with the
// forward sensitivity system dS/dt = (dF/dX) S + dF/dP, S(0) = 0.

#include "diatom/model.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace diatom {

/// Classical RK4 step. `Vector` may be a scalar or any Eigen vector/matrix type.
template <class Vector, class Derivative>
Vector rk4_step(double t, const Vector& x, double dt, Derivative&& f) {
  const double half = 0.5 * dt;
  const Vector k1 = f(t, x);
  const Vector k2 = f(t + half, Vector(x + half * k1));
  const Vector k3 = f(t + half, Vector(x + half * k2));
  const Vector k4 = f(t + dt, Vector(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline bool detect_blowup(double x, double threshold) {
  return !std::isfinite(x) || std::abs(x) > threshold;
}

template <class Derived>
bool detect_blowup(const Eigen::DenseBase<Derived>& x, double threshold) {
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (detect_blowup(static_cast<double>(x(i, j)), threshold)) return true;
  return false;
}

class BlowUpError : public std::runtime_error {
 public:
  explicit BlowUpError(double time)
      : std::runtime_error("integration blew up at t = " + std::to_string(time)), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

struct IntegrationConfig {
  double t_end = 50.0;
  double dt = 0.01;
  double sample_period = 1.0;
  double blowup_threshold = 1e12;

  /// Number of RK4 steps between two samples.
  long steps_per_sample() const { return whole_multiple(sample_period, dt, "sample_period", "dt"); }
  /// Number of samples m (the initial state is not counted).
  long sample_count() const {
    return whole_multiple(t_end, sample_period, "t_end", "sample_period");
  }

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(sample_period > 0.0)) throw std::invalid_argument("sample_period must be positive");
    if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
    if (!(blowup_threshold > 0.0)) throw std::invalid_argument("blowup_threshold must be positive");
    steps_per_sample();
    sample_count();
  }

 private:
  static long whole_multiple(double value, double unit, const char* value_name,
                             const char* unit_name) {
    const double ratio = value / unit;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded)
      throw std::invalid_argument(std::string(value_name) + " must be a positive integer multiple of " +
                                  unit_name);
    return static_cast<long>(rounded);
  }
};

/// Samples at t_j = j * sample_period, j = 1..m. The t = 0 state is kept in
/// `initial`; `sensitivities` is empty unless requested.
struct Trajectory {
  StateVector initial = StateVector::Zero();
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<SensitivityMatrix> sensitivities;

  std::size_t size() const { return times.size(); }
  bool has_sensitivities() const { return !sensitivities.empty(); }
};

namespace detail {

// State in column 0, sensitivities in columns 1..11.
using AugmentedState = Eigen::Matrix<double, kStateDim, 1 + kFreeParamCount>;

template <bool WithSensitivity>
Trajectory integrate_impl(const StateVector& x0, const ParameterSet& p,
                          const IntegrationConfig& cfg) {
  cfg.validate();
  const long per_sample = cfg.steps_per_sample();
  const long samples = cfg.sample_count();

  Trajectory traj;
  traj.initial = x0;
  traj.times.reserve(static_cast<std::size_t>(samples));
  traj.states.reserve(static_cast<std::size_t>(samples));
  if constexpr (WithSensitivity) traj.sensitivities.reserve(static_cast<std::size_t>(samples));

  if (detect_blowup(x0, cfg.blowup_threshold)) throw BlowUpError(0.0);

  auto state_rhs = [&p](double t, const StateVector& x) { return rhs(t, x, p); };
  auto augmented_rhs = [&p](double t, const AugmentedState& y) {
    const StateVector x = y.col(0);
    AugmentedState dy;
    dy.col(0) = rhs(t, x, p);
    dy.rightCols<kFreeParamCount>().noalias() =
        state_jacobian(t, x, p) * y.rightCols<kFreeParamCount>();
    dy.rightCols<kFreeParamCount>() += parameter_jacobian(t, x, p);
    return dy;
  };

  using Work = std::conditional_t<WithSensitivity, AugmentedState, StateVector>;
  Work y;
  if constexpr (WithSensitivity) {
    y.setZero();
    y.col(0) = x0;
  } else {
    y = x0;
  }

  long step = 0;
  for (long j = 1; j <= samples; ++j) {
    for (long k = 0; k < per_sample; ++k, ++step) {
      const double t = static_cast<double>(step) * cfg.dt;
      if constexpr (WithSensitivity) {
        y = rk4_step(t, y, cfg.dt, augmented_rhs);
        if (detect_blowup(y.col(0), cfg.blowup_threshold) || !y.allFinite())
          throw BlowUpError(static_cast<double>(step + 1) * cfg.dt);
      } else {
        y = rk4_step(t, y, cfg.dt, state_rhs);
        if (detect_blowup(y, cfg.blowup_threshold))
          throw BlowUpError(static_cast<double>(step + 1) * cfg.dt);
      }
    }
    traj.times.push_back(static_cast<double>(j) * cfg.sample_period);
    if constexpr (WithSensitivity) {
      traj.states.push_back(y.col(0));
      traj.sensitivities.push_back(y.template rightCols<kFreeParamCount>());
    } else {
      traj.states.push_back(y);
    }
  }
  return traj;
}

}  // namespace detail

/// RK4 trajectory of the clipped system. Throws BlowUpError at the first step
/// whose state is non-finite or exceeds the blow-up threshold.
inline Trajectory integrate(const StateVector& x0, const ParameterSet& p,
                            const IntegrationConfig& cfg) {
  return detail::integrate_impl<false>(x0, p, cfg);
}

/// State plus 6x11 sensitivity, advanced with shared RK4 stages. The state
/// part is bit-identical to integrate().
inline Trajectory integrate_with_sensitivity(const StateVector& x0, const ParameterSet& p,
                                             const IntegrationConfig& cfg) {
  return detail::integrate_impl<true>(x0, p, cfg);
}

}  // namespace diatom
