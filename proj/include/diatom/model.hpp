#pragma once

// Two-nutrient diatom / mucilage chemostat model.
//
// State ordering is (N, C, Q_N, Q_C, D, M) everywhere in the library.
// Units follow the usual chemostat convention: concentrations in umol/L,
// quotas in 1e-9 umol/cell, D in 1e9 cell/L, M in g Xeq/L. The 1e-9 and 1e9
// factors cancel in every product rate * D, so parameter values are used
// as-is with no internal rescaling.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string_view>

namespace diatom {

inline constexpr Eigen::Index kStateDim = 6;
inline constexpr Eigen::Index kFreeParamCount = 11;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateJacobian = Eigen::Matrix<double, kStateDim, kStateDim>;
using ParameterJacobian = Eigen::Matrix<double, kStateDim, kFreeParamCount>;
using SensitivityMatrix = ParameterJacobian;
using FreeVector = Eigen::Matrix<double, kFreeParamCount, 1>;

enum StateIndex : Eigen::Index { kN = 0, kC, kQN, kQC, kD, kM };

inline constexpr std::array<std::string_view, kStateDim> kStateNames = {
    "N", "C", "Q_N", "Q_C", "D", "M"};

/// Constant model parameters.
struct ParameterSet {
  double a = 0.0;        // dilution rate [1/day]
  double N_in = 0.0;     // inlet nitrogen [umol/L]
  double C_in = 0.0;     // inlet carbon [umol/L]
  double V_max_N = 0.0;  // [1e-9 umol/cell/day]
  double V_max_C = 0.0;
  double K_N = 0.0;      // half-saturation [umol/L]
  double K_C = 0.0;
  double m_D = 0.0;      // mortality [1/day], may be zero
  double Q_min_N = 0.0;  // [1e-9 umol/cell]
  double Q_min_C = 0.0;
  double mu_D = 0.0;     // max division rate [1/day]
  double mu_M = 0.0;     // max TEP release [1e-9 g Xeq/cell/day]
  double Theta_D = 0.0;  // max N consumption for growth
  double Theta_M = 0.0;  // max C consumption for TEP
  double alpha = 0.0;    // C:N ratio

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

/// Identified parameters, in the canonical column order of every sensitivity
/// and Jacobian matrix. a, N_in, C_in and alpha are problem data.
enum class FreeParameter : Eigen::Index {
  V_max_N = 0,
  K_N,
  V_max_C,
  K_C,
  m_D,
  Q_min_N,
  Q_min_C,
  mu_D,
  mu_M,
  Theta_D,
  Theta_M,
};

inline constexpr std::array<std::string_view, kFreeParamCount> kFreeParameterNames = {
    "V_max_N", "K_N", "V_max_C", "K_C", "m_D", "Q_min_N",
    "Q_min_C", "mu_D", "mu_M", "Theta_D", "Theta_M"};

constexpr Eigen::Index column(FreeParameter p) { return static_cast<Eigen::Index>(p); }

namespace detail {

// Field pointers in canonical free-parameter order.
inline constexpr std::array<double ParameterSet::*, kFreeParamCount> kFreeFields = {
    &ParameterSet::V_max_N, &ParameterSet::K_N,     &ParameterSet::V_max_C,
    &ParameterSet::K_C,     &ParameterSet::m_D,     &ParameterSet::Q_min_N,
    &ParameterSet::Q_min_C, &ParameterSet::mu_D,    &ParameterSet::mu_M,
    &ParameterSet::Theta_D, &ParameterSet::Theta_M};

}  // namespace detail

inline FreeVector free_parameters(const ParameterSet& p) {
  FreeVector v;
  for (Eigen::Index k = 0; k < kFreeParamCount; ++k) v[k] = p.*detail::kFreeFields[k];
  return v;
}

/// Copy of `base` with the free parameters replaced by `free`.
inline ParameterSet with_free_parameters(ParameterSet base, const FreeVector& free) {
  for (Eigen::Index k = 0; k < kFreeParamCount; ++k) base.*detail::kFreeFields[k] = free[k];
  return base;
}

/// Reference diatom parameters (Thalassiosira-like target problem).
inline ParameterSet reference_parameters() {
  ParameterSet p;
  p.a = 0.59;
  p.C_in = 2000.0;
  p.N_in = 15.0;
  p.V_max_C = 400.0;
  p.V_max_N = 70.0;
  p.K_C = 1.5;
  p.K_N = 1.25;
  p.m_D = 0.1;
  p.Q_min_C = 0.5;
  p.Q_min_N = 10.0;
  p.mu_D = 1.24;
  p.mu_M = 8.2;
  p.Theta_D = 4.5;
  p.Theta_M = 1000.0;
  p.alpha = 16.0;
  return p;
}

/// Chemostat at inlet concentrations, quotas at their minima, 1e5 cell/L of
/// diatoms and no TEP.
inline StateVector reference_initial_state(const ParameterSet& p) {
  StateVector x;
  x << p.N_in, p.C_in, p.Q_min_N, p.Q_min_C, 1e-4, 0.0;
  return x;
}

constexpr double positive_part(double x) { return x > 0.0 ? x : 0.0; }
constexpr double positive_indicator(double x) { return x > 0.0 ? 1.0 : 0.0; }

inline StateVector positive_part(const StateVector& x) { return x.cwiseMax(0.0); }

// ---------------------------------------------------------------------------
// Limiter

/// min(1 - a+/max(a+,b+), 1 - c+/max(c+,d+)) with 0/0 = 0. Always in [0, 1].
inline double limiter(double a, double b, double c, double d) {
  auto ratio = [](double num, double den) {
    const double m = std::max(positive_part(num), positive_part(den));
    return m > 0.0 ? positive_part(num) / m : 0.0;
  };
  return std::min(1.0 - ratio(a, b), 1.0 - ratio(c, d));
}

struct LimiterEval {
  double value = 0.0;
  std::array<double, 4> grad{};  // d/da, d/db, d/dc, d/dd
};

/// Limiter value and one selected element of its generalized gradient.
///
/// Branch selection: d(x+)/dx = 0 at x = 0; a tie a+ == b+ > 0 takes the
/// clamped branch (term identically 0); a tie in the outer min takes the
/// first (a, b) term.
inline LimiterEval limiter_with_gradient(double a, double b, double c, double d) {
  struct Term {
    double value;
    double d_num;
    double d_den;
  };
  auto term = [](double num, double den) -> Term {
    const double np = positive_part(num);
    const double dp = positive_part(den);
    if (dp > np)
      return {1.0 - np / dp, -positive_indicator(num) / dp,
              np / (dp * dp) * positive_indicator(den)};
    if (np == 0.0) return {1.0, 0.0, 0.0};  // 0/0 = 0
    return {0.0, 0.0, 0.0};
  };
  const Term first = term(a, b);
  const Term second = term(c, d);
  if (first.value <= second.value) return {first.value, {first.d_num, first.d_den, 0.0, 0.0}};
  return {second.value, {0.0, 0.0, second.d_num, second.d_den}};
}

// ---------------------------------------------------------------------------
// Rates

inline double nitrogen_uptake(double N, const ParameterSet& p) {
  const double n = positive_part(N);
  return p.V_max_N * n / (p.K_N + n);
}

inline double carbon_uptake(double C, const ParameterSet& p) {
  const double c = positive_part(C);
  return p.V_max_C * c / (p.K_C + c);
}

// Droop-Liebig factor shared by growth and N consumption.
inline double growth_limiter(double Q_C, double Q_N, const ParameterSet& p) {
  return limiter(p.Q_min_C, Q_C, p.Q_min_N, Q_N);
}

// Carbon-excess factor shared by EPS release and its C consumption.
inline double excess_carbon_limiter(double Q_C, double Q_N, const ParameterSet& p) {
  return limiter(p.Q_min_C, Q_C, p.alpha * positive_part(Q_N), Q_C);
}

inline double growth_rate(double Q_C, double Q_N, const ParameterSet& p) {
  return p.mu_D * growth_limiter(Q_C, Q_N, p);
}

inline double mucilage_rate(double Q_C, double Q_N, const ParameterSet& p) {
  return p.mu_M * excess_carbon_limiter(Q_C, Q_N, p);
}

inline double nitrogen_consumption(double Q_C, double Q_N, const ParameterSet& p) {
  return p.Theta_D * growth_limiter(Q_C, Q_N, p);
}

inline double mucilage_carbon_consumption(double Q_C, double Q_N, const ParameterSet& p) {
  return p.Theta_M * excess_carbon_limiter(Q_C, Q_N, p);
}

struct RateValues {
  double tau_N = 0.0;
  double tau_C = 0.0;
  double tau_D = 0.0;
  double tau_M = 0.0;
  double sigma_N = 0.0;
  double sigma_M = 0.0;
  double sigma_C = 0.0;  // alpha * sigma_N + sigma_M
};

/// All rates at the clipped state X+.
inline RateValues rates(const StateVector& x, const ParameterSet& p) {
  const StateVector s = positive_part(x);
  const double growth = growth_limiter(s[kQC], s[kQN], p);
  const double excess = excess_carbon_limiter(s[kQC], s[kQN], p);
  RateValues r;
  r.tau_N = nitrogen_uptake(s[kN], p);
  r.tau_C = carbon_uptake(s[kC], p);
  r.tau_D = p.mu_D * growth;
  r.tau_M = p.mu_M * excess;
  r.sigma_N = p.Theta_D * growth;
  r.sigma_M = p.Theta_M * excess;
  r.sigma_C = p.alpha * r.sigma_N + r.sigma_M;
  return r;
}

// ---------------------------------------------------------------------------
// Right-hand side F(t, X+) and its Jacobians. Parameters are constant, so t
// is accepted only for the usual ODE signature.

inline StateVector rhs(double /*t*/, const StateVector& x, const ParameterSet& p) {
  const StateVector s = positive_part(x);
  const RateValues r = rates(s, p);
  StateVector f;
  f[kN] = p.a * (p.N_in - s[kN]) - r.tau_N * s[kD];
  f[kC] = p.a * (p.C_in - s[kC]) - r.tau_C * s[kD];
  f[kQN] = r.tau_N - r.sigma_N - r.tau_D * s[kQN];
  f[kQC] = r.tau_C - r.sigma_C - r.tau_D * s[kQC];
  f[kD] = (r.tau_D - p.a - p.m_D) * s[kD];
  f[kM] = r.tau_M * s[kD] - p.a * s[kM];
  return f;
}

namespace detail {

struct UptakeDerivs {
  double value;
  double d_conc;  // w.r.t. the (clipped) concentration
  double d_vmax;
  double d_k;
};

inline UptakeDerivs uptake_derivs(double conc, double vmax, double k) {
  const double c = positive_part(conc);
  const double den = k + c;
  return {vmax * c / den, vmax * k / (den * den), c / den, -vmax * c / (den * den)};
}

struct LimiterPair {
  LimiterEval growth;  // A(Q_min_C, Q_C, Q_min_N, Q_N)
  LimiterEval excess;  // A(Q_min_C, Q_C, alpha Q_N+, Q_C)
};

inline LimiterPair limiters(const StateVector& s, const ParameterSet& p) {
  return {limiter_with_gradient(p.Q_min_C, s[kQC], p.Q_min_N, s[kQN]),
          limiter_with_gradient(p.Q_min_C, s[kQC], p.alpha * s[kQN], s[kQC])};
}

}  // namespace detail

/// dF/dX of F(t, X+), including the d(x+)/dx factors.
inline StateJacobian state_jacobian(double /*t*/, const StateVector& x, const ParameterSet& p) {
  const StateVector s = positive_part(x);
  StateVector on;
  for (Eigen::Index i = 0; i < kStateDim; ++i) on[i] = positive_indicator(x[i]);

  const auto un = detail::uptake_derivs(s[kN], p.V_max_N, p.K_N);
  const auto uc = detail::uptake_derivs(s[kC], p.V_max_C, p.K_C);
  const auto [A, B] = detail::limiters(s, p);
  const double tau_D = p.mu_D * A.value;
  const double tau_M = p.mu_M * B.value;
  const double D = s[kD];

  // A depends on (Q_C, Q_N) through slots b and d; B through b, d (Q_C) and c (alpha Q_N).
  const double dA_dQC = A.grad[1];
  const double dA_dQN = A.grad[3];
  const double dB_dQC = B.grad[1] + B.grad[3];
  const double dB_dQN = B.grad[2] * p.alpha;

  StateJacobian J = StateJacobian::Zero();
  J(kN, kN) = -p.a - un.d_conc * D;
  J(kN, kD) = -un.value;
  J(kC, kC) = -p.a - uc.d_conc * D;
  J(kC, kD) = -uc.value;

  const double gn = p.Theta_D + p.mu_D * s[kQN];
  J(kQN, kN) = un.d_conc;
  J(kQN, kQN) = -gn * dA_dQN - tau_D;
  J(kQN, kQC) = -gn * dA_dQC;

  const double gc = p.alpha * p.Theta_D + p.mu_D * s[kQC];
  J(kQC, kC) = uc.d_conc;
  J(kQC, kQN) = -gc * dA_dQN - p.Theta_M * dB_dQN;
  J(kQC, kQC) = -gc * dA_dQC - p.Theta_M * dB_dQC - tau_D;

  J(kD, kQN) = p.mu_D * dA_dQN * D;
  J(kD, kQC) = p.mu_D * dA_dQC * D;
  J(kD, kD) = tau_D - p.a - p.m_D;

  J(kM, kQN) = p.mu_M * dB_dQN * D;
  J(kM, kQC) = p.mu_M * dB_dQC * D;
  J(kM, kD) = tau_M;
  J(kM, kM) = -p.a;

  return J * on.asDiagonal();
}

/// dF/dP over the free parameters, columns in FreeParameter order.
inline ParameterJacobian parameter_jacobian(double /*t*/, const StateVector& x,
                                            const ParameterSet& p) {
  const StateVector s = positive_part(x);
  const auto un = detail::uptake_derivs(s[kN], p.V_max_N, p.K_N);
  const auto uc = detail::uptake_derivs(s[kC], p.V_max_C, p.K_C);
  const auto [A, B] = detail::limiters(s, p);
  const double D = s[kD];
  const double QN = s[kQN];
  const double QC = s[kQC];

  // Q_min_C is slot a of both limiters; Q_min_N is slot c of the growth limiter.
  const double dA_dQminC = A.grad[0];
  const double dA_dQminN = A.grad[2];
  const double dB_dQminC = B.grad[0];

  using enum FreeParameter;
  ParameterJacobian G = ParameterJacobian::Zero();

  G(kN, column(V_max_N)) = -un.d_vmax * D;
  G(kN, column(K_N)) = -un.d_k * D;
  G(kC, column(V_max_C)) = -uc.d_vmax * D;
  G(kC, column(K_C)) = -uc.d_k * D;

  const double gn = p.Theta_D + p.mu_D * QN;
  G(kQN, column(V_max_N)) = un.d_vmax;
  G(kQN, column(K_N)) = un.d_k;
  G(kQN, column(Q_min_C)) = -gn * dA_dQminC;
  G(kQN, column(Q_min_N)) = -gn * dA_dQminN;
  G(kQN, column(mu_D)) = -A.value * QN;
  G(kQN, column(Theta_D)) = -A.value;

  const double gc = p.alpha * p.Theta_D + p.mu_D * QC;
  G(kQC, column(V_max_C)) = uc.d_vmax;
  G(kQC, column(K_C)) = uc.d_k;
  G(kQC, column(Q_min_C)) = -gc * dA_dQminC - p.Theta_M * dB_dQminC;
  G(kQC, column(Q_min_N)) = -gc * dA_dQminN;
  G(kQC, column(mu_D)) = -A.value * QC;
  G(kQC, column(Theta_D)) = -p.alpha * A.value;
  G(kQC, column(Theta_M)) = -B.value;

  G(kD, column(m_D)) = -D;
  G(kD, column(mu_D)) = A.value * D;
  G(kD, column(Q_min_C)) = p.mu_D * dA_dQminC * D;
  G(kD, column(Q_min_N)) = p.mu_D * dA_dQminN * D;

  G(kM, column(mu_M)) = B.value * D;
  G(kM, column(Q_min_C)) = p.mu_M * dB_dQminC * D;

  return G;
}

}  // namespace diatom
