#pragma once

// Parameter identification: least-squares cost over sampled residuals,
// Gauss-Newton with forward sensitivities, the backtracking/golden-section
// safeguarded variant, steepest-descent pre-steps and the staged
// time-window driver.
//
// The generic algorithms work on any LeastSquaresProblem; the chemostat
// problem is ChemostatProblem below. Blow-ups surface as BlowUpError from
// Problem::evaluate.

#include "diatom/model.hpp"
#include "diatom/ode.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diatom {

// ---------------------------------------------------------------------------
// Observations and cost

struct ObservationSet {
  std::vector<double> times;          // t_j = j * sample_period, j = 1..m
  std::vector<StateVector> targets;   // X^tg(t_j)
  ParameterSet data;                  // a, N_in, C_in, alpha are used
  StateVector initial = StateVector::Zero();
  double dt = 0.01;
  double sample_period = 1.0;
  StateVector weights = StateVector::Ones();  // per-variable residual weights

  std::size_t size() const { return times.size(); }

  /// |X^tg|_2 over all samples and components.
  double target_norm() const {
    double sum = 0.0;
    for (const auto& x : targets) sum += x.squaredNorm();
    return std::sqrt(sum);
  }

  IntegrationConfig integration_config() const {
    IntegrationConfig cfg;
    cfg.t_end = times.back();
    cfg.dt = dt;
    cfg.sample_period = sample_period;
    return cfg;
  }

  /// Samples with t_j <= t_end; the sampling period is unchanged.
  ObservationSet restricted_to(double t_end) const {
    ObservationSet out = *this;
    out.times.clear();
    out.targets.clear();
    const double slack = 1e-9 * sample_period;
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (times[j] > t_end + slack) break;
      out.times.push_back(times[j]);
      out.targets.push_back(targets[j]);
    }
    out.validate();
    return out;
  }

  void validate() const {
    if (times.empty()) throw std::invalid_argument("observation set is empty");
    if (times.size() != targets.size())
      throw std::invalid_argument("observation times and targets differ in length");
    for (std::size_t j = 0; j < times.size(); ++j) {
      const double expected = static_cast<double>(j + 1) * sample_period;
      if (std::abs(times[j] - expected) > 1e-9 * expected)
        throw std::invalid_argument("observation times must be j * sample_period");
    }
    if (!(target_norm() > 0.0)) throw std::invalid_argument("target norm must be positive");
  }
};

/// Residual vector r (j-major, then state component), cost r'r and, when
/// requested, the Jacobian J of r with rows in the same order.
struct CostEvaluation {
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;
  double relative_residual = 0.0;

  bool has_jacobian() const { return jacobian.size() > 0; }
  /// grad L = 2 J' r.
  Eigen::VectorXd gradient() const { return 2.0 * jacobian.transpose() * residual; }
};

inline CostEvaluation evaluate_cost(const FreeVector& free, const ObservationSet& obs,
                                    bool with_jacobian) {
  if (!free.allFinite() || (free.array() <= 0.0).any())
    throw std::invalid_argument("free parameters must be finite and strictly positive");
  const ParameterSet params = with_free_parameters(obs.data, free);
  const IntegrationConfig cfg = obs.integration_config();
  const Trajectory traj = with_jacobian ? integrate_with_sensitivity(obs.initial, params, cfg)
                                        : integrate(obs.initial, params, cfg);

  const Eigen::Index m = static_cast<Eigen::Index>(obs.size());
  CostEvaluation eval;
  eval.residual.resize(kStateDim * m);
  if (with_jacobian) eval.jacobian.resize(kStateDim * m, kFreeParamCount);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    eval.residual.segment<kStateDim>(kStateDim * j) =
        obs.weights.cwiseProduct(traj.states[sj] - obs.targets[sj]);
    if (with_jacobian)
      eval.jacobian.middleRows<kStateDim>(kStateDim * j) =
          obs.weights.asDiagonal() * traj.sensitivities[sj];
  }
  eval.cost = eval.residual.squaredNorm();
  eval.relative_residual = std::sqrt(eval.cost) / obs.target_norm();
  return eval;
}

/// sqrt(L) / |X^tg|_2 <= tol (inclusive).
inline bool stopping_criterion(const CostEvaluation& eval, double tol) {
  return eval.relative_residual <= tol;
}

// ---------------------------------------------------------------------------
// Problems

template <class P>
concept LeastSquaresProblem = requires(const P& problem, const Eigen::VectorXd& x) {
  { problem.evaluate(x, true) } -> std::same_as<CostEvaluation>;
  { problem.admissible(x) } -> std::convertible_to<Eigen::VectorXd>;
};

/// The chemostat inverse problem. Trial components that are not strictly
/// positive are projected to `floor_fraction` times the reference scale.
class ChemostatProblem {
 public:
  ChemostatProblem(const ObservationSet& obs, const FreeVector& scale,
                   double floor_fraction = 1e-12)
      : obs_(&obs), floor_(floor_fraction * scale.cwiseAbs()) {}

  CostEvaluation evaluate(const Eigen::VectorXd& x, bool with_jacobian) const {
    return evaluate_cost(FreeVector(x), *obs_, with_jacobian);
  }

  Eigen::VectorXd admissible(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out = x;
    for (Eigen::Index k = 0; k < out.size(); ++k)
      if (!(out[k] > 0.0)) out[k] = floor_[k];
    return out;
  }

  const ObservationSet& observations() const { return *obs_; }

 private:
  const ObservationSet* obs_;
  FreeVector floor_;
};

// ---------------------------------------------------------------------------
// Phase bookkeeping

enum class Phase { Gradient, ModifiedGaussNewton, GaussNewton, FinalGaussNewton };

enum class PhaseStatus { Converged, IterationCap, Stalled, BlowUp, SingularNormalMatrix };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Gradient: return "gradient";
    case Phase::ModifiedGaussNewton: return "modified_gn";
    case Phase::GaussNewton: return "gn";
    case Phase::FinalGaussNewton: return "final_gn";
  }
  return "?";
}

inline std::string_view to_string(PhaseStatus s) {
  switch (s) {
    case PhaseStatus::Converged: return "converged";
    case PhaseStatus::IterationCap: return "iteration_cap";
    case PhaseStatus::Stalled: return "stalled";
    case PhaseStatus::BlowUp: return "blow_up";
    case PhaseStatus::SingularNormalMatrix: return "singular_normal_matrix";
  }
  return "?";
}

struct PhaseResult {
  Phase phase = Phase::GaussNewton;
  Eigen::VectorXd parameters;
  int iterations = 0;
  double cost = std::numeric_limits<double>::quiet_NaN();
  double relative_residual = std::numeric_limits<double>::quiet_NaN();
  PhaseStatus status = PhaseStatus::Converged;
  std::optional<double> blowup_time;

  /// Stalling (no decrease found along the search direction) is not a failure.
  bool failed() const {
    return status != PhaseStatus::Converged && status != PhaseStatus::Stalled;
  }

  std::string cause() const {
    std::string out(to_string(status));
    if (blowup_time) out += "@t=" + std::to_string(*blowup_time);
    return out;
  }
};

class SingularNormalMatrix : public std::runtime_error {
 public:
  SingularNormalMatrix() : std::runtime_error("normal matrix J'J is not positive definite") {}
};

// ---------------------------------------------------------------------------
// Gauss-Newton step

/// J'J assembled from the lower triangle, so it is exactly symmetric.
inline Eigen::MatrixXd normal_matrix(const Eigen::MatrixXd& J) {
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(J.cols(), J.cols());
  lower.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());
  return lower.selfadjointView<Eigen::Lower>();
}

/// Solves J'J delta = -J'r by Cholesky. Parameters whose Jacobian column is
/// identically zero carry no information (the residual does not depend on
/// them at all, e.g. TEP parameters before TEP onset); they get delta_k = 0
/// and the system is solved over the remaining columns.
inline Eigen::VectorXd gauss_newton_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& r) {
  std::vector<Eigen::Index> active;
  for (Eigen::Index k = 0; k < J.cols(); ++k)
    if (!J.col(k).isZero(0.0)) active.push_back(k);

  Eigen::VectorXd delta = Eigen::VectorXd::Zero(J.cols());
  if (active.empty()) {
    if (!r.isZero(0.0)) throw SingularNormalMatrix();
    return delta;
  }
  Eigen::MatrixXd reduced(J.rows(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k)
    reduced.col(static_cast<Eigen::Index>(k)) = J.col(active[k]);

  const Eigen::LLT<Eigen::MatrixXd> llt(normal_matrix(reduced));
  if (llt.info() != Eigen::Success) throw SingularNormalMatrix();
  const Eigen::VectorXd step = llt.solve(-(reduced.transpose() * r));
  if (!step.allFinite()) throw SingularNormalMatrix();
  for (std::size_t k = 0; k < active.size(); ++k)
    delta[active[k]] = step[static_cast<Eigen::Index>(k)];
  return delta;
}

inline Eigen::VectorXd gauss_newton_step(const CostEvaluation& eval) {
  if (!eval.has_jacobian()) throw std::invalid_argument("Gauss-Newton step needs a Jacobian");
  return gauss_newton_step(eval.jacobian, eval.residual);
}

// ---------------------------------------------------------------------------
// Line searches

struct LineSearchResult {
  double step = 0.0;
  double value = std::numeric_limits<double>::infinity();
};

/// Golden-section minimization of `phi` over [lo, hi] until the bracket is
/// narrower than rel_tol * (hi - lo). Returns the best evaluated point,
/// including `hi` when its value is supplied.
template <class Fn>
LineSearchResult golden_section(Fn&& phi, double lo, double hi, double rel_tol,
                                std::optional<double> value_at_hi = std::nullopt) {
  constexpr double kInvPhi = 0.6180339887498949;
  LineSearchResult best;
  if (value_at_hi) best = {hi, *value_at_hi};
  auto consider = [&best](double h, double v) {
    if (v < best.value) best = {h, v};
  };
  const double width = (hi - lo) * rel_tol;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = phi(c);
  double fd = phi(d);
  consider(c, fc);
  consider(d, fd);
  while (b - a > width) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = phi(c);
      consider(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = phi(d);
      consider(d, fd);
    }
  }
  return best;
}

namespace detail {

/// L(admissible(x + h d)), +inf on blow-up.
template <LeastSquaresProblem Problem>
auto cost_along(const Problem& problem, const Eigen::VectorXd& x, const Eigen::VectorXd& d) {
  return [&problem, &x, &d](double h) {
    try {
      return problem.evaluate(problem.admissible(x + h * d), false).cost;
    } catch (const BlowUpError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
}

template <LeastSquaresProblem Problem>
std::optional<CostEvaluation> try_evaluate(const Problem& problem, const Eigen::VectorXd& x,
                                           PhaseResult& result) {
  try {
    return problem.evaluate(x, true);
  } catch (const BlowUpError& e) {
    result.status = PhaseStatus::BlowUp;
    result.blowup_time = e.time();
    return std::nullopt;
  }
}

inline void record(PhaseResult& result, const CostEvaluation& eval) {
  result.cost = eval.cost;
  result.relative_residual = eval.relative_residual;
}

}  // namespace detail

struct LineSearchOptions {
  double golden_rel_tol = 1e-3;
  int max_halvings = 30;
  double initial_gradient_step = 1e-6;
  int max_doublings = 40;
};

// ---------------------------------------------------------------------------
// Descent phases

/// Steepest descent along -grad L with golden-section line search. The step
/// is measured relative to |x|: the trial point is x - h |x| g/|g|, with the
/// bracket [0, h*] found by doubling h from `initial_gradient_step` until L
/// increases or the integration blows up. Never increases L.
template <LeastSquaresProblem Problem>
PhaseResult gradient_descent_steps(const Problem& problem, const Eigen::VectorXd& x0, int n_steps,
                                   const LineSearchOptions& opts = {}) {
  PhaseResult result;
  result.phase = Phase::Gradient;
  result.parameters = x0;
  auto eval = detail::try_evaluate(problem, x0, result);
  if (!eval) return result;
  detail::record(result, *eval);

  Eigen::VectorXd x = x0;
  for (int s = 0; s < n_steps; ++s) {
    const Eigen::VectorXd g = eval->gradient();
    const double gnorm = g.norm();
    if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;
    const Eigen::VectorXd dir = -(x.norm() / gnorm) * g;
    auto phi = detail::cost_along(problem, x, dir);

    double h = opts.initial_gradient_step;
    double previous = eval->cost;
    for (int k = 0; k < opts.max_doublings; ++k) {
      const double v = phi(h);
      if (!(v < previous)) break;
      previous = v;
      h *= 2.0;
    }
    const LineSearchResult best = golden_section(phi, 0.0, h, opts.golden_rel_tol);
    if (!(best.value < eval->cost)) {
      result.status = PhaseStatus::Stalled;
      break;
    }
    x = problem.admissible(x + best.step * dir);
    auto next = detail::try_evaluate(problem, x, result);
    if (!next) break;  // cannot happen for a finite line-search value
    eval = std::move(next);
    detail::record(result, *eval);
    result.parameters = x;
    ++result.iterations;
  }
  return result;
}

struct SolverOptions {
  int max_iterations = 50;
  double tolerance = 1e-4;  // on the relative residual
  LineSearchOptions line_search{};
};

/// Gauss-Newton direction with backtracking from h = 1 until the trial
/// integration completes, then golden-section search for the step on
/// (0, h_k]. L is non-increasing across accepted iterations.
template <LeastSquaresProblem Problem>
PhaseResult modified_gauss_newton(const Problem& problem, const Eigen::VectorXd& x0,
                                  const SolverOptions& opts) {
  PhaseResult result;
  result.phase = Phase::ModifiedGaussNewton;
  result.parameters = x0;
  auto eval = detail::try_evaluate(problem, x0, result);
  if (!eval) return result;
  detail::record(result, *eval);

  Eigen::VectorXd x = x0;
  while (true) {
    if (stopping_criterion(*eval, opts.tolerance)) {
      result.status = PhaseStatus::Converged;
      return result;
    }
    if (result.iterations >= opts.max_iterations) {
      result.status = PhaseStatus::IterationCap;
      return result;
    }
    Eigen::VectorXd delta;
    try {
      delta = gauss_newton_step(*eval);
    } catch (const SingularNormalMatrix&) {
      result.status = PhaseStatus::SingularNormalMatrix;
      return result;
    }

    auto phi = detail::cost_along(problem, x, delta);
    double h = 1.0;
    std::optional<double> safe_value;
    std::optional<double> first_blowup;
    for (int k = 0; k <= opts.line_search.max_halvings; ++k, h *= 0.5) {
      try {
        safe_value = problem.evaluate(problem.admissible(x + h * delta), false).cost;
        break;
      } catch (const BlowUpError& e) {
        if (!first_blowup) first_blowup = e.time();
      }
    }
    if (!safe_value) {
      result.status = PhaseStatus::BlowUp;
      result.blowup_time = first_blowup;
      return result;
    }

    LineSearchResult best =
        golden_section(phi, 0.0, h, opts.line_search.golden_rel_tol, safe_value);
    // The minimizer can sit below the golden-section resolution; keep halving
    // within the remaining budget until L decreases.
    for (int k = 0; !(best.value < eval->cost) && k < opts.line_search.max_halvings; ++k) {
      h *= 0.5;
      best = {h, phi(h)};
    }
    if (!(best.value < eval->cost)) {
      result.status = PhaseStatus::Stalled;
      return result;
    }
    x = problem.admissible(x + best.step * delta);
    auto next = detail::try_evaluate(problem, x, result);
    if (!next) return result;
    eval = std::move(next);
    detail::record(result, *eval);
    result.parameters = x;
    ++result.iterations;
  }
}

/// Plain Gauss-Newton: x <- x + delta. A blow-up stops the phase and keeps
/// the last parameters whose integration completed.
template <LeastSquaresProblem Problem>
PhaseResult gauss_newton(const Problem& problem, const Eigen::VectorXd& x0,
                         const SolverOptions& opts, Phase tag = Phase::GaussNewton) {
  PhaseResult result;
  result.phase = tag;
  result.parameters = x0;
  auto eval = detail::try_evaluate(problem, x0, result);
  if (!eval) return result;
  detail::record(result, *eval);

  Eigen::VectorXd x = x0;
  while (true) {
    if (stopping_criterion(*eval, opts.tolerance)) {
      result.status = PhaseStatus::Converged;
      return result;
    }
    if (result.iterations >= opts.max_iterations) {
      result.status = PhaseStatus::IterationCap;
      return result;
    }
    Eigen::VectorXd delta;
    try {
      delta = gauss_newton_step(*eval);
    } catch (const SingularNormalMatrix&) {
      result.status = PhaseStatus::SingularNormalMatrix;
      return result;
    }
    const Eigen::VectorXd trial = problem.admissible(x + delta);
    auto next = detail::try_evaluate(problem, trial, result);
    if (!next) return result;
    x = trial;
    eval = std::move(next);
    detail::record(result, *eval);
    result.parameters = x;
    ++result.iterations;
  }
}

// ---------------------------------------------------------------------------
// Staged driver

struct IdentificationConfig {
  double half_window = 20.0;  // first window end [day]
  double window_step = 1.0;
  double final_time = 50.0;
  int gradient_steps = 2;
  SolverOptions modified_gn{50, 1e-4, {}};
  SolverOptions gn{50, 1e-4, {}};
  SolverOptions final_gn{50, 1e-10, {}};
  LineSearchOptions line_search{};
  double floor_fraction = 1e-12;

  void validate() const {
    if (!(half_window > 0.0) || !(half_window < final_time))
      throw std::invalid_argument("need 0 < half_window < final_time");
    if (!(window_step > 0.0)) throw std::invalid_argument("window_step must be positive");
    for (const SolverOptions* o : {&modified_gn, &gn, &final_gn})
      if (!(o->tolerance > 0.0) || o->max_iterations < 0)
        throw std::invalid_argument("solver tolerances must be positive");
    if (!(line_search.golden_rel_tol > 0.0)) throw std::invalid_argument("bad golden tolerance");
  }
};

struct StageResult {
  double window_end = 0.0;
  std::vector<PhaseResult> phases;
  FreeVector parameters = FreeVector::Zero();
  double relative_residual = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;  // irrecoverable: the pipeline stopped here
};

struct IdentificationResult {
  FreeVector parameters = FreeVector::Zero();
  std::vector<StageResult> stages;
  bool failed = false;
  /// Last finite relative residual seen, NaN if none.
  double relative_residual = std::numeric_limits<double>::quiet_NaN();

  /// True when the pipeline ran to the end and its last phase neither blew
  /// up nor hit a singular normal matrix.
  bool succeeded() const {
    if (failed || stages.empty() || stages.back().phases.empty()) return false;
    return !stages.back().phases.back().failed() && std::isfinite(relative_residual);
  }
};

/// Windows [0, T_w], T_w = half_window, half_window + step, ..., final_time:
/// gradient pre-steps, modified GN, plain GN, each starting from the previous
/// result; then a tight plain GN on the full window.
inline IdentificationResult staged_identify(const FreeVector& p0, const ObservationSet& full,
                                            const IdentificationConfig& cfg = {}) {
  cfg.validate();
  full.validate();
  IdentificationResult out;
  out.parameters = p0;

  std::vector<double> window_ends;
  const double slack = 1e-9 * cfg.final_time;
  for (int k = 0;; ++k) {
    const double t = cfg.half_window + k * cfg.window_step;
    if (t > cfg.final_time + slack) break;
    window_ends.push_back(std::min(t, cfg.final_time));
  }
  if (window_ends.back() < cfg.final_time - slack) window_ends.push_back(cfg.final_time);

  Eigen::VectorXd x = p0;
  auto note_residual = [&out](const PhaseResult& r) {
    if (std::isfinite(r.relative_residual)) out.relative_residual = r.relative_residual;
  };

  SolverOptions mgn = cfg.modified_gn;
  mgn.line_search = cfg.line_search;

  for (const double t_end : window_ends) {
    const ObservationSet obs = full.restricted_to(t_end);
    const ChemostatProblem problem(obs, p0, cfg.floor_fraction);
    StageResult stage;
    stage.window_end = t_end;

    PhaseResult grad = gradient_descent_steps(problem, x, cfg.gradient_steps, cfg.line_search);
    note_residual(grad);
    const bool start_blew_up = grad.status == PhaseStatus::BlowUp && grad.iterations == 0;
    x = grad.parameters;
    stage.phases.push_back(grad);

    if (!start_blew_up) {
      PhaseResult modified = modified_gauss_newton(problem, x, mgn);
      note_residual(modified);
      x = modified.parameters;
      stage.phases.push_back(modified);
      if (modified.status == PhaseStatus::BlowUp) {
        stage.failed = true;
      } else {
        PhaseResult plain = gauss_newton(problem, x, cfg.gn);
        note_residual(plain);
        x = plain.parameters;
        stage.phases.push_back(plain);
      }
    } else {
      stage.failed = true;
    }

    stage.parameters = x;
    stage.relative_residual = stage.phases.back().relative_residual;
    out.stages.push_back(stage);
    if (stage.failed) {
      out.failed = true;
      out.parameters = x;
      return out;
    }
  }

  const ChemostatProblem problem(full, p0, cfg.floor_fraction);
  PhaseResult final_pass = gauss_newton(problem, x, cfg.final_gn, Phase::FinalGaussNewton);
  note_residual(final_pass);
  x = final_pass.parameters;
  StageResult stage;
  stage.window_end = full.times.back();
  stage.phases.push_back(final_pass);
  stage.parameters = x;
  stage.relative_residual = final_pass.relative_residual;
  out.stages.push_back(stage);
  out.parameters = x;
  return out;
}

/// Stage log: window_end,phase,iterations,rel_residual,failed,cause.
inline void write_stage_log(std::ostream& out, const IdentificationResult& result) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "window_end,phase,iterations,rel_residual,failed,cause\n";
  for (const auto& stage : result.stages)
    for (const auto& phase : stage.phases)
      out << stage.window_end << ',' << to_string(phase.phase) << ',' << phase.iterations << ','
          << phase.relative_residual << ',' << (phase.failed() ? 1 : 0) << ',' << phase.cause()
          << '\n';
  out.precision(old_precision);
}

}  // namespace diatom
