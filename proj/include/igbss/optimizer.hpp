#pragma once
#ifndef IGBSS_OPTIMIZER_HPP
#define IGBSS_OPTIMIZER_HPP

// KL minimization over theta (received-layer parameters pinned at zero).
//
// Gradient descent:  theta <- theta - lr * (eta - eta_hat)
// Natural gradient:  theta_Z <- theta_Z - G_Z^{-1} (eta_Z - eta_hat_Z), then
//                    theta_A <- theta_A - G_A^{-1} (eta_A - eta_hat_A)
// where the mixing block is built from the distribution after the source
// update. Blocks are solved as damped systems (G + damping I) x = d, and each
// block step is halved while it raises the KL divergence.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "igbss/loglinear.hpp"
#include "igbss/poset.hpp"

namespace igbss {

enum class Method { GradientDescent, NaturalGradient };

inline const char* to_string(Method m) {
  return m == Method::GradientDescent ? "gd" : "ng";
}

inline Method parse_method(const std::string& name) {
  if (name == "gd") return Method::GradientDescent;
  if (name == "ng") return Method::NaturalGradient;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

struct Init {
  enum class Kind { Zeros, RandomNormal };
  Kind kind = Kind::Zeros;
  double sigma = 0.1;
  std::uint64_t seed = 0;

  static Init zeros() { return {}; }
  static Init random_normal(double sigma, std::uint64_t seed) { return {Kind::RandomNormal, sigma, seed}; }
};

struct FitConfig {
  Method method = Method::NaturalGradient;
  double lr = 1.0;
  double tol = 1e-8;
  std::size_t max_iter = 0;  // 0 selects the method default
  double damping = 1e-9;
  Init init;
  bool record_trace = true;
  // Natural gradient only: halve a block step that raises the KL divergence,
  // at most this many times. 0 takes every step as computed.
  std::size_t max_halvings = 30;

  std::size_t effective_max_iter() const {
    if (max_iter) return max_iter;
    return method == Method::GradientDescent ? 100000 : 1000;
  }

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(tol >= 0.0)) throw std::invalid_argument("tolerance must be non-negative");
    if (!(damping >= 0.0)) throw std::invalid_argument("damping must be non-negative");
    if (init.kind == Init::Kind::RandomNormal && !(init.sigma >= 0.0))
      throw std::invalid_argument("init sigma must be non-negative");
  }
};

/// Wall-clock split of a fit, in seconds.
struct PhaseTimes {
  double evaluate = 0.0;  // p, eta, gradient
  double fisher = 0.0;    // block assembly
  double solve = 0.0;     // damped linear solves
};

struct NgStepStats {
  std::size_t fallbacks = 0;
  std::size_t halvings = 0;
  PhaseTimes times;
};

struct FitReport {
  std::size_t iterations = 0;
  double final_kl = 0.0;
  double final_grad_inf_norm = 0.0;
  bool converged = false;
  std::vector<double> kl_trace;  // KL after 0, 1, ..., iterations updates
  std::size_t fallback_steps = 0;
  std::size_t step_halvings = 0;
  PhaseTimes times;
};

struct FitResult {
  LogLinearState state;
  FitReport report;
};

inline VectorXd initial_theta(const SampleSpace& space, const Init& init) {
  const auto n = static_cast<Eigen::Index>(space.parameter_count());
  if (init.kind == Init::Kind::Zeros) return VectorXd::Zero(n);
  std::mt19937_64 rng(init.seed);
  std::normal_distribution<double> normal(0.0, init.sigma);
  VectorXd theta(n);
  for (Eigen::Index i = 0; i < n; ++i) theta[i] = normal(rng);
  return theta;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void require_same_space(const LogLinearState& state, const EmpiricalDistribution& emp) {
  if (!state.space || state.space != emp.space)
    throw std::invalid_argument("state and empirical distribution live on different spaces");
}

inline void require_finite(const VectorXd& theta, std::size_t iteration) {
  if (theta.allFinite()) return;
  std::ostringstream msg;
  msg << "theta became non-finite at iteration " << iteration;
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    if (!std::isfinite(theta[i])) {
      msg << " (first bad parameter index " << i << ")";
      break;
    }
  throw NumericalError(msg.str());
}

// Solves (G + damping I) x = rhs. Returns false when the factorization fails
// or the solution is not finite.
inline bool damped_solve(const MatrixXd& G, const VectorXd& rhs, double damping, VectorXd& x) {
  MatrixXd A = G;
  A.diagonal().array() += damping;
  Eigen::LDLT<MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) return false;
  x = ldlt.solve(rhs);
  return ldlt.info() == Eigen::Success && x.allFinite();
}

// One natural-gradient block update in place. A failed damped solve falls
// back to a unit gradient step. With max_halvings > 0 the step is halved
// until the KL divergence no longer rises.
inline void ng_block_update(const LogLinearState& state, const EmpiricalDistribution& emp, Layer layer,
                            double damping, std::size_t max_halvings, VectorXd& theta, NgStepStats* stats) {
  PhaseTimes* times = stats ? &stats->times : nullptr;
  auto t0 = Clock::now();
  FisherBlock fb = fisher_block(state, layer);
  const VectorXd grad = kl_gradient(state, emp);
  if (times) times->fisher += seconds_since(t0);

  const auto b = static_cast<Eigen::Index>(fb.params.begin);
  const auto k = static_cast<Eigen::Index>(fb.params.size());
  if (k == 0) return;
  const VectorXd g = grad.segment(b, k);

  t0 = Clock::now();
  VectorXd step;
  if (!damped_solve(fb.G, g, damping, step)) {
    step = g;
    if (stats) ++stats->fallbacks;
  }
  if (times) times->solve += seconds_since(t0);

  const VectorXd start = theta.segment(b, k);
  theta.segment(b, k) = start - step;
  if (max_halvings == 0) return;

  t0 = Clock::now();
  const double kl0 = kl_divergence(emp, state);
  const double slack = 1e-12 * std::max(1.0, std::abs(kl0));
  for (std::size_t h = 0; h < max_halvings; ++h) {
    if (theta.allFinite() && kl_divergence(emp, evaluate(*state.space, theta)) <= kl0 + slack) break;
    step *= 0.5;
    theta.segment(b, k) = start - step;
    if (stats) ++stats->halvings;
  }
  if (times) times->evaluate += seconds_since(t0);
}

}  // namespace detail

/// theta - lr * (eta - eta_hat). `state` must carry eta.
inline VectorXd fit_step_gd(const LogLinearState& state, const EmpiricalDistribution& emp, double lr) {
  detail::require_same_space(state, emp);
  return state.theta - lr * kl_gradient(state, emp);
}

/// One block natural-gradient iteration (source block, then mixing block
/// against the refreshed distribution). `state` must carry eta.
inline VectorXd fit_step_ng(const LogLinearState& state, const EmpiricalDistribution& emp, double damping,
                            std::size_t max_halvings = 0, NgStepStats* stats = nullptr) {
  detail::require_same_space(state, emp);
  const SampleSpace& space = *state.space;
  VectorXd theta = state.theta;

  detail::ng_block_update(state, emp, Layer::Source, damping, max_halvings, theta, stats);
  detail::require_finite(theta, 0);

  auto t0 = detail::Clock::now();
  const LogLinearState mid = evaluate(space, theta);
  if (stats) stats->times.evaluate += detail::seconds_since(t0);

  detail::ng_block_update(mid, emp, Layer::Mixing, damping, max_halvings, theta, stats);
  return theta;
}

/// Minimizes KL(p_hat || p) from the configured initial point. Stops when
/// max_s |eta_s - eta_hat_s| <= tol or after the iteration budget.
inline FitResult fit(const SampleSpace& space, const EmpiricalDistribution& emp, const FitConfig& config) {
  config.validate();
  if (emp.space != &space) throw std::invalid_argument("empirical distribution belongs to a different space");

  FitReport report;
  const std::size_t budget = config.effective_max_iter();

  auto t0 = detail::Clock::now();
  LogLinearState state = evaluate(space, initial_theta(space, config.init));
  VectorXd grad = kl_gradient(state, emp);
  report.times.evaluate += detail::seconds_since(t0);

  std::size_t it = 0;
  double kl = kl_divergence(emp, state);
  if (config.record_trace) report.kl_trace.push_back(kl);
  NgStepStats stats;
  while (grad.lpNorm<Eigen::Infinity>() > config.tol && it < budget) {
    VectorXd next;
    if (config.method == Method::GradientDescent) {
      next = fit_step_gd(state, emp, config.lr);
    } else {
      next = fit_step_ng(state, emp, config.damping, config.max_halvings, &stats);
      if (config.lr != 1.0) next = state.theta + config.lr * (next - state.theta);
    }
    ++it;
    detail::require_finite(next, it);

    t0 = detail::Clock::now();
    state = evaluate(space, next);
    kl = kl_divergence(emp, state);
    grad = kl_gradient(state, emp);
    report.times.evaluate += detail::seconds_since(t0);
    if (config.record_trace) report.kl_trace.push_back(kl);
  }
  report.fallback_steps = stats.fallbacks;
  report.step_halvings = stats.halvings;
  report.times.evaluate += stats.times.evaluate;
  report.times.fisher += stats.times.fisher;
  report.times.solve += stats.times.solve;

  report.iterations = it;
  report.final_grad_inf_norm = grad.lpNorm<Eigen::Infinity>();
  report.final_kl = kl;
  report.converged = report.final_grad_inf_norm <= config.tol;
  return {std::move(state), std::move(report)};
}

}  // namespace igbss

#endif  // IGBSS_OPTIMIZER_HPP
