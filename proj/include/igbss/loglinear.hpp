#pragma once
#ifndef IGBSS_LOGLINEAR_HPP
#define IGBSS_LOGLINEAR_HPP

// Log-linear model on a SampleSpace:
//
//   log p(w) = sum_{s in S, s <= w} theta_s - psi(theta)
//   eta_w    = sum_{s >= w} p(s)
//
// with S = mixing and source states. The received layer carries no
// parameters. All vectors over the space follow its enumeration order;
// vectors over S follow the parameter order (state index - 1).

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "igbss/poset.hpp"

namespace igbss {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when a computation leaves the finite range (overflow, NaN).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LogLinearState {
  const SampleSpace* space = nullptr;
  VectorXd theta;  // over S
  double psi = 0.0;
  VectorXd log_p;  // over the whole space
  VectorXd p;      // over the whole space
  // Expectation parameters indexed like p. Entry 0 is the bottom state and
  // always holds exactly 1; it is kept only so indices line up.
  VectorXd eta;

  double theta_bottom() const { return -psi; }
};

/// log-sum-exp with max subtraction; the summation runs in index order.
inline double log_sum_exp(const VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) throw NumericalError("log_sum_exp: non-finite maximum");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - mx);
  return mx + std::log(acc);
}

/// Evaluates p and psi for the given natural parameters. `eta` is left empty.
inline LogLinearState compute_p(const SampleSpace& space, const VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != space.parameter_count())
    throw std::invalid_argument("theta has " + std::to_string(theta.size()) + " entries, expected " +
                                std::to_string(space.parameter_count()));
  if (!theta.allFinite()) throw NumericalError("theta contains non-finite values");

  const auto n = static_cast<Eigen::Index>(space.size());
  const auto first = space.mixing_begin();
  const auto last = space.received_begin();

  VectorXd log_weight(n);
  for (SampleSpace::Index w = 0; w < space.size(); ++w) {
    double acc = 0.0;
    for (SampleSpace::Index s : space.downset(w)) {
      if (s < first) continue;
      if (s >= last) break;
      acc += theta[s - 1];
    }
    log_weight[w] = acc;
  }

  LogLinearState st;
  st.space = &space;
  st.theta = theta;
  st.psi = log_sum_exp(log_weight);
  st.log_p = log_weight.array() - st.psi;
  st.p = st.log_p.array().exp();
  return st;
}

/// eta_w = sum of p over the up-set of w, for every state.
inline VectorXd compute_eta(const LogLinearState& state) {
  if (!state.space) throw std::invalid_argument("compute_eta: state has no sample space");
  const SampleSpace& space = *state.space;
  VectorXd eta(static_cast<Eigen::Index>(space.size()));
  eta[0] = 1.0;
  for (SampleSpace::Index w = 1; w < space.size(); ++w) {
    double acc = 0.0;
    for (SampleSpace::Index s : space.upset(w)) acc += state.p[s];
    eta[w] = acc;
  }
  return eta;
}

/// compute_p followed by compute_eta.
inline LogLinearState evaluate(const SampleSpace& space, const VectorXd& theta) {
  LogLinearState st = compute_p(space, theta);
  st.eta = compute_eta(st);
  return st;
}

enum class NormScheme { Sum, MinMax, ExpKernel };

inline const char* to_string(NormScheme s) {
  switch (s) {
    case NormScheme::Sum: return "sum";
    case NormScheme::MinMax: return "minmax";
    case NormScheme::ExpKernel: return "exp";
  }
  return "?";
}

inline NormScheme parse_norm_scheme(const std::string& name) {
  if (name == "sum") return NormScheme::Sum;
  if (name == "minmax") return NormScheme::MinMax;
  if (name == "exp" || name == "expkernel") return NormScheme::ExpKernel;
  throw std::invalid_argument("unknown normalization scheme '" + name + "'");
}

/// Everything needed to map empirical probabilities back to the input scale.
///
/// - Sum:    p = x / total
/// - MinMax: p = (x + epsilon - data_min) / (data_max + epsilon - data_min) / total
/// - Exp:    p = exp(x - shift) / total
struct NormalizationRecord {
  NormScheme scheme = NormScheme::Sum;
  double data_min = 0.0;
  double data_max = 0.0;
  double epsilon = 0.0;
  double shift = 0.0;
  double total = 1.0;

  double invert(double prob) const {
    switch (scheme) {
      case NormScheme::Sum: return prob * total;
      case NormScheme::MinMax: return prob * total * (data_max + epsilon - data_min) - epsilon + data_min;
      case NormScheme::ExpKernel: return std::log(prob * total) + shift;
    }
    return prob;
  }
};

struct EmpiricalDistribution {
  const SampleSpace* space = nullptr;
  VectorXd p_hat;    // over the whole space, zero off the received layer
  VectorXd eta_hat;  // over S
  NormalizationRecord normalization;

  /// Received-layer probabilities reshaped to L x M.
  MatrixXd received_matrix() const {
    const auto& d = space->dims();
    MatrixXd out(static_cast<Eigen::Index>(d.rows_received), static_cast<Eigen::Index>(d.samples));
    for (std::size_t l = 0; l < d.rows_received; ++l)
      for (std::size_t m = 0; m < d.samples; ++m)
        out(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) = p_hat[space->received_index(l, m)];
    return out;
  }
};

/// Default min-max epsilon: 1e-3 of the data range.
inline constexpr double kDefaultMinMaxEpsilonFraction = 1e-3;

/// Normalizes an L x M received matrix into an empirical distribution on the
/// received layer. `epsilon` applies to MinMax only; a negative value selects
/// the default fraction of the data range.
inline EmpiricalDistribution empirical_distribution(const SampleSpace& space, const MatrixXd& X, NormScheme scheme,
                                                    double epsilon = -1.0) {
  const auto& d = space.dims();
  if (static_cast<std::size_t>(X.rows()) != d.rows_received || static_cast<std::size_t>(X.cols()) != d.samples)
    throw std::invalid_argument("received matrix is " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                                ", sample space expects " + std::to_string(d.rows_received) + "x" +
                                std::to_string(d.samples));
  if (!X.allFinite()) throw std::invalid_argument("received matrix contains non-finite entries");

  NormalizationRecord rec;
  rec.scheme = scheme;
  rec.data_min = X.minCoeff();
  rec.data_max = X.maxCoeff();

  MatrixXd mass(X.rows(), X.cols());
  switch (scheme) {
    case NormScheme::Sum:
      if (rec.data_min <= 0.0)
        throw std::invalid_argument("sum normalization requires strictly positive entries; use minmax or exp");
      mass = X;
      break;
    case NormScheme::MinMax: {
      const double range = rec.data_max - rec.data_min;
      if (!(range > 0.0)) throw std::invalid_argument("minmax normalization requires a non-constant matrix");
      rec.epsilon = epsilon < 0.0 ? kDefaultMinMaxEpsilonFraction * range : epsilon;
      if (!(rec.epsilon > 0.0)) throw std::invalid_argument("minmax epsilon must be positive");
      mass = (X.array() + rec.epsilon - rec.data_min) / (rec.data_max + rec.epsilon - rec.data_min);
      break;
    }
    case NormScheme::ExpKernel:
      rec.shift = rec.data_max;
      mass = (X.array() - rec.shift).exp();
      break;
  }

  double total = 0.0;
  for (Eigen::Index l = 0; l < mass.rows(); ++l)
    for (Eigen::Index m = 0; m < mass.cols(); ++m) total += mass(l, m);
  rec.total = total;

  EmpiricalDistribution emp;
  emp.space = &space;
  emp.normalization = rec;
  emp.p_hat = VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
  for (std::size_t l = 0; l < d.rows_received; ++l)
    for (std::size_t m = 0; m < d.samples; ++m)
      emp.p_hat[space.received_index(l, m)] = mass(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) / total;

  emp.eta_hat.resize(static_cast<Eigen::Index>(space.parameter_count()));
  for (std::size_t p = 0; p < space.parameter_count(); ++p) {
    double acc = 0.0;
    for (SampleSpace::Index w : space.upset(SampleSpace::state_of_parameter(p)))
      if (w >= space.received_begin()) acc += emp.p_hat[w];
    emp.eta_hat[static_cast<Eigen::Index>(p)] = acc;
  }
  return emp;
}

/// KL(p_hat || p), with 0 log 0 = 0.
inline double kl_divergence(const EmpiricalDistribution& emp, const LogLinearState& state) {
  if (emp.space != state.space) throw std::invalid_argument("kl_divergence: distributions live on different spaces");
  double acc = 0.0;
  for (Eigen::Index w = 0; w < emp.p_hat.size(); ++w) {
    const double q = emp.p_hat[w];
    if (q > 0.0) acc += q * (std::log(q) - state.log_p[w]);
  }
  return acc;
}

/// Gradient of the KL objective w.r.t. theta: eta_s - eta_hat_s over S.
inline VectorXd kl_gradient(const LogLinearState& state, const EmpiricalDistribution& emp) {
  if (emp.space != state.space) throw std::invalid_argument("kl_gradient: distributions live on different spaces");
  if (state.eta.size() != state.p.size()) throw std::invalid_argument("kl_gradient: eta has not been computed");
  const auto n = static_cast<Eigen::Index>(state.space->parameter_count());
  return state.eta.segment(1, n) - emp.eta_hat;
}

/// Parameter range [begin, end) of a layer in S order.
struct ParameterRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

inline ParameterRange parameter_range(const SampleSpace& space, Layer layer) {
  switch (layer) {
    case Layer::Mixing: return {0, space.mixing_size()};
    case Layer::Source: return {space.mixing_size(), space.parameter_count()};
    default: throw std::invalid_argument(std::string("layer ") + to_string(layer) + " carries no parameters");
  }
}

struct FisherBlock {
  Layer layer = Layer::Source;
  ParameterRange params;
  MatrixXd G;
};

/// Fisher information restricted to one layer's parameters:
///   g_{ss'} = sum_w [s <= w][s' <= w] p(w) - eta_s eta_s'.
inline FisherBlock fisher_block(const LogLinearState& state, Layer layer) {
  if (!state.space) throw std::invalid_argument("fisher_block: state has no sample space");
  if (state.eta.size() != state.p.size()) throw std::invalid_argument("fisher_block: eta has not been computed");
  const SampleSpace& space = *state.space;
  FisherBlock fb;
  fb.layer = layer;
  fb.params = parameter_range(space, layer);
  const auto k = static_cast<Eigen::Index>(fb.params.size());
  fb.G = MatrixXd::Zero(k, k);

  const auto lo = SampleSpace::state_of_parameter(fb.params.begin);
  const auto hi = SampleSpace::state_of_parameter(fb.params.end);
  std::vector<Eigen::Index> members;
  for (SampleSpace::Index w = 0; w < space.size(); ++w) {
    members.clear();
    for (SampleSpace::Index s : space.downset(w)) {
      if (s < lo) continue;
      if (s >= hi) break;
      members.push_back(static_cast<Eigen::Index>(s - lo));
    }
    const double pw = state.p[w];
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i; j < members.size(); ++j) fb.G(members[i], members[j]) += pw;
  }
  const auto eta = state.eta.segment(lo, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) {
      fb.G(i, j) -= eta[i] * eta[j];
      fb.G(j, i) = fb.G(i, j);
    }
  return fb;
}

}  // namespace igbss

#endif  // IGBSS_LOGLINEAR_HPP
