#pragma once
#ifndef IGBSS_SEPARATION_HPP
#define IGBSS_SEPARATION_HPP

// End-to-end separation and the evaluation protocol used to score it:
// permutation matching by exhaustive search, RMSE and SNR in dB.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "igbss/loglinear.hpp"
#include "igbss/optimizer.hpp"
#include "igbss/poset.hpp"

namespace igbss {

enum class SignalRole { Source, Received, Recovered };

/// Rows are signals, columns are samples.
struct SignalMatrix {
  MatrixXd data;
  SignalRole role = SignalRole::Received;

  SignalMatrix() = default;
  SignalMatrix(MatrixXd d, SignalRole r) : data(std::move(d)), role(r) {
    if (!data.allFinite()) throw std::invalid_argument("signal matrix contains non-finite entries");
  }
  Eigen::Index signals() const { return data.rows(); }
  Eigen::Index samples() const { return data.cols(); }
};

struct MixingParameter {
  StateId state;
  double theta = 0.0;
};

struct SeparationResult {
  SignalMatrix recovered;            // N x M, mapped to the input data range
  MatrixXd source_probabilities;     // raw p(z_nm), N x M
  std::vector<MixingParameter> mixing_params;
  FitReport report;
  NormalizationRecord normalization;
  std::shared_ptr<const SampleSpace> space;
};

/// Rescales every row to [0, 1]. Constant rows become all zeros.
inline MatrixXd minmax_rows(const MatrixXd& M) {
  MatrixXd out(M.rows(), M.cols());
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    const double lo = M.row(r).minCoeff();
    const double range = M.row(r).maxCoeff() - lo;
    if (range > 0.0)
      out.row(r) = (M.row(r).array() - lo) / range;
    else
      out.row(r).setZero();
  }
  return out;
}

/// Standardizes every row to zero mean and unit (population) standard deviation.
inline MatrixXd zscore_rows(const MatrixXd& M) {
  MatrixXd out(M.rows(), M.cols());
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    const double mean = M.row(r).mean();
    const double sd = std::sqrt((M.row(r).array() - mean).square().mean());
    if (sd > 0.0)
      out.row(r) = (M.row(r).array() - mean) / sd;
    else
      out.row(r).setZero();
  }
  return out;
}

/// Fits the model to an L x M received matrix and reads the N recovered
/// signals off the source layer. Each recovered row is min-max rescaled and
/// then mapped onto the [min, max] range of the input.
inline SeparationResult separate(const SignalMatrix& X, std::size_t N, std::size_t k, NormScheme scheme,
                                 const FitConfig& config, double minmax_epsilon = -1.0) {
  if (X.signals() < 2) throw std::invalid_argument("separation needs at least two received signals");
  if (N < 1) throw std::invalid_argument("number of sources must be positive");
  const auto L = static_cast<std::size_t>(X.signals());
  const auto M = static_cast<std::size_t>(X.samples());

  SeparationResult res;
  res.space = std::make_shared<const SampleSpace>(build_sample_space(L, N, M, k));
  const SampleSpace& space = *res.space;
  const EmpiricalDistribution emp = empirical_distribution(space, X.data, scheme, minmax_epsilon);
  res.normalization = emp.normalization;

  FitResult fr = fit(space, emp, config);
  res.report = std::move(fr.report);

  res.source_probabilities.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(M));
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m)
      res.source_probabilities(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) =
          fr.state.p[space.source_index(n, m)];

  const double lo = emp.normalization.data_min;
  const double hi = emp.normalization.data_max;
  MatrixXd unit = minmax_rows(res.source_probabilities);
  res.recovered = SignalMatrix(lo + (hi - lo) * unit.array(), SignalRole::Recovered);

  for (std::size_t p = 0; p < space.mixing_size(); ++p)
    res.mixing_params.push_back({space.state(SampleSpace::state_of_parameter(p)), fr.state.theta[p]});
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Matching {
  std::vector<std::size_t> permutation;  // truth row j is matched by recovered row permutation[j]
  std::vector<int> signs;                // +1 or -1 per truth row
  MatrixXd matched;                      // recovered rows reordered (and sign-adjusted) to align with truth
  double distance = 0.0;                 // Euclidean (Frobenius) distance of matched vs truth
};

inline constexpr std::size_t kMaxExhaustiveSignals = 8;

namespace detail {

// cost(j, i, s) = squared distance when recovered row i with sign s in {0:+, 1:-}
// is assigned to truth row j. Returns the optimal permutation and signs.
template <class Cost>
std::pair<std::vector<std::size_t>, std::vector<int>> exhaustive_assignment(std::size_t n, bool allow_sign,
                                                                            Cost&& cost) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best_perm = perm;
  std::vector<int> best_signs(n, 1);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> signs(n, 1);
  do {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double c = cost(j, perm[j], 0);
      signs[j] = 1;
      if (allow_sign) {
        const double flipped = cost(j, perm[j], 1);
        if (flipped < c) {
          c = flipped;
          signs[j] = -1;
        }
      }
      total += c;
    }
    if (total < best) {
      best = total;
      best_perm = perm;
      best_signs = signs;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_perm, best_signs};
}

inline void require_same_shape(const MatrixXd& a, const MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

}  // namespace detail

/// Finds the row permutation (and, when allowed, per-row sign flips) of
/// `recovered` closest to `truth` in Euclidean distance by exhaustive search.
inline Matching match_permutation(const MatrixXd& recovered, const MatrixXd& truth, bool allow_sign) {
  detail::require_same_shape(recovered, truth, "match_permutation");
  const auto n = static_cast<std::size_t>(truth.rows());
  if (n > kMaxExhaustiveSignals)
    throw std::invalid_argument("exhaustive permutation search supports at most " +
                                std::to_string(kMaxExhaustiveSignals) + " signals");
  auto cost = [&](std::size_t j, std::size_t i, int s) {
    const auto ri = static_cast<Eigen::Index>(i), rj = static_cast<Eigen::Index>(j);
    return s ? (recovered.row(ri) + truth.row(rj)).squaredNorm() : (recovered.row(ri) - truth.row(rj)).squaredNorm();
  };
  auto [perm, signs] = detail::exhaustive_assignment(n, allow_sign, cost);
  Matching out{perm, signs, MatrixXd(recovered.rows(), recovered.cols()), 0.0};
  for (std::size_t j = 0; j < n; ++j)
    out.matched.row(static_cast<Eigen::Index>(j)) = signs[j] * recovered.row(static_cast<Eigen::Index>(perm[j]));
  out.distance = (out.matched - truth).norm();
  return out;
}

/// sqrt(mean over all entries of (estimate - truth)^2).
inline double rmse(const MatrixXd& estimate, const MatrixXd& truth) {
  detail::require_same_shape(estimate, truth, "rmse");
  if (truth.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(truth.size()));
}

/// 20 log10(||truth|| / ||truth - estimate||); +infinity when the error is zero.
inline double snr_db(const MatrixXd& estimate, const MatrixXd& truth) {
  detail::require_same_shape(estimate, truth, "snr_db");
  const double err = (truth - estimate).norm();
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(truth.norm() / err);
}

inline double pearson(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need equal lengths >= 2");
  const Eigen::RowVectorXd da = a.array() - a.mean();
  const Eigen::RowVectorXd db = b.array() - b.mean();
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (denom == 0.0) return 0.0;
  return da.dot(db) / denom;
}

/// How both matrices are rescaled per signal before scoring.
enum class MetricScaling { MinMax, ZScore };

inline const char* to_string(MetricScaling s) { return s == MetricScaling::MinMax ? "minmax" : "zscore"; }

inline MetricScaling parse_metric_scaling(const std::string& name) {
  if (name == "minmax") return MetricScaling::MinMax;
  if (name == "zscore") return MetricScaling::ZScore;
  throw std::invalid_argument("unknown metric scaling '" + name + "'");
}

inline MatrixXd rescale_rows(const MatrixXd& M, MetricScaling scaling) {
  return scaling == MetricScaling::MinMax ? minmax_rows(M) : zscore_rows(M);
}

struct SignalScore {
  double rmse = 0.0;
  double snr_db = 0.0;
  double correlation = 0.0;
};

struct Evaluation {
  Matching matching;  // on rescaled signals
  MatrixXd truth;     // rescaled truth
  std::vector<SignalScore> per_signal;
  double rmse = 0.0;
  double snr_db = 0.0;
};

/// Scoring protocol: rescale every recovered and true row, match rows by
/// exhaustive search (a sign flip is applied before rescaling), then report
/// RMSE / SNR / Pearson correlation per signal and over the whole matrix.
inline Evaluation evaluate_recovery(const MatrixXd& recovered, const MatrixXd& truth, bool allow_sign,
                                    MetricScaling scaling = MetricScaling::MinMax) {
  detail::require_same_shape(recovered, truth, "evaluate_recovery");
  const auto n = static_cast<std::size_t>(truth.rows());
  if (n > kMaxExhaustiveSignals)
    throw std::invalid_argument("exhaustive permutation search supports at most " +
                                std::to_string(kMaxExhaustiveSignals) + " signals");
  Evaluation ev;
  ev.truth = rescale_rows(truth, scaling);
  const MatrixXd pos = rescale_rows(recovered, scaling);
  const MatrixXd neg = rescale_rows(-recovered, scaling);
  auto cost = [&](std::size_t j, std::size_t i, int s) {
    const auto ri = static_cast<Eigen::Index>(i), rj = static_cast<Eigen::Index>(j);
    return ((s ? neg : pos).row(ri) - ev.truth.row(rj)).squaredNorm();
  };
  auto [perm, signs] = detail::exhaustive_assignment(n, allow_sign, cost);
  ev.matching = Matching{perm, signs, MatrixXd(truth.rows(), truth.cols()), 0.0};
  for (std::size_t j = 0; j < n; ++j) {
    const auto src = static_cast<Eigen::Index>(perm[j]);
    ev.matching.matched.row(static_cast<Eigen::Index>(j)) = signs[j] > 0 ? pos.row(src) : neg.row(src);
  }
  ev.matching.distance = (ev.matching.matched - ev.truth).norm();

  for (std::size_t j = 0; j < n; ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    const MatrixXd est = ev.matching.matched.row(r);
    const MatrixXd tru = ev.truth.row(r);
    ev.per_signal.push_back({igbss::rmse(est, tru), igbss::snr_db(est, tru),
                             pearson(ev.matching.matched.row(r), ev.truth.row(r))});
  }
  ev.rmse = igbss::rmse(ev.matching.matched, ev.truth);
  ev.snr_db = igbss::snr_db(ev.matching.matched, ev.truth);
  return ev;
}

}  // namespace igbss

#endif  // IGBSS_SEPARATION_HPP
