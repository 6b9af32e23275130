#pragma once
#ifndef IGBSS_DATAGEN_HPP
#define IGBSS_DATAGEN_HPP

// Synthetic fixtures: random mixing with interactions up to order k,
// waveform sources, image mixtures and a heavy-tailed point cloud.
// Every generator is a pure function of its arguments and seed.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igbss/poset.hpp"

namespace igbss {

using Eigen::MatrixXd;

/// One coefficient a(l; n1..nj) of the mixing polynomial.
struct MixingTerm {
  std::uint32_t row = 0;
  std::vector<std::uint32_t> sources;  // strictly increasing
  double coefficient = 0.0;

  friend bool operator==(const MixingTerm&, const MixingTerm&) = default;
};

struct MixingSpec {
  std::size_t rows = 0;     // L
  std::size_t sources = 0;  // N
  std::size_t order = 1;    // k
  double lo = 0.0;
  double hi = 1.0;
  std::uint64_t seed = 0;
  // Ordered by interaction order, then row, then subscripts (lexicographic),
  // matching the mixing-state enumeration of the sample space.
  std::vector<MixingTerm> terms;

  void validate() const {
    if (rows == 0 || sources == 0) throw std::invalid_argument("mixing spec needs positive dimensions");
    if (order < 1 || order > sources) throw std::invalid_argument("mixing order must satisfy 1 <= k <= N");
    for (const auto& t : terms) {
      if (t.row >= rows) throw std::invalid_argument("mixing term row out of range");
      if (t.sources.empty() || t.sources.size() > order)
        throw std::invalid_argument("mixing term order out of range");
      for (std::size_t i = 0; i < t.sources.size(); ++i) {
        if (t.sources[i] >= sources) throw std::invalid_argument("mixing term source out of range");
        if (i && t.sources[i] <= t.sources[i - 1])
          throw std::invalid_argument("mixing term subscripts must be strictly increasing");
      }
    }
  }

  /// First-order coefficients as an L x N matrix.
  MatrixXd linear_part() const {
    MatrixXd A = MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(sources));
    for (const auto& t : terms)
      if (t.sources.size() == 1) A(t.row, t.sources[0]) += t.coefficient;
    return A;
  }
};

/// Draws every coefficient of every order <= k i.i.d. uniform in [lo, hi].
inline MixingSpec gen_mixing(std::size_t L, std::size_t N, std::size_t k, double lo, double hi, std::uint64_t seed) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("mixing bounds must satisfy lo < hi");
  MixingSpec spec{L, N, k, lo, hi, seed, {}};
  if (L == 0 || N == 0) throw std::invalid_argument("mixing spec needs positive dimensions");
  if (k < 1 || k > N) throw std::invalid_argument("mixing order must satisfy 1 <= k <= N");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(lo, hi);
  for (std::size_t j = 1; j <= k; ++j)
    for (std::size_t l = 0; l < L; ++l)
      detail::for_each_combination(N, j, [&](const std::vector<std::uint32_t>& c) {
        spec.terms.push_back({static_cast<std::uint32_t>(l), c, uniform(rng)});
      });
  return spec;
}

/// Identity first-order mixing (L = N), useful as a no-op fixture.
inline MixingSpec identity_mixing(std::size_t N) {
  MixingSpec spec{N, N, 1, 0.0, 1.0, 0, {}};
  for (std::size_t n = 0; n < N; ++n)
    spec.terms.push_back({static_cast<std::uint32_t>(n), {static_cast<std::uint32_t>(n)}, 1.0});
  return spec;
}

/// x_lm = sum over terms a(l; n1..nj) * z_{n1 m} * ... * z_{nj m}.
inline MatrixXd mix(const MatrixXd& Z, const MixingSpec& spec) {
  spec.validate();
  if (static_cast<std::size_t>(Z.rows()) != spec.sources)
    throw std::invalid_argument("source matrix has " + std::to_string(Z.rows()) + " rows, mixing spec expects " +
                                std::to_string(spec.sources));
  MatrixXd X = MatrixXd::Zero(static_cast<Eigen::Index>(spec.rows), Z.cols());
  Eigen::RowVectorXd product(Z.cols());
  for (const auto& t : spec.terms) {
    product = Z.row(t.sources[0]);
    for (std::size_t i = 1; i < t.sources.size(); ++i) product.array() *= Z.row(t.sources[i]).array();
    X.row(t.row) += t.coefficient * product;
  }
  return X;
}

/// Waveform constants of the time-series fixture: every row runs three full
/// cycles over the window, zero phase, sampled at t = m / M.
struct WaveformParams {
  double cycles = 3.0;
};

/// Rows: sine, square (sign of the sine, +1 at zero crossings), sawtooth in [-1, 1).
inline MatrixXd gen_timeseries(std::size_t M = 500, WaveformParams params = {}) {
  if (M < 2) throw std::invalid_argument("time series needs at least two samples");
  const double two_pi = 2.0 * std::acos(-1.0);
  MatrixXd Z(3, static_cast<Eigen::Index>(M));
  for (std::size_t m = 0; m < M; ++m) {
    const double phase = params.cycles * static_cast<double>(m) / static_cast<double>(M);
    const double s = std::sin(two_pi * phase);
    const auto c = static_cast<Eigen::Index>(m);
    Z(0, c) = s;
    Z(1, c) = s >= 0.0 ? 1.0 : -1.0;
    Z(2, c) = 2.0 * (phase - std::floor(phase)) - 1.0;
  }
  return Z;
}

/// Two rows of i.i.d. Student-t(1.3) draws scaled by 1/5 and 1/10.
inline MatrixXd gen_pointcloud(std::size_t count, std::uint64_t seed) {
  if (count < 2) throw std::invalid_argument("point cloud needs at least two points");
  std::mt19937_64 rng(seed);
  std::student_t_distribution<double> t(1.3);
  MatrixXd P(2, static_cast<Eigen::Index>(count));
  for (Eigen::Index r = 0; r < 2; ++r) {
    const double scale = r == 0 ? 1.0 / 5.0 : 1.0 / 10.0;
    for (Eigen::Index c = 0; c < P.cols(); ++c) P(r, c) = scale * t(rng);
  }
  return P;
}

/// Interleaved RGB raster, row-major, channels last.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // width * height * 3

  std::size_t size() const { return width * height * 3; }
};

/// Affine map of a matrix onto integers 0..255: q = round((x - lo) / (hi - lo) * 255).
struct QuantizationRecord {
  double lo = 0.0;
  double hi = 255.0;

  double scale() const { return (hi - lo) / 255.0; }
  double restore(double q) const { return lo + q * scale(); }
};

struct ImageMixture {
  MatrixXd sources;  // N x (width * height * 3)
  MatrixXd mixed;    // L x (width * height * 3), integer valued in [0, 255]
  QuantizationRecord quantization;
};

/// Flattens the rasters into signals, mixes them and quantizes the result to 0..255.
inline ImageMixture gen_images_mixture(const std::vector<RgbImage>& images, const MixingSpec& spec) {
  if (images.empty()) throw std::invalid_argument("no images given");
  const std::size_t len = images.front().size();
  for (const auto& img : images) {
    if (img.size() != len || img.pixels.size() != len || img.width != images.front().width)
      throw std::invalid_argument("all rasters must share one shape");
  }
  ImageMixture out;
  out.sources.resize(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(len));
  for (std::size_t n = 0; n < images.size(); ++n)
    for (std::size_t i = 0; i < len; ++i)
      out.sources(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) = images[n].pixels[i];

  const MatrixXd raw = mix(out.sources, spec);
  out.quantization.lo = raw.minCoeff();
  out.quantization.hi = raw.maxCoeff();
  if (!(out.quantization.hi > out.quantization.lo)) out.quantization.hi = out.quantization.lo + 255.0;
  const double s = out.quantization.scale();
  out.mixed = ((raw.array() - out.quantization.lo) / s).round().cwiseMax(0.0).cwiseMin(255.0);
  return out;
}

}  // namespace igbss

#endif  // IGBSS_DATAGEN_HPP
