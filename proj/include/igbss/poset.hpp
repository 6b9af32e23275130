#pragma once
#ifndef IGBSS_POSET_HPP
#define IGBSS_POSET_HPP

// Layered sample space for the log-linear separation model.
//
//   bottom < mixing < source < received
//
// Mixing state a(l; n1..nj) covers every source state z(n, m) with n in
// {n1..nj}. Source state z(n, m) covers received state x(l, m) for every
// row l != n (the diagonal pair is dropped so that source rows do not
// collapse onto the same expectation value). Bottom covers every mixing
// state, plus any received state left without a source. The order relation is the
// reflexive-transitive closure of those covers, precomputed as one bitset
// per state.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace igbss {

enum class Layer : std::uint8_t { Bottom, Mixing, Source, Received };

inline const char* to_string(Layer layer) {
  switch (layer) {
    case Layer::Bottom: return "bottom";
    case Layer::Mixing: return "mixing";
    case Layer::Source: return "source";
    case Layer::Received: return "received";
  }
  return "?";
}

/// Identifies one state of the sample space. All indices are zero-based.
///
/// - Mixing: row = l, subscripts = strictly increasing source rows (n1 < ... < nj).
/// - Source: row = n, column = m.
/// - Received: row = l, column = m.
struct StateId {
  Layer layer = Layer::Bottom;
  std::uint32_t row = 0;
  std::uint32_t column = 0;
  std::vector<std::uint32_t> subscripts;

  static StateId bottom() { return {}; }
  static StateId mixing(std::uint32_t l, std::vector<std::uint32_t> sources) {
    return {Layer::Mixing, l, 0, std::move(sources)};
  }
  static StateId source(std::uint32_t n, std::uint32_t m) { return {Layer::Source, n, m, {}}; }
  static StateId received(std::uint32_t l, std::uint32_t m) { return {Layer::Received, l, m, {}}; }

  /// Interaction order of a mixing state (1 for a(l, n)); 0 otherwise.
  std::size_t order() const { return layer == Layer::Mixing ? subscripts.size() : 0; }

  friend bool operator==(const StateId&, const StateId&) = default;
  friend auto operator<=>(const StateId&, const StateId&) = default;
};

/// Printable name using one-based indices, e.g. "a(1;1,2)", "z(2,1)", "x(1,3)".
inline std::string to_string(const StateId& s) {
  std::ostringstream out;
  switch (s.layer) {
    case Layer::Bottom: out << "bot"; break;
    case Layer::Mixing: {
      out << "a(" << s.row + 1 << ';';
      for (std::size_t i = 0; i < s.subscripts.size(); ++i) {
        if (i) out << ',';
        out << s.subscripts[i] + 1;
      }
      out << ')';
      break;
    }
    case Layer::Source: out << "z(" << s.row + 1 << ',' << s.column + 1 << ')'; break;
    case Layer::Received: out << "x(" << s.row + 1 << ',' << s.column + 1 << ')'; break;
  }
  return out.str();
}

inline std::ostream& operator<<(std::ostream& os, const StateId& s) { return os << to_string(s); }

struct SpaceDims {
  std::size_t rows_received = 0;  // L
  std::size_t sources = 0;        // N
  std::size_t samples = 0;        // M
  std::size_t order = 1;          // k

  friend bool operator==(const SpaceDims&, const SpaceDims&) = default;
};

namespace detail {

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Visits every strictly increasing j-subset of [0, n) in lexicographic order.
template <class Fn>
void for_each_combination(std::size_t n, std::size_t j, Fn&& fn) {
  if (j == 0 || j > n) return;
  std::vector<std::uint32_t> c(j);
  for (std::size_t i = 0; i < j; ++i) c[i] = static_cast<std::uint32_t>(i);
  while (true) {
    fn(static_cast<const std::vector<std::uint32_t>&>(c));
    std::size_t i = j;
    while (i > 0 && c[i - 1] == n - j + i - 1) --i;
    if (i == 0) return;
    ++c[i - 1];
    for (std::size_t t = i; t < j; ++t) c[t] = c[t - 1] + 1;
  }
}

class BitRows {
 public:
  BitRows() = default;
  explicit BitRows(std::size_t n) : n_(n), words_((n + 63) / 64), bits_(n * words_, 0) {}

  void set(std::size_t r, std::size_t c) { bits_[r * words_ + c / 64] |= std::uint64_t{1} << (c % 64); }
  bool test(std::size_t r, std::size_t c) const {
    return (bits_[r * words_ + c / 64] >> (c % 64)) & 1u;
  }
  void merge_into(std::size_t dst, std::size_t src) {
    for (std::size_t w = 0; w < words_; ++w) bits_[dst * words_ + w] |= bits_[src * words_ + w];
  }
  template <class Fn>
  void for_each_set(std::size_t r, Fn&& fn) const {
    for (std::size_t w = 0; w < words_; ++w) {
      std::uint64_t word = bits_[r * words_ + w];
      while (word) {
        fn(w * 64 + static_cast<std::size_t>(std::countr_zero(word)));
        word &= word - 1;
      }
    }
  }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
};

}  // namespace detail

/// Number of mixing states for L received rows, N sources and order k.
inline std::size_t mixing_count(std::size_t L, std::size_t N, std::size_t k) {
  std::size_t total = 0;
  for (std::size_t j = 1; j <= k; ++j) total += L * detail::binomial(N, j);
  return total;
}

class SampleSpace {
 public:
  using Index = std::uint32_t;

  const SpaceDims& dims() const { return dims_; }
  std::size_t size() const { return states_.size(); }
  const std::vector<StateId>& states() const { return states_; }
  const StateId& state(Index i) const { return states_.at(i); }

  /// Contiguous index ranges of each layer in the enumeration order.
  Index mixing_begin() const { return 1; }
  Index source_begin() const { return mixing_begin() + static_cast<Index>(mixing_size_); }
  Index received_begin() const { return source_begin() + static_cast<Index>(dims_.sources * dims_.samples); }
  Index end() const { return static_cast<Index>(states_.size()); }
  std::size_t mixing_size() const { return mixing_size_; }
  std::size_t source_size() const { return dims_.sources * dims_.samples; }
  std::size_t received_size() const { return dims_.rows_received * dims_.samples; }

  /// Parameter set S = mixing followed by source states; parameter p sits at state p + 1.
  std::size_t parameter_count() const { return mixing_size_ + source_size(); }
  static Index state_of_parameter(std::size_t p) { return static_cast<Index>(p + 1); }
  bool is_parameter(Index i) const { return i >= mixing_begin() && i < received_begin(); }

  Index source_index(std::size_t n, std::size_t m) const {
    return source_begin() + static_cast<Index>(n * dims_.samples + m);
  }
  Index received_index(std::size_t l, std::size_t m) const {
    return received_begin() + static_cast<Index>(l * dims_.samples + m);
  }

  std::optional<Index> find(const StateId& s) const {
    auto it = lookup_.find(s);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }
  Index index_of(const StateId& s) const {
    auto i = find(s);
    if (!i) throw std::invalid_argument("state " + to_string(s) + " does not belong to this sample space");
    return *i;
  }

  bool leq(Index s, Index w) const { return reach_.test(s, w); }
  bool leq(const StateId& s, const StateId& w) const { return leq(index_of(s), index_of(w)); }

  /// {w : s <= w}, ascending.
  const std::vector<Index>& upset(Index s) const { return upsets_.at(s); }
  /// {s : s <= w}, ascending.
  const std::vector<Index>& downset(Index w) const { return downsets_.at(w); }
  std::vector<StateId> upset(const StateId& s) const { return names(upset(index_of(s))); }
  std::vector<StateId> downset(const StateId& w) const { return names(downset(index_of(w))); }

  /// Direct children of each state after edge removal.
  const std::vector<std::vector<Index>>& cover_edges() const { return covers_; }

  /// Dense model matrix F with F(i, j) = 1 iff state j <= state i.
  Eigen::MatrixXd model_matrix() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
    for (Index w = 0; w < size(); ++w)
      for (Index s : downsets_[w]) F(w, s) = 1.0;
    return F;
  }

  /// One "s -> w" line per cover edge, in enumeration order.
  void dump_cover_edges(std::ostream& out) const {
    for (Index s = 0; s < size(); ++s)
      for (Index w : covers_[s]) out << to_string(states_[s]) << " -> " << to_string(states_[w]) << '\n';
  }

  friend SampleSpace build_sample_space(std::size_t L, std::size_t N, std::size_t M, std::size_t k);

 private:
  std::vector<StateId> names(const std::vector<Index>& ids) const {
    std::vector<StateId> out;
    out.reserve(ids.size());
    for (Index i : ids) out.push_back(states_[i]);
    return out;
  }

  SpaceDims dims_;
  std::size_t mixing_size_ = 0;
  std::vector<StateId> states_;
  std::map<StateId, Index> lookup_;
  std::vector<std::vector<Index>> covers_;
  detail::BitRows reach_;
  std::vector<std::vector<Index>> upsets_;
  std::vector<std::vector<Index>> downsets_;
};

/// Builds the space for L received rows, N sources, M samples and
/// interactions up to order k. Requires L >= 2 and 1 <= k <= N.
inline SampleSpace build_sample_space(std::size_t L, std::size_t N, std::size_t M, std::size_t k) {
  if (L == 0 || N == 0 || M == 0) throw std::invalid_argument("sample space dimensions must be positive");
  if (L < 2) throw std::invalid_argument("at least two received rows are required (L >= 2)");
  if (k < 1 || k > N) throw std::invalid_argument("interaction order must satisfy 1 <= k <= N");

  using Index = SampleSpace::Index;
  SampleSpace sp;
  sp.dims_ = {L, N, M, k};
  sp.mixing_size_ = mixing_count(L, N, k);
  const std::size_t total = 1 + sp.mixing_size_ + N * M + L * M;
  if (total >= std::numeric_limits<Index>::max()) throw std::invalid_argument("sample space too large");
  sp.states_.reserve(total);

  sp.states_.push_back(StateId::bottom());
  for (std::size_t j = 1; j <= k; ++j)
    for (std::size_t l = 0; l < L; ++l)
      detail::for_each_combination(N, j, [&](const std::vector<std::uint32_t>& c) {
        sp.states_.push_back(StateId::mixing(static_cast<std::uint32_t>(l), c));
      });
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m)
      sp.states_.push_back(StateId::source(static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(m)));
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t m = 0; m < M; ++m)
      sp.states_.push_back(StateId::received(static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(m)));

  for (Index i = 0; i < sp.states_.size(); ++i) sp.lookup_.emplace(sp.states_[i], i);

  sp.covers_.assign(total, {});
  for (Index a = sp.mixing_begin(); a < sp.source_begin(); ++a) {
    sp.covers_[0].push_back(a);
    for (std::uint32_t n : sp.states_[a].subscripts)
      for (std::size_t m = 0; m < M; ++m) sp.covers_[a].push_back(sp.source_index(n, m));
    std::sort(sp.covers_[a].begin(), sp.covers_[a].end());
  }
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t l = 0; l < L; ++l)
        if (l != n) sp.covers_[sp.source_index(n, m)].push_back(sp.received_index(l, m));
  // With a single source, row 0 of the received layer has no source left
  // above it; hang it directly off bottom so that bottom stays least.
  if (N == 1)
    for (std::size_t m = 0; m < M; ++m) sp.covers_[0].push_back(sp.received_index(0, m));

  // Enumeration order is a linear extension, so one backward sweep closes the relation.
  sp.reach_ = detail::BitRows(total);
  for (Index s = static_cast<Index>(total); s-- > 0;) {
    sp.reach_.set(s, s);
    for (Index c : sp.covers_[s]) sp.reach_.merge_into(s, c);
  }

  sp.upsets_.assign(total, {});
  sp.downsets_.assign(total, {});
  for (Index s = 0; s < total; ++s)
    sp.reach_.for_each_set(s, [&](std::size_t w) {
      sp.upsets_[s].push_back(static_cast<Index>(w));
      sp.downsets_[w].push_back(s);
    });
  return sp;
}

}  // namespace igbss

#endif  // IGBSS_POSET_HPP
