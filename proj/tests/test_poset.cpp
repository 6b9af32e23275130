#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include <Eigen/LU>

#include "igbss/poset.hpp"
#include "oracle.hpp"

using namespace igbss;

namespace {

StateId a(std::uint32_t l, std::vector<std::uint32_t> n) { return StateId::mixing(l, std::move(n)); }
StateId z(std::uint32_t n, std::uint32_t m) { return StateId::source(n, m); }
StateId x(std::uint32_t l, std::uint32_t m) { return StateId::received(l, m); }

std::set<StateId> as_set(const std::vector<StateId>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(SampleSpace, ToyExampleSizes) {
  const auto sp = build_sample_space(2, 2, 2, 1);
  EXPECT_EQ(sp.size(), 13u);
  EXPECT_EQ(sp.mixing_size(), 4u);
  EXPECT_EQ(sp.source_size(), 4u);
  EXPECT_EQ(sp.received_size(), 4u);
  EXPECT_EQ(sp.parameter_count(), 8u);
}

TEST(SampleSpace, ToyExampleRemovedDiagonalPairs) {
  const auto sp = build_sample_space(2, 2, 2, 1);
  for (std::uint32_t i = 0; i < 2; ++i)
    for (std::uint32_t m = 0; m < 2; ++m) {
      EXPECT_FALSE(sp.leq(z(i, m), x(i, m))) << "z(" << i << "," << m << ")";
      EXPECT_TRUE(sp.leq(z(i, m), x(1 - i, m)));
      EXPECT_FALSE(sp.leq(z(i, m), x(1 - i, 1 - m)));
    }
}

TEST(SampleSpace, SmallestLegalSpace) {
  const auto sp = build_sample_space(2, 1, 1, 1);
  const std::vector<StateId> expected = {StateId::bottom(), a(0, {0}), a(1, {0}), z(0, 0), x(0, 0), x(1, 0)};
  EXPECT_EQ(sp.states(), expected);
  EXPECT_TRUE(sp.leq(z(0, 0), x(1, 0)));
  EXPECT_FALSE(sp.leq(z(0, 0), x(0, 0)));
  EXPECT_EQ(sp.upset(z(0, 0)), (std::vector<StateId>{z(0, 0), x(1, 0)}));
}

TEST(SampleSpace, SecondOrderCountMatchesEnumeration) {
  const auto sp = build_sample_space(2, 3, 2, 2);
  std::size_t mixing = 0, first = 0, second = 0;
  for (const auto& s : sp.states()) {
    if (s.layer != Layer::Mixing) continue;
    ++mixing;
    (s.order() == 1 ? first : second) += 1;
  }
  EXPECT_EQ(first, 6u);
  EXPECT_EQ(second, 6u);
  EXPECT_EQ(mixing, 12u);
  EXPECT_EQ(sp.size(), 23u);
  EXPECT_EQ(mixing_count(2, 3, 2), 12u);
}

TEST(SampleSpace, HigherOrderMixingCoversEachMemberSource) {
  const auto sp = build_sample_space(2, 3, 2, 2);
  EXPECT_TRUE(sp.leq(a(0, {0, 2}), z(0, 1)));
  EXPECT_TRUE(sp.leq(a(0, {0, 2}), z(2, 0)));
  EXPECT_FALSE(sp.leq(a(0, {0, 2}), z(1, 0)));
}

TEST(SampleSpace, TransitiveOrderThroughSourceLayer) {
  const auto sp = build_sample_space(2, 2, 2, 1);
  EXPECT_TRUE(sp.leq(a(0, {0}), x(1, 1)));
  EXPECT_TRUE(sp.leq(StateId::bottom(), z(1, 0)));
  EXPECT_FALSE(sp.leq(z(0, 0), x(0, 0)));
}

TEST(SampleSpace, UpsetAndDownsetExamples) {
  const auto sp = build_sample_space(2, 2, 2, 1);
  EXPECT_EQ(as_set(sp.upset(x(0, 0))), (std::set<StateId>{x(0, 0)}));
  EXPECT_EQ(as_set(sp.upset(a(0, {0}))), (std::set<StateId>{a(0, {0}), z(0, 0), z(0, 1), x(1, 0), x(1, 1)}));
  EXPECT_EQ(as_set(sp.downset(z(0, 0))), (std::set<StateId>{StateId::bottom(), a(0, {0}), a(1, {0}), z(0, 0)}));
}

TEST(SampleSpace, RejectsInvalidDimensions) {
  EXPECT_THROW(build_sample_space(1, 1, 1, 1), std::invalid_argument);
  EXPECT_THROW(build_sample_space(2, 0, 1, 1), std::invalid_argument);
  EXPECT_THROW(build_sample_space(2, 2, 0, 1), std::invalid_argument);
  EXPECT_THROW(build_sample_space(2, 2, 2, 3), std::invalid_argument);
  EXPECT_THROW(build_sample_space(2, 2, 2, 0), std::invalid_argument);
}

TEST(SampleSpace, ForeignStateIsRejected) {
  const auto sp = build_sample_space(2, 2, 2, 1);
  EXPECT_THROW(sp.leq(z(5, 0), x(0, 0)), std::invalid_argument);
  EXPECT_THROW(sp.upset(x(0, 7)), std::invalid_argument);
  EXPECT_THROW(sp.index_of(a(0, {0, 1})), std::invalid_argument);
  EXPECT_FALSE(sp.find(z(2, 0)).has_value());
}

TEST(SampleSpace, NoRemovalForSourceRowsBeyondReceivedRows) {
  const auto sp = build_sample_space(2, 3, 1, 1);
  // Row n = 2 has no matching received row, so it reaches both.
  EXPECT_TRUE(sp.leq(z(2, 0), x(0, 0)));
  EXPECT_TRUE(sp.leq(z(2, 0), x(1, 0)));
  EXPECT_FALSE(sp.leq(z(1, 0), x(1, 0)));
}

TEST(SampleSpace, CoverEdgeDumpGolden) {
  const auto sp = build_sample_space(2, 1, 1, 1);
  std::ostringstream out;
  sp.dump_cover_edges(out);
  EXPECT_EQ(out.str(),
            "bot -> a(1;1)\n"
            "bot -> a(2;1)\n"
            "bot -> x(1,1)\n"
            "a(1;1) -> z(1,1)\n"
            "a(2;1) -> z(1,1)\n"
            "z(1,1) -> x(2,1)\n");
}

// Exhaustive property checks against the brute-force relation.
class SpaceProperties : public ::testing::TestWithParam<std::tuple<int, int, int, int>> {};

TEST_P(SpaceProperties, RelationMatchesBruteForceAndIsAPartialOrder) {
  auto [L, N, M, k] = GetParam();
  const auto sp = build_sample_space(L, N, M, k);
  const auto& st = sp.states();
  const auto R = oracle::reachability(st);
  const auto n = sp.size();
  ASSERT_EQ(n, 1 + mixing_count(L, N, k) + static_cast<std::size_t>(N * M + L * M));

  for (SampleSpace::Index i = 0; i < n; ++i) {
    const auto& up = sp.upset(i);
    const auto& down = sp.downset(i);
    for (SampleSpace::Index j = 0; j < n; ++j) {
      const bool le = sp.leq(i, j);
      ASSERT_EQ(le, static_cast<bool>(R[i][j])) << to_string(st[i]) << " <= " << to_string(st[j]);
      ASSERT_EQ(le, std::binary_search(up.begin(), up.end(), j));
      ASSERT_EQ(sp.leq(j, i), std::binary_search(down.begin(), down.end(), j));
      if (i != j && le) {
        ASSERT_FALSE(sp.leq(j, i)) << "antisymmetry";
        ASSERT_NE(st[i].layer, st[j].layer) << "layer purity";
      }
      if (le) {
        for (SampleSpace::Index w : sp.upset(j)) ASSERT_TRUE(sp.leq(i, w)) << "transitivity";
      }
    }
    ASSERT_TRUE(sp.leq(0, i)) << "bottom is least";
    ASSERT_TRUE(sp.leq(i, i));
  }
  for (std::size_t src = 0; src < static_cast<std::size_t>(N); ++src)
    for (std::size_t m = 0; m < static_cast<std::size_t>(M); ++m) {
      const auto& up = sp.upset(sp.source_index(src, m));
      ASSERT_TRUE(std::any_of(up.begin(), up.end(), [&](auto w) { return w >= sp.received_begin(); }))
          << "source state isolated";
    }
}

TEST_P(SpaceProperties, ModelMatrixIsNonsingular) {
  auto [L, N, M, k] = GetParam();
  const auto sp = build_sample_space(L, N, M, k);
  const Eigen::MatrixXd F = sp.model_matrix();
  EXPECT_TRUE(F.isApprox(oracle::model_matrix(sp.states())));
  Eigen::FullPivLU<Eigen::MatrixXd> lu(F);
  EXPECT_TRUE(lu.isInvertible());
  EXPECT_EQ(lu.rank(), F.rows());
}

INSTANTIATE_TEST_SUITE_P(SmallSpaces, SpaceProperties,
                         ::testing::Values(std::make_tuple(2, 1, 1, 1), std::make_tuple(2, 2, 2, 1),
                                           std::make_tuple(2, 3, 2, 2), std::make_tuple(3, 3, 2, 3),
                                           std::make_tuple(3, 2, 4, 2), std::make_tuple(2, 4, 2, 2),
                                           std::make_tuple(4, 2, 3, 1), std::make_tuple(3, 3, 3, 1)));
