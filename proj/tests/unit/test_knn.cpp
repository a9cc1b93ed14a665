// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oracles.hpp"
#include "vrf/error.hpp"
#include "vrf/knn.hpp"

namespace vrf {
namespace {

using testing::Gen;

TEST(Knn, MatchesFullSortOracle) {
  Gen gen(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = gen.between(1, 3000);
    const std::size_t d = gen.between(1, 80);
    const auto members = testing::random_unit_rows(m, d, gen);
    const auto queries = testing::random_unit_rows(gen.between(1, 70), d, gen);
    const std::size_t k = gen.between(1, std::min<std::size_t>(m, 60));
    const KnnSearcher s(members);
    const auto batch = s.kth_distances(queries, k, 1);
    for (std::size_t i = 0; i < queries.rows(); ++i) {
      const auto ref = testing::brute_kth_distance(members, queries.row(i), k);
      EXPECT_NEAR(batch[i], static_cast<double>(ref), 1e-9) << "m=" << m << " d=" << d << " k=" << k;
    }
  }
}

TEST(Knn, UnnormalizedAndClusteredDataStayExact) {
  Gen gen(32);
  // Many near-duplicate members stress the candidate band.
  MatrixF members(2000, 16);
  for (std::size_t i = 0; i < members.rows(); ++i) {
    for (std::size_t j = 0; j < 16; ++j) members(i, j) = static_cast<float>(10.0 + 1e-4 * gen.normal());
  }
  const auto queries = testing::random_matrix(40, 16, gen, 0.001);
  MatrixF shifted = queries;
  for (auto& v : shifted.values()) v += 10.0f;
  const KnnSearcher s(members);
  for (std::size_t k : {1u, 5u, 100u, 2000u}) {
    const auto got = s.kth_distances(shifted, k);
    for (std::size_t i = 0; i < shifted.rows(); ++i) {
      EXPECT_NEAR(got[i], static_cast<double>(testing::brute_kth_distance(members, shifted.row(i), k)), 1e-9);
    }
  }
}

TEST(Knn, BatchEqualsScalarBitwise) {
  Gen gen(33);
  const auto members = testing::random_unit_rows(1500, 40, gen);
  const auto queries = testing::random_unit_rows(150, 40, gen);
  const KnnSearcher s(members);
  const auto batch = s.kth_distances(queries, 9, 1);
  for (std::size_t i = 0; i < queries.rows(); ++i) EXPECT_EQ(batch[i], s.kth_distance(queries.row(i), 9));
  const MatrixF one(1, 40, std::vector<float>(queries.row(3).begin(), queries.row(3).end()));
  EXPECT_EQ(s.kth_distances(one, 9)[0], batch[3]);
}

TEST(Knn, ThreadCountDoesNotChangeResults) {
  Gen gen(34);
  const auto members = testing::random_unit_rows(1000, 24, gen);
  const auto queries = testing::random_unit_rows(333, 24, gen);
  const KnnSearcher s(members);
  const auto one = s.kth_distances(queries, 4, 1);
  for (unsigned t : {2u, 3u, 8u, 0u}) EXPECT_EQ(s.kth_distances(queries, 4, t), one);
}

TEST(Knn, MemberOrderDoesNotChangeResults) {
  Gen gen(35);
  const auto members = testing::random_unit_rows(800, 12, gen);
  const auto queries = testing::random_unit_rows(100, 12, gen);
  std::vector<std::size_t> perm(800);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen.engine());
  MatrixF shuffled(800, 12);
  for (std::size_t i = 0; i < 800; ++i) std::copy_n(members.row(perm[i]).data(), 12, shuffled.row(i).data());
  EXPECT_EQ(KnnSearcher(members).kth_distances(queries, 6), KnnSearcher(shuffled).kth_distances(queries, 6));
}

TEST(Knn, MonotoneInK) {
  Gen gen(36);
  const auto members = testing::random_unit_rows(300, 8, gen);
  const auto queries = testing::random_unit_rows(50, 8, gen);
  const KnnSearcher s(members);
  std::vector<double> prev(50, 0.0);
  for (std::size_t k = 1; k <= 300; k += 13) {
    const auto cur = s.kth_distances(queries, k);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_LE(prev[i], cur[i]);
    prev = cur;
  }
}

TEST(Knn, ExactGeometryCases) {
  const MatrixF members(2, 3, std::vector<float>{1, 0, 0, 0, 1, 0});
  const KnnSearcher s(members);
  EXPECT_EQ(s.kth_distance(std::vector<float>{1, 0, 0}, 1), 0.0);
  EXPECT_NEAR(s.kth_distance(std::vector<float>{1, 0, 0}, 2), std::sqrt(2.0), 1e-15);
  const KnnSearcher anti(MatrixF(1, 3, std::vector<float>{-1, 0, 0}));
  EXPECT_EQ(anti.kth_distance(std::vector<float>{1, 0, 0}, 1), 2.0);
}

TEST(Knn, DuplicateMembersCountSeparately) {
  const MatrixF members(3, 2, std::vector<float>{1, 0, 1, 0, 0, 1});
  const KnnSearcher s(members);
  EXPECT_EQ(s.kth_distance(std::vector<float>{1, 0}, 2), 0.0);
  EXPECT_NEAR(s.kth_distance(std::vector<float>{1, 0}, 3), std::sqrt(2.0), 1e-15);
}

TEST(Knn, InvalidQueriesAreRejected) {
  const MatrixF members(2, 2, std::vector<float>{1, 0, 0, 1});
  const KnnSearcher s(members);
  EXPECT_THROW(s.kth_distance(std::vector<float>{1, 0}, 0), ValidationError);
  EXPECT_THROW(s.kth_distance(std::vector<float>{1, 0}, 3), ValidationError);
  EXPECT_THROW(s.kth_distance(std::vector<float>{1, 0, 0}, 1), DimensionError);
  EXPECT_THROW(s.kth_distance(std::vector<float>{std::numeric_limits<float>::quiet_NaN(), 0}, 1), ValidationError);
  MatrixF q(70, 2, 0.5f);
  q(69, 1) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(s.kth_distances(q, 1, 4), ValidationError);
  EXPECT_THROW(KnnSearcher().kth_distance(std::vector<float>{}, 1), EmptyIndexError);
  EXPECT_THROW(KnnSearcher(MatrixF(1, 2, std::vector<float>{0, std::numeric_limits<float>::infinity()})),
               ValidationError);
}

TEST(Knn, MembersRoundTrip) {
  Gen gen(37);
  const auto members = testing::random_matrix(37, 19, gen);
  const KnnSearcher s(members);
  EXPECT_EQ(s.members(), members);
  EXPECT_EQ(s.size(), 37u);
  EXPECT_EQ(s.dim(), 19u);
  const auto row = s.member(5);
  EXPECT_TRUE(std::equal(row.begin(), row.end(), members.row(5).begin()));
}

TEST(Knn, EmptyQueryBatchGivesEmptyResult) {
  const KnnSearcher s(MatrixF(2, 2, std::vector<float>{1, 0, 0, 1}));
  EXPECT_TRUE(s.kth_distances(MatrixF(0, 2), 1).empty());
}

}  // namespace
}  // namespace vrf
