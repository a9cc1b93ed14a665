// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "oracles.hpp"
#include "vrf/error.hpp"
#include "vrf/prediction.hpp"
#include "vrf/tensor_io.hpp"
#include "vrf/zsf_index.hpp"

namespace vrf {
namespace {

using testing::Gen;

MatrixF one_hot_logits(const std::vector<std::uint32_t>& pred, std::size_t k) {
  MatrixF m(pred.size(), k, 0.0f);
  for (std::size_t i = 0; i < pred.size(); ++i) m(i, pred[i]) = 1.0f;
  return m;
}

ZsfIndex random_index(std::size_t m, std::size_t d, Gen& gen, double p = 1.0) {
  std::vector<std::uint64_t> src(m);
  std::iota(src.begin(), src.end(), 0);
  return ZsfIndex(testing::random_unit_rows(m, d, gen), src, p);
}

TEST(BuildZsf, KeepsRowsOnlyFineTunedGetsRight) {
  const std::vector<std::uint32_t> labels{0, 1};
  const auto zs = one_hot_logits({1, 1}, 2);
  const auto ft = one_hot_logits({0, 1}, 2);
  const MatrixF feats(2, 2, std::vector<float>{3, 4, 0, 1});
  const auto index = ZsfIndex::build(labels, zs, ft, feats, 50.0);
  ASSERT_EQ(index.size(), 1u);
  EXPECT_EQ(index.source_indices(), std::vector<std::uint64_t>{0});
  const auto member = index.members();
  EXPECT_NEAR(member(0, 0), 0.6f, 1e-7);
  EXPECT_NEAR(member(0, 1), 0.8f, 1e-7);
}

TEST(BuildZsf, AgreeingModelsGiveEmptyIndex) {
  Gen gen(41);
  const auto labels = testing::random_labels(100, 5, gen);
  const auto logits = testing::random_matrix(100, 5, gen);
  const auto index = ZsfIndex::build(labels, logits, logits, testing::random_matrix(100, 4, gen), 0.1);
  EXPECT_TRUE(index.empty());
  EXPECT_EQ(index.k(), 0u);
  EXPECT_THROW(index.distance(std::vector<float>{1, 0, 0, 0}), EmptyIndexError);
  EXPECT_THROW(index.distances(MatrixF(3, 4, 1.0f)), EmptyIndexError);
}

TEST(BuildZsf, MembershipMatchesPredicateScan) {
  Gen gen(42);
  for (int trial = 0; trial < 20; ++trial) {
    const auto split = testing::random_split(200, 6, 4, gen);
    const auto index = ZsfIndex::build(split, 10.0);
    const auto expected = testing::zsf_scan(split.labels, split.zs.logits, split.ft.logits);
    ASSERT_EQ(index.source_indices(), expected);
    const auto members = index.members();
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto src = split.ft.features.row(expected[i]);
      double norm = 0.0;
      for (float v : src) norm += static_cast<double>(v) * v;
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(members(i, j), src[j] / norm, 1e-6);
    }
  }
}

TEST(BuildZsf, FeatureSourceSelectsEncoder) {
  Gen gen(43);
  const auto split = testing::random_split(100, 5, 3, gen);
  const auto ft = ZsfIndex::build(split, 10.0, FeatureSource::kFineTuned);
  const auto zs = ZsfIndex::build(split, 10.0, FeatureSource::kZeroShot);
  ASSERT_FALSE(ft.empty());
  EXPECT_EQ(ft.source_indices(), zs.source_indices());
  EXPECT_EQ(zs.members(), normalize_features([&] {
              MatrixF m(zs.size(), 5);
              for (std::size_t i = 0; i < zs.size(); ++i) {
                std::copy_n(split.zs.features.row(zs.source_indices()[i]).data(), 5, m.row(i).data());
              }
              return m;
            }()));
}

TEST(BuildZsf, MisalignedInputsAreRejected) {
  const std::vector<std::uint32_t> labels{0, 1, 1};
  EXPECT_THROW(ZsfIndex::build(labels, MatrixF(3, 2), MatrixF(2, 2), MatrixF(3, 2), 1.0), DimensionError);
  EXPECT_THROW(ZsfIndex::build(labels, MatrixF(3, 2), MatrixF(3, 3), MatrixF(3, 2), 1.0), DimensionError);
  EXPECT_THROW(ZsfIndex::build(labels, MatrixF(3, 2), MatrixF(3, 2), MatrixF(2, 2), 1.0), DimensionError);
  EXPECT_THROW(ZsfIndex::build(labels, MatrixF(3, 2), MatrixF(3, 2), MatrixF(3, 2), 0.0), ValidationError);
  EXPECT_THROW(ZsfIndex::build(labels, MatrixF(3, 2), MatrixF(3, 2), MatrixF(3, 2), 100.5), ValidationError);
}

TEST(KFromPercent, FloorsWithFloorOfOne) {
  EXPECT_EQ(k_from_percent(0.1, 100000), 100u);
  EXPECT_EQ(k_from_percent(0.1, 1000), 1u);
  EXPECT_EQ(k_from_percent(0.1, 999), 1u);
  EXPECT_EQ(k_from_percent(0.1, 10), 1u);
  EXPECT_EQ(k_from_percent(0.1, 0), 0u);
  EXPECT_EQ(k_from_percent(100.0, 7), 7u);
  EXPECT_EQ(k_from_percent(50.0, 7), 3u);
  EXPECT_EQ(k_from_percent(0.3, 1000), 3u);
  EXPECT_EQ(k_from_percent(0.7, 1000), 7u);
  EXPECT_THROW(k_from_percent(-1.0, 10), ValidationError);
  EXPECT_THROW(k_from_percent(std::nan(""), 10), ValidationError);
}

TEST(KFromPercent, MatchesIntegerArithmeticForDecimalPercentages) {
  for (int tenths = 1; tenths <= 1000; ++tenths) {
    for (std::size_t m : {1u, 9u, 100u, 1234u, 100000u, 1000003u}) {
      const std::size_t exact = std::max<std::size_t>(1, static_cast<std::size_t>(tenths) * m / 1000);
      EXPECT_EQ(k_from_percent(tenths / 10.0, m), exact) << tenths << " " << m;
    }
  }
}

TEST(KnnDistance, ExactGeometry) {
  const ZsfIndex anti(MatrixF(1, 3, std::vector<float>{-1, 0, 0}), {0}, 100.0);
  EXPECT_EQ(anti.distance(std::vector<float>{1, 0, 0}), 2.0);
  EXPECT_EQ(anti.distance(std::vector<float>{5, 0, 0}), 2.0);
  const ZsfIndex self(MatrixF(2, 2, std::vector<float>{0.6f, 0.8f, 1, 0}), {0, 1}, 1.0);
  EXPECT_EQ(self.distance(std::vector<float>{0.6f, 0.8f}), 0.0);
  EXPECT_THROW(self.distance(std::vector<float>{0, 0}), ValidationError);
  EXPECT_THROW(self.distance(std::vector<float>{1, 0, 0}), DimensionError);
}

TEST(KnnDistance, MatchesBruteForceOracle) {
  Gen gen(44);
  const auto index = random_index(500, 8, gen, 1.4);
  ASSERT_EQ(index.k(), 7u);
  const auto members = index.members();
  const auto queries = testing::random_matrix(1000, 8, gen, 2.0);
  const auto batch = index.distances(queries);
  const auto unit = normalize_features(queries);
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    const double ref = static_cast<double>(testing::brute_kth_distance(members, unit.row(i), 7));
    EXPECT_NEAR(batch[i], ref, 1e-6);
    if (i < 100) {
      EXPECT_EQ(index.distance(queries.row(i)), batch[i]);
    }
  }
}

TEST(KnnDistance, BoundedAndMonotoneInK) {
  Gen gen(45);
  const auto index = random_index(200, 3, gen);
  const auto queries = testing::random_unit_rows(100, 3, gen);
  std::vector<double> prev(100, 0.0);
  for (std::size_t k = 1; k <= 200; k += 9) {
    const auto cur = index.distances(queries, k);
    for (std::size_t i = 0; i < 100; ++i) {
      EXPECT_GE(cur[i], prev[i]);
      EXPECT_LE(cur[i], 2.0);
    }
    prev = cur;
  }
}

TEST(KnnDistance, ThreadsDoNotChangeResults) {
  Gen gen(46);
  const auto index = random_index(3000, 16, gen, 0.5);
  const auto queries = testing::random_matrix(257, 16, gen);
  EXPECT_EQ(index.distances(queries, index.k(), 1u), index.distances(queries, index.k(), 4u));
}

TEST(IndexFile, RoundTripIsBitwiseAndQueriesAgree) {
  Gen gen(47);
  testing::TempDir dir;
  const auto index = random_index(321, 10, gen, 2.0);
  index.save(dir / "zsf.vrf");
  EXPECT_TRUE(std::filesystem::exists(index_sidecar_path(dir / "zsf.vrf")));
  const auto loaded = ZsfIndex::load(dir / "zsf.vrf");
  EXPECT_EQ(loaded.members(), index.members());
  EXPECT_EQ(loaded.source_indices(), index.source_indices());
  EXPECT_EQ(loaded.k(), index.k());
  EXPECT_EQ(loaded.p_percent(), index.p_percent());
  const auto queries = testing::random_matrix(100, 10, gen);
  EXPECT_EQ(loaded.distances(queries), index.distances(queries));
  index.save(dir / "again.vrf");
  EXPECT_EQ(testing::read_bytes(dir / "again.vrf"), testing::read_bytes(dir / "zsf.vrf"));
}

TEST(IndexFile, EmptyIndexRoundTrips) {
  testing::TempDir dir;
  const ZsfIndex empty(MatrixF(0, 4), {}, 0.1);
  empty.save(dir / "e.vrf");
  const auto loaded = ZsfIndex::load(dir / "e.vrf");
  EXPECT_TRUE(loaded.empty());
  EXPECT_EQ(loaded.dim(), 4u);
}

TEST(IndexFile, DamagedFilesAreRejected) {
  Gen gen(48);
  testing::TempDir dir;
  const auto index = random_index(50, 4, gen, 10.0);
  const auto path = dir / "zsf.vrf";
  const auto side = index_sidecar_path(path);
  index.save(path);
  const auto bytes = testing::read_bytes(path);
  const auto side_bytes = testing::read_bytes(side);

  testing::write_bytes(path, std::vector<unsigned char>(bytes.begin(), bytes.end() - 4));
  EXPECT_THROW(ZsfIndex::load(path), FormatError);
  testing::write_bytes(path, bytes);

  auto write_side = [&](const std::string& text) { std::ofstream(side) << text; };
  write_side("{not json");
  EXPECT_THROW(ZsfIndex::load(path), SchemaError);
  write_side(R"({"k": 5, "p_percent": 10.0})");
  EXPECT_THROW(ZsfIndex::load(path), SchemaError);
  write_side(R"({"k": 5, "p_percent": 10.0, "source_indices": [1, 2]})");
  EXPECT_THROW(ZsfIndex::load(path), FormatError);
  std::string wrong_k(side_bytes.begin(), side_bytes.end());
  wrong_k.replace(wrong_k.find("\"k\":5"), 5, "\"k\":6");
  write_side(wrong_k);
  EXPECT_THROW(ZsfIndex::load(path), FormatError);
  std::filesystem::remove(side);
  EXPECT_THROW(ZsfIndex::load(path), IoError);
  testing::write_bytes(side, side_bytes);

  auto scaled = index.members();
  for (auto& v : scaled.values()) v *= 2.0f;
  write_matrix(path, scaled);
  EXPECT_THROW(ZsfIndex::load(path), FormatError);
}

TEST(IndexFile, ExplicitMembersNeedOneSourcePerRow) {
  EXPECT_THROW(ZsfIndex(MatrixF(2, 2, 1.0f), {0}, 1.0), DimensionError);
}

}  // namespace
}  // namespace vrf
