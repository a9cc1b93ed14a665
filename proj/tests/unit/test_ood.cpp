// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "vrf/ensembling.hpp"
#include "vrf/error.hpp"
#include "vrf/ood.hpp"
#include "vrf/synth.hpp"

namespace vrf {
namespace {

using testing::Gen;
constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(Scores, MspAndEnergySpotValues) {
  const MatrixF feats(1, 2, std::vector<float>{1, 0});
  const auto msp = OodScorer::fit(DetectorKind::kMsp, MatrixF(), {}, 10);
  const auto energy = OodScorer::fit(DetectorKind::kEnergy, MatrixF(), {}, 10);
  EXPECT_TRUE(msp.fitted());
  EXPECT_NEAR(msp.score(feats.row(0), std::vector<float>(10, 3.0f)), 0.1, 1e-12);
  EXPECT_NEAR(energy.score(feats.row(0), std::vector<float>{0, 0}), 0.6931471805599453, 1e-12);
}

TEST(Scores, MspAndEnergyMatchReference) {
  Gen gen(71);
  const auto logits = testing::random_matrix(300, 12, gen, 4.0);
  const auto feats = testing::random_matrix(300, 3, gen);
  const auto msp = OodScorer::fit(DetectorKind::kMsp, MatrixF(), {}, 12).scores(feats, logits);
  const auto energy = OodScorer::fit(DetectorKind::kEnergy, MatrixF(), {}, 12).scores(feats, logits);
  for (std::size_t i = 0; i < 300; ++i) {
    const auto p = testing::softmax_ld(logits.row(i));
    EXPECT_NEAR(msp[i], static_cast<double>(*std::max_element(p.begin(), p.end())), 1e-7);
    long double s = 0;
    for (float v : logits.row(i)) s += std::exp(static_cast<long double>(v));
    EXPECT_NEAR(energy[i], static_cast<double>(std::log(s)), 1e-9);
  }
}

TEST(Scores, UnitMahalanobisDistance) {
  const float r = static_cast<float>(std::sqrt(2.0));
  const MatrixF train(4, 2, std::vector<float>{r, 0, -r, 0, 0, r, 0, -r});
  const std::vector<std::uint32_t> labels(4, 0);
  const auto md = OodScorer::fit(DetectorKind::kMd, train, labels, 1);
  const auto cov = md.pooled().covariance();
  EXPECT_NEAR(cov[0], 1.0001, 1e-6);
  EXPECT_NEAR(cov[1], 0.0, 1e-12);
  EXPECT_NEAR(cov[3], 1.0001, 1e-6);
  EXPECT_NEAR(md.score(std::vector<float>{1, 0}, std::vector<float>{0}), -1.0 / 1.0001, 1e-6);
  EXPECT_NEAR(md.score(std::vector<float>{0, 0}, std::vector<float>{0}), 0.0, 1e-12);
}

TEST(Scores, IdenticalPointsGiveRidgeCovariance) {
  const MatrixF train(4, 3, std::vector<float>{1, 2, 3, 1, 2, 3, -1, 0, 0, -1, 0, 0});
  const std::vector<std::uint32_t> labels{0, 0, 1, 1};
  const auto md = OodScorer::fit(DetectorKind::kMd, train, labels, 2);
  const auto cov = md.pooled().covariance();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(cov[i * 3 + j], i == j ? 1e-4 : 0.0, 1e-15);
  }
  ASSERT_EQ(md.class_means().size(), 2u);
  EXPECT_EQ(md.class_means()[0], (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(md.class_means()[1], (std::vector<double>{-1, 0, 0}));
}

TEST(Scores, GaussianFitRecoversMomentsAndDistance) {
  Gen gen(72);
  constexpr std::size_t kPerClass = 10000, kDim = 4;
  const std::vector<std::vector<double>> means{{0, 0, 0, 0}, {3, -1, 2, 0.5}, {-2, 4, 0, 1}};
  const double a[kDim][kDim] = {{1.0, 0, 0, 0}, {0.5, 0.8, 0, 0}, {-0.3, 0.2, 1.2, 0}, {0.1, -0.4, 0.3, 0.6}};
  double sigma[kDim][kDim] = {};
  for (std::size_t i = 0; i < kDim; ++i)
    for (std::size_t j = 0; j < kDim; ++j)
      for (std::size_t k = 0; k < kDim; ++k) sigma[i][j] += a[i][k] * a[j][k];
  MatrixF train(3 * kPerClass, kDim);
  std::vector<std::uint32_t> labels(3 * kPerClass);
  for (std::size_t n = 0; n < train.rows(); ++n) {
    const std::uint32_t c = static_cast<std::uint32_t>(n % 3);
    labels[n] = c;
    double z[kDim];
    for (auto& v : z) v = gen.normal();
    for (std::size_t i = 0; i < kDim; ++i) {
      double x = means[c][i];
      for (std::size_t k = 0; k < kDim; ++k) x += a[i][k] * z[k];
      train(n, i) = static_cast<float>(x);
    }
  }
  const auto md = OodScorer::fit(DetectorKind::kMd, train, labels, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < kDim; ++i) {
      EXPECT_NEAR(md.class_means()[c][i], means[c][i], 3.0 * std::sqrt(sigma[i][i] / kPerClass));
    }
  }
  const auto cov = md.pooled().covariance();
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < kDim; ++i) {
    for (std::size_t j = 0; j < kDim; ++j) {
      diff += std::pow(cov[i * kDim + j] - sigma[i][j], 2);
      norm += std::pow(sigma[i][j], 2);
    }
  }
  EXPECT_LT(std::sqrt(diff / norm), 0.1);

  auto mahalanobis = [&](const std::vector<double>& x, const std::vector<double>& mu) {
    double m[kDim][kDim + 1];
    for (std::size_t i = 0; i < kDim; ++i) {
      for (std::size_t j = 0; j < kDim; ++j) m[i][j] = cov[i * kDim + j];
      m[i][kDim] = x[i] - mu[i];
    }
    for (std::size_t p = 0; p < kDim; ++p) {
      for (std::size_t r = p + 1; r < kDim; ++r) {
        const double f = m[r][p] / m[p][p];
        for (std::size_t j = p; j <= kDim; ++j) m[r][j] -= f * m[p][j];
      }
    }
    double sol[kDim];
    for (std::size_t p = kDim; p-- > 0;) {
      double s = m[p][kDim];
      for (std::size_t j = p + 1; j < kDim; ++j) s -= m[p][j] * sol[j];
      sol[p] = s / m[p][p];
    }
    double out = 0;
    for (std::size_t i = 0; i < kDim; ++i) out += (x[i] - mu[i]) * sol[i];
    return out;
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(kDim);
    std::vector<float> xf(kDim);
    for (std::size_t i = 0; i < kDim; ++i) x[i] = xf[i] = static_cast<float>(gen.normal(0, 3));
    double best = kInf;
    for (const auto& mu : md.class_means()) best = std::min(best, mahalanobis(x, mu));
    EXPECT_NEAR(md.score(xf, std::vector<float>{0}), -best, 1e-8 * (1 + best));
  }
}

TEST(Scores, RelativeMahalanobisSubtractsBackground) {
  Gen gen(73);
  const auto split = testing::random_split(600, 5, 3, gen);
  const auto md = OodScorer::fit(DetectorKind::kMd, split);
  const auto rmd = OodScorer::fit(DetectorKind::kRmd, split);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto f = split.ft.features.row(i);
    std::vector<double> x(f.begin(), f.end());
    const auto w = rmd.background().whiten(x);
    double bg = 0;
    for (double v : w) bg += v * v;
    EXPECT_NEAR(rmd.score(f, split.ft.logits.row(i)), md.score(f, split.ft.logits.row(i)) + bg, 1e-6 * (1 + bg));
  }
}

TEST(Scores, FitIsOrderFree) {
  Gen gen(74);
  const auto split = testing::random_split(400, 6, 3, gen);
  std::vector<std::size_t> perm(400);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen.engine());
  MatrixF shuffled(400, 6);
  std::vector<std::uint32_t> labels(400);
  for (std::size_t i = 0; i < 400; ++i) {
    std::copy_n(split.ft.features.row(perm[i]).data(), 6, shuffled.row(i).data());
    labels[i] = split.labels[perm[i]];
  }
  const auto queries = testing::random_matrix(100, 6, gen);
  const MatrixF logits(100, 3, 0.0f);
  for (auto kind : {DetectorKind::kMd, DetectorKind::kRmd, DetectorKind::kKnn}) {
    const auto a = OodScorer::fit(kind, split.ft.features, split.labels, 3, 1.0).scores(queries, logits);
    const auto b = OodScorer::fit(kind, shuffled, labels, 3, 1.0).scores(queries, logits);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(a[i], b[i], 1e-9 * (1 + std::abs(a[i])));
  }
}

TEST(Scores, KnnScorerMatchesIndexOverSameMembers) {
  Gen gen(75);
  const auto split = testing::random_split(500, 8, 4, gen);
  const auto knn = OodScorer::fit(DetectorKind::kKnn, split, 1.0);
  std::vector<std::uint64_t> src(500);
  std::iota(src.begin(), src.end(), 0);
  const ZsfIndex index(split.ft.features, src, 1.0);
  const auto queries = testing::random_matrix(200, 8, gen);
  const auto s = knn.scores(queries, MatrixF(200, 4, 0.0f));
  const auto d = index.distances(queries);
  for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(s[i], -d[i]);
}

TEST(Scores, DegenerateFitsAreRejected) {
  const MatrixF train(3, 2, std::vector<float>{1, 0, 0, 1, 1, 1});
  EXPECT_THROW(OodScorer::fit(DetectorKind::kMd, train, std::vector<std::uint32_t>{0, 0, 1}, 2), ValidationError);
  EXPECT_THROW(OodScorer::fit(DetectorKind::kMd, train, std::vector<std::uint32_t>{0, 0, 5}, 2), ValidationError);
  EXPECT_THROW(OodScorer::fit(DetectorKind::kMd, train, std::vector<std::uint32_t>{0, 0}, 2), DimensionError);
  EXPECT_NO_THROW(OodScorer::fit(DetectorKind::kMd, train, std::vector<std::uint32_t>{0, 0, 0}, 2));
  EXPECT_THROW(OodScorer::fit(DetectorKind::kKnn, MatrixF(0, 2), {}, 2), ValidationError);
  const OodScorer unfitted;
  EXPECT_THROW(unfitted.score(std::vector<float>{1, 0}, std::vector<float>{0, 0}), ValidationError);
  EXPECT_THROW(parse_detector_kind("odin"), ValidationError);
  for (auto k : {DetectorKind::kMsp, DetectorKind::kEnergy, DetectorKind::kMd, DetectorKind::kRmd, DetectorKind::kKnn}) {
    EXPECT_EQ(parse_detector_kind(to_string(k)), k);
  }
}

TEST(Threshold, HundredIntegerScores) {
  std::vector<double> scores(100);
  std::iota(scores.begin(), scores.end(), 1.0);
  std::shuffle(scores.begin(), scores.end(), std::mt19937_64(1));
  const double lambda = calibrate_threshold(scores);
  EXPECT_EQ(lambda, 6.0);
  EXPECT_EQ(true_positive_rate(scores, lambda), 0.95);
}

TEST(Threshold, IsTheLargestCandidateMeetingTheTarget) {
  Gen gen(76);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = gen.between(20, 400);
    std::vector<double> scores(n);
    for (auto& s : scores) s = std::round(gen.normal() * 4) / 4;
    const double tpr = gen.uniform(0.5, 1.0);
    const double lambda = calibrate_threshold(scores, tpr);
    double best = -kInf;
    for (double cand : scores) {
      const auto above = std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= cand; });
      if (static_cast<double>(above) >= tpr * static_cast<double>(n) - 1e-9) best = std::max(best, cand);
    }
    EXPECT_EQ(lambda, best) << "n=" << n << " tpr=" << tpr;
  }
}

TEST(Threshold, EqualScoresKeepEverything) {
  const std::vector<double> scores(50, -3.25);
  EXPECT_EQ(calibrate_threshold(scores), -3.25);
  EXPECT_EQ(true_positive_rate(scores, -3.25), 1.0);
}

TEST(Threshold, GaussianScoresHitTargetRate) {
  Gen gen(77);
  std::vector<double> id(10000), fresh(10000);
  for (auto& s : id) s = gen.normal();
  for (auto& s : fresh) s = gen.normal();
  const double lambda = calibrate_threshold(id);
  EXPECT_GE(true_positive_rate(id, lambda), 0.95);
  const double t = true_positive_rate(fresh, lambda);
  EXPECT_GE(t, 0.945);
  EXPECT_LE(t, 0.955);
}

TEST(Threshold, InvalidInputsAreRejected) {
  EXPECT_THROW(calibrate_threshold(std::vector<double>(19, 1.0)), ValidationError);
  EXPECT_THROW(calibrate_threshold(std::vector<double>(30, 1.0), 0.0), ValidationError);
  std::vector<double> with_nan(30, 1.0);
  with_nan[3] = std::nan("");
  EXPECT_THROW(calibrate_threshold(with_nan), ValidationError);
}

TEST(Selective, InfiniteThresholdsPickOneModel) {
  Gen gen(78);
  const auto zs = testing::random_matrix(100, 5, gen);
  const auto ft = testing::random_matrix(100, 5, gen);
  std::vector<double> scores(100);
  for (auto& s : scores) s = gen.normal();
  EXPECT_EQ(selective_predict(scores, -kInf, zs, ft), predict(ft));
  EXPECT_EQ(selective_predict(scores, kInf, zs, ft), predict(zs));
  EXPECT_THROW(selective_predict(scores, std::nan(""), zs, ft), ValidationError);
  EXPECT_THROW(selective_predict(std::vector<double>(3, 0.0), 0.0, zs, ft), DimensionError);
}

TEST(Selective, RaisingThresholdNeverRoutesMoreToFineTuned) {
  Gen gen(79);
  const auto zs = testing::random_matrix(500, 4, gen);
  const auto ft = testing::random_matrix(500, 4, gen);
  const auto pz = predict(zs), pf = predict(ft);
  std::vector<double> scores(500);
  for (auto& s : scores) s = gen.normal();
  std::size_t prev = 501;
  for (double lambda = -3.0; lambda <= 3.0; lambda += 0.05) {
    const auto p = selective_predict(scores, lambda, zs, ft);
    std::size_t routed = 0;
    for (std::size_t i = 0; i < 500; ++i) {
      EXPECT_EQ(p[i], scores[i] >= lambda ? pf[i] : pz[i]);
      routed += scores[i] >= lambda;
    }
    EXPECT_LE(routed, prev);
    prev = routed;
  }
}

TEST(Selective, KnnOverFailureSetEqualsBinaryWeighting) {
  Gen gen(80);
  const auto train = testing::random_split(2000, 6, 5, gen);
  const auto test = testing::random_split(1000, 6, 5, gen);
  const auto index = ZsfIndex::build(train, 1.0);
  ASSERT_GT(index.size(), 50u);
  const auto scorer = OodScorer::fit(DetectorKind::kKnn, index.members(), std::vector<std::uint32_t>(index.size(), 0),
                                     1, 1.0);
  const auto d = index.distances(test.ft.features);
  for (double a : {0.4, 0.8, 1.0, 1.2, 1.6}) {
    ASSERT_TRUE(std::none_of(d.begin(), d.end(), [&](double x) { return x == a; }));
    const SelectiveClassifier sc{scorer, -a};
    const auto sp = selective_predict(sc, test);
    const auto vrf = vrf_pipeline(test, index, EnsembleConfig{EnsembleSpace::kProb, BinaryWeight{a}, false});
    EXPECT_EQ(sp, vrf.output.predictions) << "a=" << a;
  }
}

TEST(Baseline, SyntheticRunAndReport) {
  testing::TempDir dir;
  SynthSpec spec;
  spec.n_train = 1500;
  spec.n_id_val = 500;
  spec.n_id_test = 500;
  spec.n_ood_test = 500;
  spec.seed = 11;
  const auto manifest = load_manifest(generate_dataset(spec, dir.path()));
  const auto id_test = manifest.load_split("id_test");
  for (auto kind : {DetectorKind::kMsp, DetectorKind::kEnergy, DetectorKind::kMd, DetectorKind::kRmd,
                    DetectorKind::kKnn}) {
    const auto report = run_baseline(manifest, kind, {});
    EXPECT_GE(report.id_val_tpr, 0.95);
    EXPECT_EQ(report.id_split, "id_test");
    EXPECT_EQ(report.ood_acc.size(), 2u);
    const auto j = nlohmann::json::parse(baseline_json(report));
    EXPECT_EQ(j.at("detector"), std::string(to_string(kind)));
    EXPECT_DOUBLE_EQ(j.at("id_acc").get<double>(), report.id_acc);
    EXPECT_TRUE(j.at("ood_acc").contains("ood_1"));
  }
  BaselineOptions all_zs;
  all_zs.lambda_override = kInf;
  const auto zs_report = run_baseline(manifest, DetectorKind::kMsp, all_zs);
  EXPECT_EQ(zs_report.id_acc, accuracy(predict(id_test.zs.logits), id_test.labels));
  EXPECT_EQ(nlohmann::json::parse(baseline_json(zs_report)).at("lambda"), "inf");
  BaselineOptions all_ft;
  all_ft.lambda_override = -kInf;
  EXPECT_EQ(run_baseline(manifest, DetectorKind::kRmd, all_ft).id_acc,
            accuracy(predict(id_test.ft.logits), id_test.labels));
}

}  // namespace
}  // namespace vrf
