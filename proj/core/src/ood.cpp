// SPDX-License-Identifier: Apache-2.0
#include "vrf/ood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include "vrf/prediction.hpp"

namespace vrf {
namespace {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kGramChunk = 4096;

// Accumulates sum_i (x_i - c(i)) (x_i - c(i))^T over rows in chunks, where
// c(i) is the center assigned to row i.
template <typename CenterFn>
std::vector<double> scatter(const MatrixF& x, CenterFn center_of) {
  const std::size_t d = x.cols();
  RowMatrixXd acc = RowMatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  RowMatrixXd chunk(static_cast<Eigen::Index>(std::min(kGramChunk, x.rows())), static_cast<Eigen::Index>(d));
  for (std::size_t lo = 0; lo < x.rows(); lo += kGramChunk) {
    const std::size_t n = std::min(kGramChunk, x.rows() - lo);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = x.row(lo + r);
      const std::vector<double>& c = center_of(lo + r);
      for (std::size_t j = 0; j < d; ++j) chunk(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = row[j] - c[j];
    }
    auto block = chunk.topRows(static_cast<Eigen::Index>(n));
    acc.noalias() += block.transpose() * block;
  }
  return std::vector<double>(acc.data(), acc.data() + acc.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

std::string lambda_repr(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return {};
}

}  // namespace

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::kMsp: return "msp";
    case DetectorKind::kEnergy: return "energy";
    case DetectorKind::kMd: return "md";
    case DetectorKind::kRmd: return "rmd";
    case DetectorKind::kKnn: return "knn";
  }
  return "?";
}

DetectorKind parse_detector_kind(std::string_view text) {
  if (text == "msp") return DetectorKind::kMsp;
  if (text == "energy") return DetectorKind::kEnergy;
  if (text == "md") return DetectorKind::kMd;
  if (text == "rmd") return DetectorKind::kRmd;
  if (text == "knn") return DetectorKind::kKnn;
  throw ValidationError("unknown detector '" + std::string(text) + "'");
}

WhitenedGaussian WhitenedGaussian::fit(const std::vector<double>& mean, const std::vector<double>& covariance,
                                       std::size_t dim) {
  if (mean.size() != dim || covariance.size() != dim * dim) throw DimensionError("gaussian fit: bad shapes");
  const auto n = static_cast<Eigen::Index>(dim);
  RowMatrixXd cov = Eigen::Map<const RowMatrixXd>(covariance.data(), n, n);
  cov = 0.5 * (cov + cov.transpose()).eval();
  const double trace = cov.trace();
  WhitenedGaussian g;
  g.mean = mean;
  g.dim = dim;
  g.ridge = trace > 0.0 ? 1e-4 * trace / static_cast<double>(dim) : 1e-4;
  cov.diagonal().array() += g.ridge;
  Eigen::LLT<RowMatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw ValidationError("covariance is singular after regularization");
  RowMatrixXd l = llt.matrixL();
  g.chol.assign(l.data(), l.data() + l.size());
  return g;
}

std::vector<double> WhitenedGaussian::whiten(std::span<const double> x) const {
  // Forward substitution R y = x - mean.
  std::vector<double> y(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    double s = x[i] - mean[i];
    const double* r = chol.data() + i * dim;
    for (std::size_t j = 0; j < i; ++j) s -= r[j] * y[j];
    y[i] = s / r[i];
  }
  return y;
}

std::vector<double> WhitenedGaussian::covariance() const {
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::Map<const RowMatrixXd> l(chol.data(), n, n);
  RowMatrixXd c = l * l.transpose();
  return std::vector<double>(c.data(), c.data() + c.size());
}

OodScorer OodScorer::fit(DetectorKind kind, const MatrixF& train_features, std::span<const std::uint32_t> labels,
                         std::uint32_t num_classes, double p_percent) {
  OodScorer s;
  s.kind_ = kind;
  if (kind == DetectorKind::kMsp || kind == DetectorKind::kEnergy) {
    s.fitted_ = true;
    return s;
  }
  if (train_features.rows() != labels.size()) throw DimensionError("features and labels disagree on N");
  if (kind == DetectorKind::kKnn) {
    std::vector<std::uint64_t> rows(train_features.rows());
    std::iota(rows.begin(), rows.end(), std::uint64_t{0});
    s.knn_ = ZsfIndex(train_features, std::move(rows), p_percent);
    if (s.knn_.empty()) throw ValidationError("knn detector needs a non-empty training set");
    s.fitted_ = true;
    return s;
  }

  const std::size_t d = train_features.cols();
  const std::size_t n = train_features.rows();
  std::vector<std::vector<double>> sums(num_classes, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(num_classes, 0);
  std::vector<double> total(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= num_classes) throw ValidationError("label out of range");
    const auto row = train_features.row(i);
    auto& acc = sums[labels[i]];
    for (std::size_t j = 0; j < d; ++j) {
      acc[j] += row[j];
      total[j] += row[j];
    }
    ++counts[labels[i]];
  }
  std::vector<std::vector<double>> means(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    if (counts[c] < 2) {
      throw ValidationError("class " + std::to_string(c) + " has fewer than 2 training samples");
    }
    means[c] = sums[c];
    for (auto& v : means[c]) v /= static_cast<double>(counts[c]);
    s.class_means_.push_back(means[c]);
  }
  if (s.class_means_.empty()) throw ValidationError("mahalanobis detector needs training samples");

  auto pooled = scatter(train_features, [&](std::size_t i) -> const std::vector<double>& { return means[labels[i]]; });
  for (auto& v : pooled) v /= static_cast<double>(n);
  std::vector<double> pooled_mean(d, 0.0);
  s.pooled_ = WhitenedGaussian::fit(pooled_mean, pooled, d);
  for (const auto& mu : s.class_means_) s.whitened_class_means_.push_back(s.pooled_.whiten(mu));

  if (kind == DetectorKind::kRmd) {
    for (auto& v : total) v /= static_cast<double>(n);
    auto bg = scatter(train_features, [&](std::size_t) -> const std::vector<double>& { return total; });
    for (auto& v : bg) v /= static_cast<double>(n);
    s.background_ = WhitenedGaussian::fit(total, bg, d);
  }
  s.fitted_ = true;
  return s;
}

OodScorer OodScorer::fit(DetectorKind kind, const SplitData& id_train, double p_percent, FeatureSource source) {
  const auto k = static_cast<std::uint32_t>(id_train.ft.num_classes());
  return fit(kind, features_of(id_train, source), id_train.labels, k, p_percent);
}

double OodScorer::mahalanobis_score(std::span<const float> features) const {
  if (features.size() != pooled_.dim) throw DimensionError("feature dimension does not match the detector");
  const std::vector<double> x(features.begin(), features.end());
  const auto xw = pooled_.whiten(x);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& mu : whitened_class_means_) best = std::min(best, squared_distance(xw, mu));
  if (kind_ == DetectorKind::kMd) return -best;
  const auto bw = background_.whiten(x);
  const double md0 = squared_distance(bw, std::vector<double>(bw.size(), 0.0));
  return -(best - md0);
}

double OodScorer::score(std::span<const float> features, std::span<const float> ft_logits) const {
  if (!fitted_) throw ValidationError("OOD scorer used before fitting");
  switch (kind_) {
    case DetectorKind::kMsp: {
      std::vector<double> p(ft_logits.size());
      softmax_row(ft_logits, p);
      return *std::max_element(p.begin(), p.end());
    }
    case DetectorKind::kEnergy:
      return logsumexp_row(ft_logits);
    case DetectorKind::kMd:
    case DetectorKind::kRmd:
      return mahalanobis_score(features);
    case DetectorKind::kKnn:
      return -knn_.distance(features);
  }
  return 0.0;
}

std::vector<double> OodScorer::scores(const MatrixF& features, const MatrixF& ft_logits, unsigned threads) const {
  if (!fitted_) throw ValidationError("OOD scorer used before fitting");
  if (features.rows() != ft_logits.rows()) throw DimensionError("features and logits disagree on N");
  if (kind_ == DetectorKind::kKnn) {
    auto d = knn_.distances(features, threads);
    for (auto& v : d) v = -v;
    return d;
  }
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = score(features.row(i), ft_logits.row(i));
  return out;
}

std::vector<double> OodScorer::scores(const SplitData& split, FeatureSource source, unsigned threads) const {
  return scores(features_of(split, source), split.ft.logits, threads);
}

double calibrate_threshold(std::span<const double> id_scores, double tpr) {
  if (id_scores.size() < 20) throw ValidationError("threshold calibration needs at least 20 ID scores");
  if (!(tpr > 0.0 && tpr <= 1.0)) throw ValidationError("target TPR must lie in (0, 1]");
  std::vector<double> sorted(id_scores.begin(), id_scores.end());
  for (double v : sorted) {
    if (std::isnan(v)) throw ValidationError("NaN detector score");
  }
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const auto keep = static_cast<std::size_t>(std::ceil(tpr * static_cast<double>(n) - 1e-9));
  return sorted[n - std::max<std::size_t>(keep, 1)];
}

double true_positive_rate(std::span<const double> scores, double lambda) {
  if (scores.empty()) return 0.0;
  const auto hits = std::count_if(scores.begin(), scores.end(), [lambda](double s) { return s >= lambda; });
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

std::vector<std::uint32_t> selective_predict(std::span<const double> scores, double lambda,
                                             const MatrixF& zs_logits, const MatrixF& ft_logits) {
  if (std::isnan(lambda)) throw ValidationError("threshold must not be NaN");
  if (scores.size() != zs_logits.rows() || scores.size() != ft_logits.rows()) {
    throw DimensionError("scores and logits disagree on N");
  }
  std::vector<std::uint32_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = scores[i] >= lambda ? argmax(ft_logits.row(i)) : argmax(zs_logits.row(i));
  }
  return out;
}

std::vector<std::uint32_t> selective_predict(const SelectiveClassifier& classifier, const SplitData& split,
                                             FeatureSource source, unsigned threads) {
  const auto s = classifier.scorer.scores(split, source, threads);
  return selective_predict(s, classifier.lambda, split.zs.logits, split.ft.logits);
}

BaselineReport run_baseline(const DatasetManifest& manifest, DetectorKind kind, const BaselineOptions& options) {
  const auto id_tests = manifest.with_role(SplitRole::kIdTest);
  if (id_tests.empty()) throw ValidationError("baselines need an id-test split");

  const OodScorer scorer =
      OodScorer::fit(kind, manifest.load_split(manifest.id_train().name), options.p_percent, options.features);
  const SplitData val = manifest.load_split(manifest.id_val().name);
  const auto val_scores = scorer.scores(val, options.features, options.threads);

  BaselineReport r;
  r.detector = kind;
  r.lambda = options.lambda_override ? *options.lambda_override : calibrate_threshold(val_scores, options.tpr);
  r.id_val_tpr = true_positive_rate(val_scores, r.lambda);

  const SelectiveClassifier clf{scorer, r.lambda};
  auto eval = [&](const SplitData& split) {
    return accuracy(selective_predict(clf, split, options.features, options.threads), split.labels);
  };
  r.id_split = id_tests.front()->name;
  r.id_acc = eval(manifest.load_split(r.id_split));
  double sum = 0.0;
  for (const auto* e : manifest.with_role(SplitRole::kOodTest)) {
    r.ood_acc[e->name] = eval(manifest.load_split(e->name));
    sum += r.ood_acc[e->name];
  }
  r.ood_acc_mean = r.ood_acc.empty() ? 0.0 : sum / static_cast<double>(r.ood_acc.size());
  return r;
}

std::string baseline_json(const BaselineReport& report) {
  nlohmann::ordered_json j;
  j["detector"] = std::string(to_string(report.detector));
  if (const auto rep = lambda_repr(report.lambda); !rep.empty()) {
    j["lambda"] = rep;
  } else {
    j["lambda"] = report.lambda;
  }
  j["id_acc"] = report.id_acc;
  j["ood_acc"] = nlohmann::ordered_json::object();
  for (const auto& [name, acc] : report.ood_acc) j["ood_acc"][name] = acc;
  j["ood_acc_mean"] = report.ood_acc_mean;
  j["id_split"] = report.id_split;
  j["id_val_tpr"] = report.id_val_tpr;
  return j.dump();
}

}  // namespace vrf
