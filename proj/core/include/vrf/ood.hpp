// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrf/manifest.hpp"
#include "vrf/matrix.hpp"
#include "vrf/zsf_index.hpp"

namespace vrf {

enum class DetectorKind { kMsp, kEnergy, kMd, kRmd, kKnn };

std::string_view to_string(DetectorKind kind);
DetectorKind parse_detector_kind(std::string_view text);

/// Multivariate Gaussian stored as a whitening transform: for covariance
/// S + lambda*I = R R^T, mahalanobis(x) = |R^-1 (x - mean)|^2.
struct WhitenedGaussian {
  std::vector<double> mean;
  std::vector<double> chol;  // lower-triangular R, row-major D x D
  std::size_t dim = 0;
  double ridge = 0.0;        // lambda added to the diagonal

  /// Covariance (denominator N) of `centered` rows, regularized by
  /// 1e-4 * trace / D (1e-4 when the trace is zero), then factorized.
  static WhitenedGaussian fit(const std::vector<double>& mean, const std::vector<double>& covariance,
                              std::size_t dim);

  std::vector<double> whiten(std::span<const double> x) const;
  /// Regularized covariance R R^T, row-major D x D.
  std::vector<double> covariance() const;
};

/// Out-of-distribution score function; higher means more in-distribution.
///   msp:    max softmax probability of the fine-tuned model
///   energy: logsumexp of the fine-tuned logits
///   md:     -min_c Mahalanobis^2 to class means under a pooled covariance
///   rmd:    -min_c (Mahalanobis^2_c - Mahalanobis^2_background)
///   knn:    -(k-th nearest neighbour distance to all id-train features)
class OodScorer {
 public:
  OodScorer() = default;

  static OodScorer fit(DetectorKind kind, const MatrixF& train_features, std::span<const std::uint32_t> labels,
                       std::uint32_t num_classes, double p_percent = kDefaultPPercent);
  static OodScorer fit(DetectorKind kind, const SplitData& id_train, double p_percent = kDefaultPPercent,
                       FeatureSource source = FeatureSource::kFineTuned);

  DetectorKind kind() const noexcept { return kind_; }
  bool fitted() const noexcept { return fitted_; }

  /// Score of one sample from its fine-tuned features and logits.
  double score(std::span<const float> features, std::span<const float> ft_logits) const;
  std::vector<double> scores(const MatrixF& features, const MatrixF& ft_logits, unsigned threads = 1) const;
  std::vector<double> scores(const SplitData& split, FeatureSource source = FeatureSource::kFineTuned,
                             unsigned threads = 1) const;

  const std::vector<std::vector<double>>& class_means() const noexcept { return class_means_; }
  const WhitenedGaussian& pooled() const noexcept { return pooled_; }
  const WhitenedGaussian& background() const noexcept { return background_; }
  const ZsfIndex& knn_index() const noexcept { return knn_; }

 private:
  double mahalanobis_score(std::span<const float> features) const;

  DetectorKind kind_ = DetectorKind::kMsp;
  bool fitted_ = false;
  std::vector<std::vector<double>> class_means_;           // present classes only
  std::vector<std::vector<double>> whitened_class_means_;  // R^-1 mu_c
  WhitenedGaussian pooled_;
  WhitenedGaussian background_;
  ZsfIndex knn_;
};

/// Largest threshold that keeps at least `tpr` of the ID scores at or above
/// it, i.e. the lower-interpolated (1 - tpr) quantile. Needs >= 20 scores.
double calibrate_threshold(std::span<const double> id_scores, double tpr = 0.95);

/// Fraction of scores >= lambda.
double true_positive_rate(std::span<const double> scores, double lambda);

struct SelectiveClassifier {
  OodScorer scorer;
  double lambda = 0.0;
};

/// Fine-tuned argmax where score >= lambda, zero-shot argmax elsewhere.
std::vector<std::uint32_t> selective_predict(std::span<const double> scores, double lambda,
                                             const MatrixF& zs_logits, const MatrixF& ft_logits);
std::vector<std::uint32_t> selective_predict(const SelectiveClassifier& classifier, const SplitData& split,
                                             FeatureSource source = FeatureSource::kFineTuned,
                                             unsigned threads = 1);

struct BaselineReport {
  DetectorKind detector = DetectorKind::kMsp;
  double lambda = 0.0;
  double id_val_tpr = 0.0;
  std::string id_split;
  double id_acc = 0.0;
  std::map<std::string, double> ood_acc;
  double ood_acc_mean = 0.0;
};

struct BaselineOptions {
  double tpr = 0.95;
  double p_percent = kDefaultPPercent;
  std::optional<double> lambda_override;
  FeatureSource features = FeatureSource::kFineTuned;
  unsigned threads = 1;
};

/// Fits on id-train, calibrates on id-val, evaluates the first id-test split
/// and every ood-test split.
BaselineReport run_baseline(const DatasetManifest& manifest, DetectorKind kind, const BaselineOptions& options);

/// {"detector": str, "lambda": float, "id_acc": float, "ood_acc": {split: float}}
std::string baseline_json(const BaselineReport& report);

}  // namespace vrf
