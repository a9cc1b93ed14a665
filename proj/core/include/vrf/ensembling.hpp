// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrf/manifest.hpp"
#include "vrf/prediction.hpp"
#include "vrf/weighting.hpp"
#include "vrf/zsf_index.hpp"

namespace vrf {

enum class EnsembleSpace { kProb, kLogit };

std::string_view to_string(EnsembleSpace space);
EnsembleSpace parse_ensemble_space(std::string_view text);

struct EnsembleConfig {
  EnsembleSpace space = EnsembleSpace::kProb;
  WeightFunction weight_fn = SigmoidWeight{};
  /// Temperature-scale both models before combining.
  bool use_calibration = false;
};

struct EnsembleOutput {
  ProbMatrix probs;
  std::vector<std::uint32_t> predictions;
};

/// Per-sample combination with weight w_i on the fine-tuned model.
///   prob space:  w * softmax(ft) + (1 - w) * softmax(zs)
///   logit space: softmax(w * ft + (1 - w) * zs)
/// Rows are combined in double; predictions are the argmax of the double row
/// (smallest index on ties), probabilities are stored as float.
EnsembleOutput ensemble(EnsembleSpace space, const MatrixF& zs_logits, const MatrixF& ft_logits,
                        std::span<const double> weights);

/// Constant-coefficient output-space ensemble.
EnsembleOutput ose(double alpha, const MatrixF& zs_logits, const MatrixF& ft_logits);
/// Constant-coefficient logit-space ensemble.
EnsembleOutput lse(double alpha, const MatrixF& zs_logits, const MatrixF& ft_logits);

/// Per-model temperatures fitted on an ID validation split.
struct Calibration {
  CalibrationParams zs;
  CalibrationParams ft;
};

Calibration fit_calibration(const SplitData& id_val);

struct PipelineOptions {
  FeatureSource features = FeatureSource::kFineTuned;
  unsigned threads = 1;
  /// Required when the config asks for calibration.
  std::optional<Calibration> calibration;
};

struct PipelineResult {
  std::string split;
  EnsembleConfig config;
  std::vector<double> distances;  // empty for constant weights
  std::vector<double> weights;
  EnsembleOutput output;
  double accuracy = 0.0;
  double mean_weight = 0.0;
  std::size_t n = 0;
};

/// k-NN distance of every sample in `split` to the index.
std::vector<double> split_distances(const SplitData& split, const ZsfIndex& index,
                                    const PipelineOptions& options = {});

/// Weighting and ensembling given precomputed distances. `distances` may be
/// empty when the weight function is constant.
PipelineResult evaluate_with_distances(const SplitData& split, std::span<const double> distances,
                                       const EnsembleConfig& config, const PipelineOptions& options = {});

/// Distance, weight and ensemble for one split end to end.
PipelineResult vrf_pipeline(const SplitData& split, const ZsfIndex& index, const EnsembleConfig& config,
                            const PipelineOptions& options = {});

/// Loads `split_name` from the manifest; fits temperatures on the id-val
/// split when the config asks for calibration and none were supplied.
PipelineResult vrf_pipeline(const DatasetManifest& manifest, std::string_view split_name, const ZsfIndex& index,
                            const EnsembleConfig& config, PipelineOptions options = {});

/// {"split": str, "config": {...}, "accuracy": float, "mean_weight": float, "n": int}
std::string result_json(const PipelineResult& result);
std::string config_json(const EnsembleConfig& config);

}  // namespace vrf
