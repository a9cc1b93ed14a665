// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrf/ensembling.hpp"
#include "vrf/manifest.hpp"
#include "vrf/weighting.hpp"
#include "vrf/zsf_index.hpp"

namespace vrf {

enum class FrontierMethod { kOse, kLse, kVrf };

std::string_view to_string(FrontierMethod method);
FrontierMethod parse_frontier_method(std::string_view text);

/// One evaluated configuration.
struct SweepPoint {
  EnsembleConfig config;
  double accuracy = 0.0;
  double mean_weight = 0.0;
};

/// Index of the most accurate point; ties go to tie_break_less on the weight
/// function (smaller b, then a, then alpha). Throws on empty input.
std::size_t select_hyperparams(std::span<const SweepPoint> points);

/// Evaluates every weight function of `grid` on one split.
std::vector<SweepPoint> sweep(const SplitData& split, std::span<const double> distances,
                              std::span<const WeightFunction> grid, EnsembleSpace space,
                              const PipelineOptions& options = {});

/// (ID accuracy, mean OOD accuracy) of one configuration.
struct FrontierPoint {
  EnsembleConfig config;
  double id_acc = 0.0;
  double ood_acc_mean = 0.0;  // unweighted mean over ood-test splits
  std::map<std::string, double> ood_acc;
};

struct FrontierOptions {
  SweepAxes axes = SweepAxes::defaults();
  /// Weight family swept by the vrf method.
  WeightKind vrf_kind = WeightKind::kSigmoid;
  PipelineOptions pipeline;
};

/// The configurations a method sweeps: constant alphas for ose/lse, the
/// `vrf_kind` grid for vrf.
std::vector<EnsembleConfig> frontier_grid(FrontierMethod method, const FrontierOptions& options);

/// Evaluates each configuration on the first id-test split and on every
/// ood-test split. `index` may be null when every weight is constant.
std::vector<FrontierPoint> evaluate_configs(const DatasetManifest& manifest, std::span<const EnsembleConfig> configs,
                                            const ZsfIndex* index, const PipelineOptions& options = {});

std::vector<FrontierPoint> frontier(const DatasetManifest& manifest, FrontierMethod method, const ZsfIndex* index,
                                    const FrontierOptions& options = {});

/// config,id_acc,ood_acc_mean,<ood split>... with the config as quoted JSON.
std::string frontier_csv(std::span<const FrontierPoint> points);
/// config,accuracy,mean_weight
std::string sweep_csv(std::span<const SweepPoint> points);

}  // namespace vrf
