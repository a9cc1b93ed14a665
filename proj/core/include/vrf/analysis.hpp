// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vrf/prediction.hpp"

namespace vrf {

/// Per-bin ratio of fine-tuned to zero-shot accuracy over k-NN distance.
/// A bin holds the samples with |d - center| <= halfwidth, so bins that
/// share an edge both count a sample sitting exactly on it.
struct RatioCurve {
  std::vector<double> bin_centers;
  double bin_halfwidth = 0.1;
  std::vector<std::optional<double>> ratio;  // empty when the bin is empty or zs accuracy is 0
  std::vector<std::size_t> counts;
  std::vector<double> zs_accuracy;
  std::vector<double> ft_accuracy;
};

/// Centers 0.2, 0.4, ..., 1.8.
std::vector<double> default_bin_centers();
inline constexpr double kDefaultBinHalfwidth = 0.1;

RatioCurve ratio_curve(std::span<const double> distances, std::span<const std::uint32_t> zs_preds,
                       std::span<const std::uint32_t> ft_preds, std::span<const std::uint32_t> labels,
                       std::span<const double> bin_centers, double halfwidth);

/// True-class residual P(y | x) - 1 per sample.
std::vector<double> residuals(const ProbMatrix& probs, std::span<const std::uint32_t> labels);

/// Second moments of two residual streams (denominator N) and the
/// variance-minimizing weight g on the fine-tuned stream for
///   Var(g * eta_ft + (1 - g) * eta_zs).
struct ResidualStats {
  std::size_t n = 0;
  double var_zs = 0.0;
  double var_ft = 0.0;
  double cov = 0.0;
  std::optional<double> g_opt_independent;  // V_zs / (V_zs + V_ft)
  std::optional<double> g_opt_correlated;   // (V_zs - C) / (V_zs + V_ft - 2C), clamped to [0, 1]
  std::optional<double> pearson;            // C / sqrt(V_zs V_ft)
};

ResidualStats residual_stats(std::span<const double> eta_zs, std::span<const double> eta_ft);

/// Var(g * eta_ft + (1 - g) * eta_zs) from second moments.
double combined_variance(double g, double var_zs, double var_ft, double cov = 0.0);
std::optional<double> optimal_weight_independent(double var_zs, double var_ft);
std::optional<double> optimal_weight_correlated(double var_zs, double var_ft, double cov);

struct WeightBin {
  double center = 0.0;
  std::size_t count = 0;
  std::optional<double> g_opt;  // empty for bins with fewer than 2 samples or an undefined optimum
  std::optional<ResidualStats> stats;
};

/// residual_stats over each distance bin, reporting the correlated optimum.
std::vector<WeightBin> binned_optimal_weight(std::span<const double> distances, std::span<const double> eta_zs,
                                             std::span<const double> eta_ft, std::span<const double> bin_centers,
                                             double halfwidth);

/// Spearman rank correlation with average ranks for ties; empty when either
/// side is constant or fewer than 2 points are given.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Spearman correlation between the centers and the defined ratios.
std::optional<double> ratio_trend(const RatioCurve& curve);

/// center,ratio,count,zs_acc,ft_acc with NA for undefined ratios.
std::string ratio_curve_csv(const RatioCurve& curve);
std::string residual_stats_json(const ResidualStats& stats);
/// center,count,g_opt with NA for undefined bins.
std::string binned_weight_csv(std::span<const WeightBin> bins);

}  // namespace vrf
