// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "vrf/matrix.hpp"

namespace vrf {

enum class ModelTag { kZeroShot, kFineTuned };

std::string_view to_string(ModelTag tag);

/// Aligned outputs of one model on one split: N x D features and N x K logits.
struct ModelOutputs {
  MatrixF features;
  MatrixF logits;
  ModelTag tag = ModelTag::kFineTuned;

  std::size_t size() const noexcept { return logits.rows(); }
  std::size_t num_classes() const noexcept { return logits.cols(); }

  /// Checks N agreement, D >= 1 and K >= 2. Throws DimensionError.
  void validate() const;
};

/// Row-stochastic N x K probabilities. Storage is float, every row is computed
/// in double and rounded once.
struct ProbMatrix {
  MatrixF values;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }
  std::span<const float> row(std::size_t i) const noexcept { return values.row(i); }
};

struct CalibrationParams {
  double temperature = 1.0;
};

/// Numerically stable softmax of one row, written into `out` (same length).
/// Throws ValidationError on non-finite input.
void softmax_row(std::span<const float> logits, std::span<double> out);

/// log(sum(exp(row))) evaluated with max subtraction.
double logsumexp_row(std::span<const float> logits);

ProbMatrix softmax(const MatrixF& logits);

/// Index of the largest entry; ties resolve to the smallest index.
std::uint32_t argmax(std::span<const float> row);

std::vector<std::uint32_t> predict(const MatrixF& scores);
std::vector<std::uint32_t> predict(const ProbMatrix& probs);

/// L2-normalizes every row. A zero-norm row is an error, never NaN.
MatrixF normalize_features(const MatrixF& features);

/// Mean negative log-likelihood of softmax(logits / temperature).
double mean_nll(const MatrixF& logits, std::span<const std::uint32_t> labels, double temperature);

/// Golden-section search over log T in [log 0.05, log 20] for the
/// NLL-minimizing temperature (tolerance 1e-3 in T).
CalibrationParams fit_temperature(const MatrixF& logits, std::span<const std::uint32_t> labels);

MatrixF apply_temperature(const MatrixF& logits, CalibrationParams params);

/// Top-1 exact-match fraction. Empty input gives 0.
double accuracy(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels);

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;

}  // namespace vrf
