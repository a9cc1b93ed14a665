// SPDX-License-Identifier: Apache-2.0
#include "vrf/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace vrf {

std::string_view to_string(ModelTag tag) {
  return tag == ModelTag::kZeroShot ? "zs" : "ft";
}

void ModelOutputs::validate() const {
  if (features.rows() != logits.rows()) {
    throw DimensionError("features have " + std::to_string(features.rows()) + " rows but logits have " +
                         std::to_string(logits.rows()));
  }
  if (features.cols() < 1) throw DimensionError("feature dimension must be >= 1");
  if (logits.cols() < 2) throw DimensionError("logits need at least 2 classes");
}

void softmax_row(std::span<const float> logits, std::span<double> out) {
  double m = -INFINITY;
  for (float v : logits) {
    if (!std::isfinite(v)) throw ValidationError("softmax: non-finite logit");
    m = std::max(m, static_cast<double>(v));
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(static_cast<double>(logits[j]) - m);
    sum += out[j];
  }
  for (auto& p : out) p /= sum;
}

double logsumexp_row(std::span<const float> logits) {
  double m = -INFINITY;
  for (float v : logits) {
    if (!std::isfinite(v)) throw ValidationError("logsumexp: non-finite logit");
    m = std::max(m, static_cast<double>(v));
  }
  double sum = 0.0;
  for (float v : logits) sum += std::exp(static_cast<double>(v) - m);
  return m + std::log(sum);
}

ProbMatrix softmax(const MatrixF& logits) {
  ProbMatrix out{MatrixF(logits.rows(), logits.cols())};
  std::vector<double> buf(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    softmax_row(logits.row(i), buf);
    auto dst = out.values.row(i);
    std::transform(buf.begin(), buf.end(), dst.begin(), [](double p) { return static_cast<float>(p); });
  }
  return out;
}

std::uint32_t argmax(std::span<const float> row) {
  if (row.empty()) throw DimensionError("argmax of an empty row");
  std::uint32_t best = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (std::isnan(row[j])) throw ValidationError("predict: NaN in row");
    if (row[j] > row[best]) best = static_cast<std::uint32_t>(j);
  }
  return best;
}

std::vector<std::uint32_t> predict(const MatrixF& scores) {
  std::vector<std::uint32_t> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) out[i] = argmax(scores.row(i));
  return out;
}

std::vector<std::uint32_t> predict(const ProbMatrix& probs) { return predict(probs.values); }

MatrixF normalize_features(const MatrixF& features) {
  MatrixF out(features.rows(), features.cols());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto src = features.row(i);
    double ss = 0.0;
    for (float v : src) ss += static_cast<double>(v) * v;
    if (!(ss > 0.0) || !std::isfinite(ss)) {
      throw ValidationError("feature row " + std::to_string(i) + " has zero or non-finite norm");
    }
    const double inv = 1.0 / std::sqrt(ss);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<float>(src[j] * inv);
  }
  return out;
}

double mean_nll(const MatrixF& logits, std::span<const std::uint32_t> labels, double temperature) {
  if (labels.size() != logits.rows()) throw DimensionError("labels and logits disagree on N");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  const double inv_t = 1.0 / temperature;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    if (labels[i] >= row.size()) throw ValidationError("label out of range");
    double m = -INFINITY;
    for (float v : row) m = std::max(m, v * inv_t);
    double sum = 0.0;
    for (float v : row) sum += std::exp(v * inv_t - m);
    total += m + std::log(sum) - row[labels[i]] * inv_t;
  }
  return logits.rows() == 0 ? 0.0 : total / static_cast<double>(logits.rows());
}

CalibrationParams fit_temperature(const MatrixF& logits, std::span<const std::uint32_t> labels) {
  if (logits.rows() < 2) throw ValidationError("temperature fitting needs at least 2 samples");
  if (labels.size() != logits.rows()) throw DimensionError("labels and logits disagree on N");
  if (std::set<std::uint32_t>(labels.begin(), labels.end()).size() < 2) {
    throw ValidationError("temperature fitting needs at least 2 distinct labels");
  }
  for (float v : logits.values()) {
    if (!std::isfinite(v)) throw ValidationError("temperature fitting: non-finite logit");
  }

  // NLL is convex in 1/T, hence unimodal in log T.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::log(kMinTemperature);
  double hi = std::log(kMaxTemperature);
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = mean_nll(logits, labels, std::exp(x1));
  double f2 = mean_nll(logits, labels, std::exp(x2));
  while (std::exp(hi) - std::exp(lo) > 1e-4) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = mean_nll(logits, labels, std::exp(x1));
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = mean_nll(logits, labels, std::exp(x2));
    }
  }
  return CalibrationParams{std::exp(0.5 * (lo + hi))};
}

MatrixF apply_temperature(const MatrixF& logits, CalibrationParams params) {
  if (!(params.temperature > 0.0) || !std::isfinite(params.temperature)) {
    throw ValidationError("temperature must be positive and finite");
  }
  MatrixF out = logits;
  const double t = params.temperature;
  for (auto& v : out.values()) v = static_cast<float>(v / t);
  return out;
}

double accuracy(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("predictions and labels disagree on N");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace vrf
