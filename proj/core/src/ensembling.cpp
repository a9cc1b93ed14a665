// SPDX-License-Identifier: Apache-2.0
#include "vrf/ensembling.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

namespace vrf {
namespace {

std::uint32_t argmax_double(std::span<const double> row) {
  std::uint32_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = static_cast<std::uint32_t>(j);
  }
  return best;
}

void check_pair(const MatrixF& zs, const MatrixF& ft, std::size_t n_weights) {
  if (zs.rows() != ft.rows() || zs.cols() != ft.cols()) {
    throw DimensionError("zero-shot and fine-tuned logits have different shapes");
  }
  if (n_weights != zs.rows()) throw DimensionError("one weight per sample is required");
}

}  // namespace

std::string_view to_string(EnsembleSpace space) { return space == EnsembleSpace::kProb ? "prob" : "logit"; }

EnsembleSpace parse_ensemble_space(std::string_view text) {
  if (text == "prob") return EnsembleSpace::kProb;
  if (text == "logit") return EnsembleSpace::kLogit;
  throw ValidationError("unknown ensemble space '" + std::string(text) + "'");
}

EnsembleOutput ensemble(EnsembleSpace space, const MatrixF& zs_logits, const MatrixF& ft_logits,
                        std::span<const double> weights) {
  check_pair(zs_logits, ft_logits, weights.size());
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("ensemble weight outside [0, 1]");
  }
  const std::size_t n = zs_logits.rows();
  const std::size_t k = zs_logits.cols();
  EnsembleOutput out{ProbMatrix{MatrixF(n, k)}, std::vector<std::uint32_t>(n)};
  std::vector<double> pz(k), pf(k), mix(k);
  std::vector<float> z(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    if (space == EnsembleSpace::kProb) {
      softmax_row(zs_logits.row(i), pz);
      softmax_row(ft_logits.row(i), pf);
      for (std::size_t j = 0; j < k; ++j) mix[j] = w * pf[j] + (1.0 - w) * pz[j];
      out.predictions[i] = argmax_double(mix);
    } else {
      const auto rz = zs_logits.row(i);
      const auto rf = ft_logits.row(i);
      for (std::size_t j = 0; j < k; ++j) {
        if (!std::isfinite(rz[j]) || !std::isfinite(rf[j])) throw ValidationError("non-finite logit");
        pz[j] = w * rf[j] + (1.0 - w) * rz[j];
      }
      out.predictions[i] = argmax_double(pz);
      const double m = pz[out.predictions[i]];
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        mix[j] = std::exp(pz[j] - m);
        sum += mix[j];
      }
      for (auto& p : mix) p /= sum;
    }
    auto dst = out.probs.values.row(i);
    for (std::size_t j = 0; j < k; ++j) dst[j] = static_cast<float>(mix[j]);
  }
  return out;
}

EnsembleOutput ose(double alpha, const MatrixF& zs_logits, const MatrixF& ft_logits) {
  validate(ConstantWeight{alpha});
  const std::vector<double> w(zs_logits.rows(), alpha);
  return ensemble(EnsembleSpace::kProb, zs_logits, ft_logits, w);
}

EnsembleOutput lse(double alpha, const MatrixF& zs_logits, const MatrixF& ft_logits) {
  validate(ConstantWeight{alpha});
  const std::vector<double> w(zs_logits.rows(), alpha);
  return ensemble(EnsembleSpace::kLogit, zs_logits, ft_logits, w);
}

Calibration fit_calibration(const SplitData& id_val) {
  return Calibration{fit_temperature(id_val.zs.logits, id_val.labels),
                     fit_temperature(id_val.ft.logits, id_val.labels)};
}

std::vector<double> split_distances(const SplitData& split, const ZsfIndex& index, const PipelineOptions& options) {
  return index.distances(features_of(split, options.features), options.threads);
}

PipelineResult evaluate_with_distances(const SplitData& split, std::span<const double> distances,
                                       const EnsembleConfig& config, const PipelineOptions& options) {
  validate(config.weight_fn);
  PipelineResult r;
  r.split = split.name;
  r.config = config;
  r.n = split.size();
  if (kind_of(config.weight_fn) == WeightKind::kConstant && distances.empty()) {
    r.weights.assign(r.n, std::get<ConstantWeight>(config.weight_fn).alpha);
  } else {
    if (distances.size() != r.n) throw DimensionError("one distance per sample is required");
    r.distances.assign(distances.begin(), distances.end());
    r.weights = weight_batch(config.weight_fn, distances);
  }

  const MatrixF* zs = &split.zs.logits;
  const MatrixF* ft = &split.ft.logits;
  MatrixF zs_cal, ft_cal;
  if (config.use_calibration) {
    if (!options.calibration) throw ValidationError("calibrated ensembling needs fitted temperatures");
    zs_cal = apply_temperature(*zs, options.calibration->zs);
    ft_cal = apply_temperature(*ft, options.calibration->ft);
    zs = &zs_cal;
    ft = &ft_cal;
  }
  r.output = ensemble(config.space, *zs, *ft, r.weights);
  r.accuracy = accuracy(r.output.predictions, split.labels);
  r.mean_weight = r.n == 0 ? 0.0 : std::accumulate(r.weights.begin(), r.weights.end(), 0.0) / static_cast<double>(r.n);
  return r;
}

PipelineResult vrf_pipeline(const SplitData& split, const ZsfIndex& index, const EnsembleConfig& config,
                            const PipelineOptions& options) {
  if (kind_of(config.weight_fn) == WeightKind::kConstant) {
    return evaluate_with_distances(split, {}, config, options);
  }
  const auto d = split_distances(split, index, options);
  return evaluate_with_distances(split, d, config, options);
}

PipelineResult vrf_pipeline(const DatasetManifest& manifest, std::string_view split_name, const ZsfIndex& index,
                            const EnsembleConfig& config, PipelineOptions options) {
  if (config.use_calibration && !options.calibration) {
    options.calibration = fit_calibration(manifest.load_split(manifest.id_val().name));
  }
  return vrf_pipeline(manifest.load_split(split_name), index, config, options);
}

std::string config_json(const EnsembleConfig& config) {
  nlohmann::ordered_json j;
  j["space"] = std::string(to_string(config.space));
  j["weight"] = nlohmann::ordered_json::parse(to_json(config.weight_fn));
  j["calibrated"] = config.use_calibration;
  return j.dump();
}

std::string result_json(const PipelineResult& result) {
  nlohmann::ordered_json j;
  j["split"] = result.split;
  j["config"] = nlohmann::ordered_json::parse(config_json(result.config));
  j["accuracy"] = result.accuracy;
  j["mean_weight"] = result.mean_weight;
  j["n"] = result.n;
  return j.dump();
}

}  // namespace vrf
