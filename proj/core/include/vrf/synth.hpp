// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vrf/matrix.hpp"

namespace vrf {

/// Identifier of the pseudo-random scheme below, written next to every
/// generated dataset so other implementations can reproduce it.
inline constexpr std::string_view kSynthRngId = "mt19937_64/u53/box-muller-v1";

/// Seeded stream: 64-bit Mersenne Twister; uniforms are (x >> 11) * 2^-53;
/// normals come from the Box-Muller transform of (1 - u1, u2), cosine first,
/// then sine; below(n) is floor(u * n).
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  double normal();                          // N(0, 1)
  std::uint64_t below(std::uint64_t n);     // uniform integer in [0, n)
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Parameters of the planted-structure generator. Each sample carries a
/// latent style shift t in [0, 1]; features drift along a style circle as t
/// grows, the fine-tuned model degrades with t and the zero-shot model
/// improves with it.
struct SynthSpec {
  std::uint64_t n_train = 5000;
  std::uint64_t n_id_val = 2000;
  std::uint64_t n_id_test = 2000;
  std::uint64_t n_ood_test = 2000;  // per ood split
  std::uint32_t dim = 32;
  std::uint32_t num_classes = 10;
  std::uint64_t seed = 0;
  /// Share of id-train samples planted in the ZSF region.
  double zsf_fraction = 0.2;
  /// Lower end of t for the first ood split; later splits start further out.
  double ood_distance_shift = 0.35;
  std::uint32_t num_ood_splits = 2;

  double class_scale = 0.5;
  double style_scale = 1.2;
  double feature_noise = 0.3;

  /// Accuracy profiles: fine-tuned stays at ft_acc_near up to t = 0.25, then
  /// falls linearly to ft_acc_far at t = 1; zero-shot rises linearly from
  /// zs_acc_near at t = 0 to zs_acc_far at t = 1.
  double ft_acc_near = 0.97;
  double ft_acc_far = 0.25;
  double zs_acc_near = 0.3;
  double zs_acc_far = 0.9;

  /// Confidence ranges of correct and wrong predictions.
  double conf_right_lo = 0.55, conf_right_hi = 0.95;
  double conf_wrong_lo = 0.35, conf_wrong_hi = 0.75;

  void validate() const;
};

std::string synth_spec_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(std::string_view text);

/// Accuracy profiles at style shift t.
double ft_accuracy_at(const SynthSpec& spec, double t);
double zs_accuracy_at(const SynthSpec& spec, double t);

struct SynthSplit {
  std::string name;
  std::string role;
  MatrixF features_zs;
  MatrixF features_ft;
  MatrixF logits_zs;
  MatrixF logits_ft;
  std::vector<std::uint32_t> labels;
  std::vector<double> shift;       // latent t per sample
  std::vector<bool> planted_zsf;   // id-train only
};

/// Splits in manifest order: train, val, id_test, ood_1..ood_n.
std::vector<SynthSplit> generate_splits(const SynthSpec& spec);

/// Writes the tensors, manifest.json and synth_spec.json into `out_dir` and
/// returns the manifest path.
std::filesystem::path generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Jointly Gaussian zero-mean streams with the given variances and
/// correlation, built from the Cholesky factor of the 2x2 covariance.
std::pair<std::vector<double>, std::vector<double>> generate_residual_pair(std::size_t n, double var_zs,
                                                                          double var_ft, double corr,
                                                                          std::uint64_t seed);

struct CalibrationSample {
  MatrixF logits;
  std::vector<std::uint32_t> labels;
};

/// Labels drawn from softmax(z) for random logits z; emitted logits are
/// true_temperature * z, so temperature scaling should recover it.
CalibrationSample generate_calibration_logits(std::size_t n, std::uint32_t num_classes, double true_temperature,
                                              std::uint64_t seed);

}  // namespace vrf
