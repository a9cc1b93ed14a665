// SPDX-License-Identifier: Apache-2.0
#include "vrf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "vrf/error.hpp"
#include "vrf/manifest.hpp"
#include "vrf/tensor_io.hpp"

namespace vrf {
namespace {

using json = nlohmann::ordered_json;

// SplitMix64 finalizer, used to derive independent per-stream seeds.
std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double kStyleAngle = 0.8 * std::numbers::pi;

struct Geometry {
  std::vector<std::vector<double>> anchors;  // one unit vector per class
  std::vector<double> s0, s1;                // orthonormal style plane
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// K + 2 orthonormal directions by Gram-Schmidt on Gaussian draws.
Geometry make_geometry(const SynthSpec& spec, SynthRng& rng) {
  std::vector<std::vector<double>> basis;
  while (basis.size() < spec.num_classes + 2u) {
    std::vector<double> v(spec.dim);
    for (auto& x : v) x = rng.normal();
    for (const auto& b : basis) {
      const double p = dot(v, b);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
    }
    const double n = std::sqrt(dot(v, v));
    if (n < 1e-6) continue;
    for (auto& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  Geometry g;
  g.s1 = basis.back();
  basis.pop_back();
  g.s0 = basis.back();
  basis.pop_back();
  g.anchors = std::move(basis);
  return g;
}

void write_feature(const SynthSpec& spec, const Geometry& g, std::uint32_t label, double t, SynthRng& rng,
                   std::span<float> out) {
  const double c = std::cos(kStyleAngle * t);
  const double s = std::sin(kStyleAngle * t);
  const double noise = spec.feature_noise / std::sqrt(static_cast<double>(spec.dim));
  std::vector<double> v(spec.dim);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = spec.class_scale * g.anchors[label][i] + spec.style_scale * (c * g.s0[i] + s * g.s1[i]) +
           noise * rng.normal();
  }
  const double n = std::sqrt(dot(v, v));
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
}

// Log-probabilities with mass `conf` on `pred` and the remainder spread with
// random shares over the other classes.
void write_logits(const SynthSpec& spec, std::uint32_t pred, bool correct, SynthRng& rng, std::span<float> out) {
  const std::uint32_t k = spec.num_classes;
  const double conf = correct ? rng.uniform(spec.conf_right_lo, spec.conf_right_hi)
                              : rng.uniform(spec.conf_wrong_lo, spec.conf_wrong_hi);
  std::vector<double> p(k);
  double total = 0.0;
  for (std::uint32_t j = 0; j < k; ++j) {
    if (j == pred) continue;
    p[j] = rng.uniform(0.5, 1.5);
    total += p[j];
  }
  double max_other = 0.0;
  for (std::uint32_t j = 0; j < k; ++j) {
    if (j == pred) continue;
    p[j] *= (1.0 - conf) / total;
    max_other = std::max(max_other, p[j]);
  }
  p[pred] = std::max(conf, max_other + 1e-3);
  const double z = std::accumulate(p.begin(), p.end(), 0.0);
  for (std::uint32_t j = 0; j < k; ++j) out[j] = static_cast<float>(std::log(p[j] / z));
}

std::uint32_t wrong_label(std::uint32_t label, std::uint32_t k, SynthRng& rng) {
  return static_cast<std::uint32_t>((label + 1 + rng.below(k - 1)) % k);
}

struct Region {
  double t_lo = 0.0;
  double t_hi = 1.0;
};

SynthSplit make_split(const SynthSpec& spec, const Geometry& g, std::string name, std::string role, std::size_t n,
                      Region region, std::size_t n_planted, std::uint64_t stream_seed) {
  SynthRng rng(stream_seed);
  const std::uint32_t d = spec.dim, k = spec.num_classes;
  SynthSplit s;
  s.name = std::move(name);
  s.role = std::move(role);
  s.features_zs = MatrixF(n, d);
  s.features_ft = MatrixF(n, d);
  s.logits_zs = MatrixF(n, k);
  s.logits_ft = MatrixF(n, k);
  s.labels.resize(n);
  s.shift.resize(n);
  s.planted_zsf.assign(n, false);

  // Planted rows are spread over the split by a Fisher-Yates shuffle.
  std::vector<bool> planted(n, false);
  std::fill_n(planted.begin(), std::min(n_planted, n), true);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::vector<bool>::swap(planted[i - 1], planted[j]);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::uint32_t>(rng.below(k));
    bool zs_ok = true, ft_ok = true;
    double t = 0.0;
    if (planted[i]) {
      t = rng.uniform(0.0, 0.3);
      zs_ok = false;
    } else if (s.role == "id-train") {
      t = rng.uniform(region.t_lo, region.t_hi);
    } else {
      t = rng.uniform(region.t_lo, region.t_hi);
      ft_ok = rng.bernoulli(ft_accuracy_at(spec, t));
      zs_ok = rng.bernoulli(zs_accuracy_at(spec, t));
    }
    s.labels[i] = y;
    s.shift[i] = t;
    s.planted_zsf[i] = planted[i];
    write_feature(spec, g, y, t, rng, s.features_ft.row(i));
    write_feature(spec, g, y, t, rng, s.features_zs.row(i));
    const std::uint32_t zs_pred = zs_ok ? y : wrong_label(y, k, rng);
    const std::uint32_t ft_pred = ft_ok ? y : wrong_label(y, k, rng);
    write_logits(spec, zs_pred, zs_ok, rng, s.logits_zs.row(i));
    write_logits(spec, ft_pred, ft_ok, rng, s.logits_ft.row(i));
  }
  return s;
}

}  // namespace

double SynthRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double SynthRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SynthRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

std::uint64_t SynthRng::below(std::uint64_t n) {
  if (n == 0) throw ValidationError("below(0) is empty");
  return std::min(static_cast<std::uint64_t>(uniform() * static_cast<double>(n)), n - 1);
}

void SynthSpec::validate() const {
  if (n_train == 0 || n_id_val == 0 || n_id_test == 0 || n_ood_test == 0) {
    throw ValidationError("split sizes must be positive");
  }
  if (num_classes < 2) throw ValidationError("need at least 2 classes");
  if (dim < num_classes + 2) {
    throw ValidationError("dim must be at least num_classes + 2 to hold the class anchors and the style plane");
  }
  if (!(zsf_fraction >= 0.0 && zsf_fraction < 1.0)) throw ValidationError("zsf_fraction must lie in [0, 1)");
  if (!(ood_distance_shift >= 0.0 && ood_distance_shift < 1.0)) {
    throw ValidationError("ood_distance_shift must lie in [0, 1)");
  }
  if (num_ood_splits == 0) throw ValidationError("need at least one ood split");
  if (ood_distance_shift + 0.2 * (num_ood_splits - 1) >= 1.0) {
    throw ValidationError("too many ood splits for the given shift");
  }
  for (double p : {ft_acc_near, ft_acc_far, zs_acc_near, zs_acc_far}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("accuracy profile values must lie in [0, 1]");
  }
  for (double x : {class_scale, style_scale, feature_noise}) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("geometry scales must be finite and non-negative");
  }
  auto range_ok = [](double lo, double hi) { return lo > 0.0 && lo <= hi && hi < 1.0; };
  if (!range_ok(conf_right_lo, conf_right_hi) || !range_ok(conf_wrong_lo, conf_wrong_hi)) {
    throw ValidationError("confidence ranges must satisfy 0 < lo <= hi < 1");
  }
}

std::string synth_spec_json(const SynthSpec& spec) {
  json j;
  j["rng"] = std::string(kSynthRngId);
  j["n_train"] = spec.n_train;
  j["n_id_val"] = spec.n_id_val;
  j["n_id_test"] = spec.n_id_test;
  j["n_ood_test"] = spec.n_ood_test;
  j["dim"] = spec.dim;
  j["num_classes"] = spec.num_classes;
  j["seed"] = spec.seed;
  j["zsf_fraction"] = spec.zsf_fraction;
  j["ood_distance_shift"] = spec.ood_distance_shift;
  j["num_ood_splits"] = spec.num_ood_splits;
  j["class_scale"] = spec.class_scale;
  j["style_scale"] = spec.style_scale;
  j["feature_noise"] = spec.feature_noise;
  j["ft_acc_near"] = spec.ft_acc_near;
  j["ft_acc_far"] = spec.ft_acc_far;
  j["zs_acc_near"] = spec.zs_acc_near;
  j["zs_acc_far"] = spec.zs_acc_far;
  j["conf_right"] = {spec.conf_right_lo, spec.conf_right_hi};
  j["conf_wrong"] = {spec.conf_wrong_lo, spec.conf_wrong_hi};
  return j.dump(2);
}

SynthSpec synth_spec_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("synth spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("synth spec must be a JSON object");
  SynthSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "rng") {
        if (value.get<std::string>() != kSynthRngId) throw SchemaError("unsupported rng '" + value.get<std::string>() + "'");
      } else if (key == "n_train") {
        s.n_train = value.get<std::uint64_t>();
      } else if (key == "n_id_val") {
        s.n_id_val = value.get<std::uint64_t>();
      } else if (key == "n_id_test") {
        s.n_id_test = value.get<std::uint64_t>();
      } else if (key == "n_ood_test") {
        s.n_ood_test = value.get<std::uint64_t>();
      } else if (key == "dim") {
        s.dim = value.get<std::uint32_t>();
      } else if (key == "num_classes") {
        s.num_classes = value.get<std::uint32_t>();
      } else if (key == "seed") {
        s.seed = value.get<std::uint64_t>();
      } else if (key == "zsf_fraction") {
        s.zsf_fraction = value.get<double>();
      } else if (key == "ood_distance_shift") {
        s.ood_distance_shift = value.get<double>();
      } else if (key == "num_ood_splits") {
        s.num_ood_splits = value.get<std::uint32_t>();
      } else if (key == "class_scale") {
        s.class_scale = value.get<double>();
      } else if (key == "style_scale") {
        s.style_scale = value.get<double>();
      } else if (key == "feature_noise") {
        s.feature_noise = value.get<double>();
      } else if (key == "ft_acc_near") {
        s.ft_acc_near = value.get<double>();
      } else if (key == "ft_acc_far") {
        s.ft_acc_far = value.get<double>();
      } else if (key == "zs_acc_near") {
        s.zs_acc_near = value.get<double>();
      } else if (key == "zs_acc_far") {
        s.zs_acc_far = value.get<double>();
      } else if (key == "conf_right" || key == "conf_wrong") {
        if (!value.is_array() || value.size() != 2) throw SchemaError("'" + key + "' must be a [lo, hi] pair");
        auto& lo = key == "conf_right" ? s.conf_right_lo : s.conf_wrong_lo;
        auto& hi = key == "conf_right" ? s.conf_right_hi : s.conf_wrong_hi;
        lo = value[0].get<double>();
        hi = value[1].get<double>();
      } else {
        throw SchemaError("unknown synth spec key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("synth spec has a field of the wrong type: ") + e.what());
  }
  s.validate();
  return s;
}

double ft_accuracy_at(const SynthSpec& spec, double t) {
  if (t <= 0.25) return spec.ft_acc_near;
  return spec.ft_acc_near + (spec.ft_acc_far - spec.ft_acc_near) * (std::min(t, 1.0) - 0.25) / 0.75;
}

double zs_accuracy_at(const SynthSpec& spec, double t) {
  return spec.zs_acc_near + (spec.zs_acc_far - spec.zs_acc_near) * std::clamp(t, 0.0, 1.0);
}

std::vector<SynthSplit> generate_splits(const SynthSpec& spec) {
  spec.validate();
  SynthRng geo_rng(mix_seed(spec.seed));
  const Geometry g = make_geometry(spec, geo_rng);
  const Region id_region{0.0, 0.75};
  const auto n_planted = static_cast<std::size_t>(std::llround(spec.zsf_fraction * static_cast<double>(spec.n_train)));

  std::vector<SynthSplit> out;
  std::uint64_t stream = 1;
  auto next_seed = [&] { return mix_seed(spec.seed ^ mix_seed(stream++)); };
  out.push_back(make_split(spec, g, "train", "id-train", spec.n_train, id_region, n_planted, next_seed()));
  out.push_back(make_split(spec, g, "val", "id-val", spec.n_id_val, id_region, 0, next_seed()));
  out.push_back(make_split(spec, g, "id_test", "id-test", spec.n_id_test, id_region, 0, next_seed()));
  for (std::uint32_t j = 0; j < spec.num_ood_splits; ++j) {
    const Region r{spec.ood_distance_shift + 0.2 * j, 1.0};
    out.push_back(make_split(spec, g, "ood_" + std::to_string(j + 1), "ood-test", spec.n_ood_test, r, 0,
                             next_seed()));
  }
  return out;
}

std::filesystem::path generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  const auto splits = generate_splits(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  std::vector<SplitEntry> entries;
  for (const auto& s : splits) {
    SplitEntry e;
    e.name = s.name;
    e.role = parse_split_role(s.role);
    e.features_zs = out_dir / (s.name + ".features_zs.vrf");
    e.features_ft = out_dir / (s.name + ".features_ft.vrf");
    e.logits_zs = out_dir / (s.name + ".logits_zs.vrf");
    e.logits_ft = out_dir / (s.name + ".logits_ft.vrf");
    e.labels = out_dir / (s.name + ".labels.vrf");
    write_matrix(e.features_zs, s.features_zs);
    write_matrix(e.features_ft, s.features_ft);
    write_matrix(e.logits_zs, s.logits_zs);
    write_matrix(e.logits_ft, s.logits_ft);
    write_labels(e.labels, s.labels);
    e.size = s.labels.size();
    entries.push_back(std::move(e));
  }
  const auto manifest = out_dir / "manifest.json";
  save_manifest(manifest, spec.num_classes, entries);
  std::ofstream spec_out(out_dir / "synth_spec.json");
  spec_out << synth_spec_json(spec) << '\n';
  if (!spec_out) throw IoError("cannot write synth_spec.json");
  return manifest;
}

std::pair<std::vector<double>, std::vector<double>> generate_residual_pair(std::size_t n, double var_zs,
                                                                          double var_ft, double corr,
                                                                          std::uint64_t seed) {
  if (!(var_zs >= 0.0) || !(var_ft >= 0.0) || !std::isfinite(var_zs) || !std::isfinite(var_ft)) {
    throw ValidationError("variances must be finite and non-negative");
  }
  if (!(std::abs(corr) <= 1.0)) throw ValidationError("correlation must lie in [-1, 1]");
  // Cholesky factor of [[v_zs, c], [c, v_ft]] with c = corr * sd_zs * sd_ft.
  const double l11 = std::sqrt(var_zs);
  const double l21 = corr * std::sqrt(var_ft);
  const double l22 = std::sqrt(std::max(0.0, var_ft * (1.0 - corr * corr)));
  SynthRng rng(mix_seed(seed));
  std::vector<double> zs(n), ft(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    zs[i] = l11 * z1;
    ft[i] = l21 * z1 + l22 * z2;
  }
  return {std::move(zs), std::move(ft)};
}

CalibrationSample generate_calibration_logits(std::size_t n, std::uint32_t num_classes, double true_temperature,
                                              std::uint64_t seed) {
  if (num_classes < 2) throw ValidationError("need at least 2 classes");
  if (!(true_temperature > 0.0) || !std::isfinite(true_temperature)) {
    throw ValidationError("temperature must be positive");
  }
  SynthRng rng(mix_seed(seed));
  CalibrationSample out{MatrixF(n, num_classes), std::vector<std::uint32_t>(n)};
  std::vector<double> z(num_classes), p(num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hot = rng.below(num_classes);
    for (std::uint32_t j = 0; j < num_classes; ++j) z[j] = 1.5 * rng.normal() + (j == hot ? 2.0 : 0.0);
    const double m = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::uint32_t j = 0; j < num_classes; ++j) total += p[j] = std::exp(z[j] - m);
    double u = rng.uniform() * total;
    std::uint32_t y = num_classes - 1;
    for (std::uint32_t j = 0; j < num_classes; ++j) {
      if (u < p[j]) {
        y = j;
        break;
      }
      u -= p[j];
    }
    out.labels[i] = y;
    for (std::uint32_t j = 0; j < num_classes; ++j) out.logits(i, j) = static_cast<float>(true_temperature * z[j]);
  }
  return out;
}

}  // namespace vrf
