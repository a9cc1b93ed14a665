// SPDX-License-Identifier: Apache-2.0
#include "vrf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vrf/error.hpp"

namespace vrf {
namespace {

void check_aligned(std::size_t n, std::initializer_list<std::size_t> sizes) {
  for (std::size_t s : sizes) {
    if (s != n) throw DimensionError("input arrays are not aligned");
  }
}

void check_bins(std::span<const double> centers, double halfwidth) {
  if (!(halfwidth > 0.0) || !std::isfinite(halfwidth)) throw ValidationError("bin halfwidth must be positive");
  for (double c : centers) {
    if (!std::isfinite(c)) throw ValidationError("bin centers must be finite");
  }
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
nlohmann::ordered_json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::vector<double> default_bin_centers() { return {0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8}; }

RatioCurve ratio_curve(std::span<const double> distances, std::span<const std::uint32_t> zs_preds,
                       std::span<const std::uint32_t> ft_preds, std::span<const std::uint32_t> labels,
                       std::span<const double> bin_centers, double halfwidth) {
  check_aligned(distances.size(), {zs_preds.size(), ft_preds.size(), labels.size()});
  check_bins(bin_centers, halfwidth);
  RatioCurve curve;
  curve.bin_centers.assign(bin_centers.begin(), bin_centers.end());
  curve.bin_halfwidth = halfwidth;
  for (double c : bin_centers) {
    std::size_t n = 0, zs_hits = 0, ft_hits = 0;
    for (std::size_t i = 0; i < distances.size(); ++i) {
      if (std::abs(distances[i] - c) > halfwidth) continue;
      ++n;
      zs_hits += zs_preds[i] == labels[i];
      ft_hits += ft_preds[i] == labels[i];
    }
    curve.counts.push_back(n);
    const double zs_acc = n ? static_cast<double>(zs_hits) / static_cast<double>(n) : 0.0;
    const double ft_acc = n ? static_cast<double>(ft_hits) / static_cast<double>(n) : 0.0;
    curve.zs_accuracy.push_back(zs_acc);
    curve.ft_accuracy.push_back(ft_acc);
    curve.ratio.push_back(zs_hits ? std::optional<double>(ft_acc / zs_acc) : std::nullopt);
  }
  return curve;
}

std::vector<double> residuals(const ProbMatrix& probs, std::span<const std::uint32_t> labels) {
  check_aligned(probs.rows(), {labels.size()});
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= probs.cols()) throw ValidationError("label out of range");
    out[i] = static_cast<double>(probs.values(i, labels[i])) - 1.0;
  }
  return out;
}

double combined_variance(double g, double var_zs, double var_ft, double cov) {
  return g * g * var_ft + (1.0 - g) * (1.0 - g) * var_zs + 2.0 * g * (1.0 - g) * cov;
}

std::optional<double> optimal_weight_independent(double var_zs, double var_ft) {
  const double den = var_zs + var_ft;
  if (!(den > 0.0)) return std::nullopt;
  return var_zs / den;
}

std::optional<double> optimal_weight_correlated(double var_zs, double var_ft, double cov) {
  const double num = var_zs - cov;
  const double den = var_zs + var_ft - 2.0 * cov;
  if (num == 0.0 || !(den > 0.0)) return std::nullopt;
  return std::clamp(num / den, 0.0, 1.0);
}

ResidualStats residual_stats(std::span<const double> eta_zs, std::span<const double> eta_ft) {
  check_aligned(eta_zs.size(), {eta_ft.size()});
  if (eta_zs.size() < 2) throw ValidationError("residual statistics need at least 2 samples");
  const auto n = static_cast<double>(eta_zs.size());
  double mz = 0.0, mf = 0.0;
  for (std::size_t i = 0; i < eta_zs.size(); ++i) {
    mz += eta_zs[i];
    mf += eta_ft[i];
  }
  mz /= n;
  mf /= n;
  double vz = 0.0, vf = 0.0, c = 0.0;
  for (std::size_t i = 0; i < eta_zs.size(); ++i) {
    const double dz = eta_zs[i] - mz;
    const double df = eta_ft[i] - mf;
    vz += dz * dz;
    vf += df * df;
    c += dz * df;
  }
  ResidualStats s;
  s.n = eta_zs.size();
  s.var_zs = vz / n;
  s.var_ft = vf / n;
  s.cov = c / n;
  s.g_opt_independent = optimal_weight_independent(s.var_zs, s.var_ft);
  s.g_opt_correlated = optimal_weight_correlated(s.var_zs, s.var_ft, s.cov);
  if (s.var_zs > 0.0 && s.var_ft > 0.0) {
    s.pearson = std::clamp(s.cov / std::sqrt(s.var_zs * s.var_ft), -1.0, 1.0);
  }
  return s;
}

std::vector<WeightBin> binned_optimal_weight(std::span<const double> distances, std::span<const double> eta_zs,
                                             std::span<const double> eta_ft, std::span<const double> bin_centers,
                                             double halfwidth) {
  check_aligned(distances.size(), {eta_zs.size(), eta_ft.size()});
  check_bins(bin_centers, halfwidth);
  std::vector<WeightBin> out;
  for (double c : bin_centers) {
    std::vector<double> z, f;
    for (std::size_t i = 0; i < distances.size(); ++i) {
      if (std::abs(distances[i] - c) > halfwidth) continue;
      z.push_back(eta_zs[i]);
      f.push_back(eta_ft[i]);
    }
    WeightBin bin;
    bin.center = c;
    bin.count = z.size();
    if (z.size() >= 2) {
      bin.stats = residual_stats(z, f);
      bin.g_opt = bin.stats->g_opt_correlated;
    }
    out.push_back(std::move(bin));
  }
  return out;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  check_aligned(x.size(), {y.size()});
  if (x.size() < 2) return std::nullopt;
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const auto n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> ratio_trend(const RatioCurve& curve) {
  std::vector<double> c, r;
  for (std::size_t i = 0; i < curve.ratio.size(); ++i) {
    if (!curve.ratio[i]) continue;
    c.push_back(curve.bin_centers[i]);
    r.push_back(*curve.ratio[i]);
  }
  return spearman(c, r);
}

std::string ratio_curve_csv(const RatioCurve& curve) {
  std::string out = "center,ratio,count,zs_acc,ft_acc\n";
  for (std::size_t i = 0; i < curve.bin_centers.size(); ++i) {
    out += fmt_double(curve.bin_centers[i]) + ',';
    out += curve.ratio[i] ? fmt_double(*curve.ratio[i]) : "NA";
    out += ',' + std::to_string(curve.counts[i]);
    out += ',' + fmt_double(curve.zs_accuracy[i]) + ',' + fmt_double(curve.ft_accuracy[i]) + '\n';
  }
  return out;
}

std::string residual_stats_json(const ResidualStats& stats) {
  nlohmann::ordered_json j;
  j["n"] = stats.n;
  j["var_zs"] = stats.var_zs;
  j["var_ft"] = stats.var_ft;
  j["cov"] = stats.cov;
  j["g_opt_independent"] = opt_json(stats.g_opt_independent);
  j["g_opt_correlated"] = opt_json(stats.g_opt_correlated);
  j["pearson"] = opt_json(stats.pearson);
  return j.dump(2);
}

std::string binned_weight_csv(std::span<const WeightBin> bins) {
  std::string out = "center,count,g_opt\n";
  for (const auto& b : bins) {
    out += fmt_double(b.center) + ',' + std::to_string(b.count) + ',';
    out += b.g_opt ? fmt_double(*b.g_opt) : "NA";
    out += '\n';
  }
  return out;
}

}  // namespace vrf
