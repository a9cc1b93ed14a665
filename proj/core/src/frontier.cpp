// SPDX-License-Identifier: Apache-2.0
#include "vrf/frontier.hpp"

#include <sstream>

#include "vrf/error.hpp"

namespace vrf {
namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool needs_distances(std::span<const EnsembleConfig> configs) {
  for (const auto& c : configs) {
    if (kind_of(c.weight_fn) != WeightKind::kConstant) return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(FrontierMethod method) {
  switch (method) {
    case FrontierMethod::kOse: return "ose";
    case FrontierMethod::kLse: return "lse";
    case FrontierMethod::kVrf: return "vrf";
  }
  return "?";
}

FrontierMethod parse_frontier_method(std::string_view text) {
  if (text == "ose") return FrontierMethod::kOse;
  if (text == "lse") return FrontierMethod::kLse;
  if (text == "vrf" || text == "vrf-grid") return FrontierMethod::kVrf;
  throw ValidationError("unknown frontier method '" + std::string(text) + "'");
}

std::size_t select_hyperparams(std::span<const SweepPoint> points) {
  if (points.empty()) throw ValidationError("no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& p = points[i];
    const auto& q = points[best];
    if (p.accuracy > q.accuracy ||
        (p.accuracy == q.accuracy && tie_break_less(p.config.weight_fn, q.config.weight_fn))) {
      best = i;
    }
  }
  return best;
}

std::vector<SweepPoint> sweep(const SplitData& split, std::span<const double> distances,
                              std::span<const WeightFunction> grid, EnsembleSpace space,
                              const PipelineOptions& options) {
  if (grid.empty()) throw ValidationError("empty hyperparameter grid");
  std::vector<SweepPoint> out;
  out.reserve(grid.size());
  for (const auto& fn : grid) {
    EnsembleConfig cfg{space, fn, options.calibration.has_value()};
    const auto r = evaluate_with_distances(split, distances, cfg, options);
    out.push_back({cfg, r.accuracy, r.mean_weight});
  }
  return out;
}

std::vector<EnsembleConfig> frontier_grid(FrontierMethod method, const FrontierOptions& options) {
  std::vector<EnsembleConfig> configs;
  const bool calibrated = options.pipeline.calibration.has_value();
  switch (method) {
    case FrontierMethod::kOse:
    case FrontierMethod::kLse: {
      const auto space = method == FrontierMethod::kOse ? EnsembleSpace::kProb : EnsembleSpace::kLogit;
      for (const auto& fn : sweep_grid(WeightKind::kConstant, options.axes)) {
        configs.push_back({space, fn, calibrated});
      }
      break;
    }
    case FrontierMethod::kVrf:
      if (options.vrf_kind == WeightKind::kConstant) throw ValidationError("vrf frontier needs a distance-based weight");
      for (const auto& fn : sweep_grid(options.vrf_kind, options.axes)) {
        configs.push_back({EnsembleSpace::kProb, fn, calibrated});
      }
      break;
  }
  if (configs.empty()) throw ValidationError("empty frontier grid");
  return configs;
}

std::vector<FrontierPoint> evaluate_configs(const DatasetManifest& manifest, std::span<const EnsembleConfig> configs,
                                            const ZsfIndex* index, const PipelineOptions& options) {
  const auto id_tests = manifest.with_role(SplitRole::kIdTest);
  const auto ood_tests = manifest.with_role(SplitRole::kOodTest);
  if (id_tests.empty()) throw ValidationError("frontier needs an id-test split");
  if (ood_tests.empty()) throw ValidationError("frontier needs at least one ood-test split");
  const bool distances_needed = needs_distances(configs);
  if (distances_needed && index == nullptr) throw ValidationError("a ZSF index is required for distance-based weights");

  std::vector<FrontierPoint> points(configs.size());
  for (std::size_t c = 0; c < configs.size(); ++c) points[c].config = configs[c];

  auto run_split = [&](const SplitEntry& entry, bool is_id) {
    const SplitData split = manifest.load_split(entry.name);
    const auto d = distances_needed ? split_distances(split, *index, options) : std::vector<double>{};
    for (std::size_t c = 0; c < configs.size(); ++c) {
      const auto r = evaluate_with_distances(split, d, configs[c], options);
      if (is_id) {
        points[c].id_acc = r.accuracy;
      } else {
        points[c].ood_acc[entry.name] = r.accuracy;
      }
    }
  };
  run_split(*id_tests.front(), true);
  for (const auto* e : ood_tests) run_split(*e, false);

  for (auto& p : points) {
    double sum = 0.0;
    for (const auto& [name, acc] : p.ood_acc) sum += acc;
    p.ood_acc_mean = sum / static_cast<double>(p.ood_acc.size());
  }
  return points;
}

std::vector<FrontierPoint> frontier(const DatasetManifest& manifest, FrontierMethod method, const ZsfIndex* index,
                                    const FrontierOptions& options) {
  const auto configs = frontier_grid(method, options);
  return evaluate_configs(manifest, configs, index, options.pipeline);
}

std::string frontier_csv(std::span<const FrontierPoint> points) {
  std::string out = "config,id_acc,ood_acc_mean";
  if (!points.empty()) {
    for (const auto& [name, acc] : points.front().ood_acc) out += ',' + name;
  }
  out += '\n';
  for (const auto& p : points) {
    out += csv_quote(config_json(p.config)) + ',' + fmt_double(p.id_acc) + ',' + fmt_double(p.ood_acc_mean);
    for (const auto& [name, acc] : p.ood_acc) out += ',' + fmt_double(acc);
    out += '\n';
  }
  return out;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::string out = "config,accuracy,mean_weight\n";
  for (const auto& p : points) {
    out += csv_quote(config_json(p.config)) + ',' + fmt_double(p.accuracy) + ',' + fmt_double(p.mean_weight) + '\n';
  }
  return out;
}

}  // namespace vrf
