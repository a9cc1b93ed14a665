// SPDX-License-Identifier: Apache-2.0
#include "vrf_cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vrf/analysis.hpp"
#include "vrf/ensembling.hpp"
#include "vrf/error.hpp"
#include "vrf/frontier.hpp"
#include "vrf/knn.hpp"
#include "vrf/manifest.hpp"
#include "vrf/ood.hpp"
#include "vrf/prediction.hpp"
#include "vrf/synth.hpp"
#include "vrf/weighting.hpp"
#include "vrf/zsf_index.hpp"

namespace vrf::cli {
namespace {

using json = nlohmann::ordered_json;

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text, const char* name) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !std::isfinite(v)) {
      throw ValidationError(std::string("bad value '") + item + "' in --" + name);
    }
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError(std::string("--") + name + " is empty");
  return out;
}

double parse_lambda(const std::string& text) {
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || std::isnan(v)) throw ValidationError("bad --lambda value '" + text + "'");
  return v;
}

FeatureSource parse_features(const std::string& text) {
  if (text == "ft") return FeatureSource::kFineTuned;
  if (text == "zs") return FeatureSource::kZeroShot;
  throw ValidationError("--features must be ft or zs");
}

std::string pct(double acc) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * acc;
  return os.str();
}

/// Names of the splits to evaluate: explicit list, or every id-test and
/// ood-test split in manifest order.
std::vector<std::string> resolve_splits(const DatasetManifest& m, const std::string& list) {
  std::vector<std::string> names;
  if (!list.empty()) {
    for (const auto& n : split_list(list)) {
      if (!m.contains(n)) throw ValidationError("manifest has no split named '" + n + "'");
      names.push_back(n);
    }
    return names;
  }
  for (const auto& e : m.splits()) {
    if (e.role == SplitRole::kIdTest || e.role == SplitRole::kOodTest) names.push_back(e.name);
  }
  if (names.empty()) throw ValidationError("manifest has no test splits");
  return names;
}

struct Common {
  std::string manifest;
  std::string index;
  std::string features = "ft";
  unsigned threads = default_thread_count();
};

void add_threads(CLI::App* cmd, Common& c) {
  cmd->add_option("--threads", c.threads, "Worker threads for k-NN search")->check(CLI::PositiveNumber);
}

std::optional<ZsfIndex> maybe_index(const Common& c) {
  if (c.index.empty()) return std::nullopt;
  return ZsfIndex::load(c.index);
}

// ---------------------------------------------------------------- build-zsf

struct BuildZsfArgs {
  Common common;
  double p_percent = kDefaultPPercent;
  std::string out;
};

int cmd_build_zsf(const BuildZsfArgs& a, std::ostream& out) {
  const auto manifest = load_manifest(a.common.manifest);
  const auto train = manifest.load_split(manifest.id_train().name);
  const auto index = ZsfIndex::build(train, a.p_percent, parse_features(a.common.features));
  index.save(a.out);
  out << "zsf set size |V| = " << index.size() << " of " << train.size() << " id-train samples\n";
  out << "k = " << index.k() << " (p = " << a.p_percent << "%)\n";
  out << "index written to " << a.out << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
  Common common;
  std::string weight = "sigmoid:a=1.5,b=0.6";
  std::string space = "prob";
  std::string splits;
  bool calibrate = false;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto manifest = load_manifest(a.common.manifest);
  EnsembleConfig cfg{parse_ensemble_space(a.space), parse_weight_flag(a.weight), a.calibrate};
  const auto names = resolve_splits(manifest, a.splits);
  const auto index = maybe_index(a.common);
  if (!index && kind_of(cfg.weight_fn) != WeightKind::kConstant) {
    throw ValidationError("--index is required for distance-based weights");
  }
  PipelineOptions opt;
  opt.features = parse_features(a.common.features);
  opt.threads = a.common.threads;
  if (cfg.use_calibration) opt.calibration = fit_calibration(manifest.load_split(manifest.id_val().name));

  static const ZsfIndex kNoIndex;
  json results = json::array();
  out << "config " << to_flag(cfg.weight_fn) << " space=" << to_string(cfg.space) << '\n';
  out << std::left << std::setw(16) << "split" << std::setw(10) << "role" << std::setw(8) << "n" << std::setw(10)
      << "acc(%)" << "mean_w\n";
  double ood_sum = 0.0;
  std::size_t ood_n = 0;
  for (const auto& name : names) {
    const auto r = vrf_pipeline(manifest, name, index ? *index : kNoIndex, cfg, opt);
    const auto role = manifest.entry(name).role;
    results.push_back(json::parse(result_json(r)));
    out << std::setw(16) << name << std::setw(10) << to_string(role) << std::setw(8) << r.n << std::setw(10)
        << pct(r.accuracy) << std::setprecision(4) << r.mean_weight << '\n';
    if (role == SplitRole::kOodTest) {
      ood_sum += r.accuracy;
      ++ood_n;
    }
  }
  if (ood_n > 0) out << "avg shifts " << pct(ood_sum / static_cast<double>(ood_n)) << '\n';
  if (!a.out.empty()) {
    json doc;
    doc["config"] = json::parse(config_json(cfg));
    doc["results"] = results;
    write_text(a.out, doc.dump(2) + '\n');
  }
  return kExitOk;
}

// -------------------------------------------------------------------- sweep

struct GridArgs {
  std::string a, b, alpha;
  CLI::Option* a_opt = nullptr;
  CLI::Option* b_opt = nullptr;
  CLI::Option* alpha_opt = nullptr;

  SweepAxes axes() const {
    SweepAxes axes = SweepAxes::defaults();
    if (a_opt->count() > 0) axes.a = parse_grid(a, "grid-a");
    if (b_opt->count() > 0) axes.b = parse_grid(b, "grid-b");
    if (alpha_opt->count() > 0) axes.alpha = parse_grid(alpha, "grid-alpha");
    return axes;
  }
};

void add_grid(CLI::App* cmd, GridArgs& g) {
  g.a_opt = cmd->add_option("--grid-a", g.a, "Comma-separated values of a (default 0.1..1.9)");
  g.b_opt = cmd->add_option("--grid-b", g.b, "Comma-separated values of b (default 0.1..2.0)");
  g.alpha_opt = cmd->add_option("--grid-alpha", g.alpha, "Comma-separated values of alpha (default 0.0..1.0)");
}

struct SweepArgs {
  Common common;
  std::string kind = "sigmoid";
  std::string select_on = "id-val";
  std::string space = "prob";
  bool calibrate = false;
  GridArgs grid;
  std::string out;
  std::string selected_out;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const auto manifest = load_manifest(a.common.manifest);
  const auto kind = parse_weight_kind(a.kind);
  const auto grid = sweep_grid(kind, a.grid.axes());
  if (grid.empty()) throw ValidationError("empty hyperparameter grid");

  std::string split_name = a.select_on;
  if (a.select_on == "id-val") split_name = manifest.id_val().name;
  if (!manifest.contains(split_name)) throw ValidationError("manifest has no split named '" + split_name + "'");
  const auto split = manifest.load_split(split_name);

  PipelineOptions opt;
  opt.features = parse_features(a.common.features);
  opt.threads = a.common.threads;
  if (a.calibrate) opt.calibration = fit_calibration(manifest.load_split(manifest.id_val().name));

  std::vector<double> distances;
  if (kind != WeightKind::kConstant) {
    const auto index = maybe_index(a.common);
    if (!index) throw ValidationError("--index is required for distance-based weights");
    distances = split_distances(split, *index, opt);
  }
  const auto points = sweep(split, distances, grid, parse_ensemble_space(a.space), opt);
  const auto best = select_hyperparams(points);
  write_text(a.out, sweep_csv(points));

  const auto& sel = points[best];
  json doc;
  doc["selected_on"] = split_name;
  doc["config"] = json::parse(config_json(sel.config));
  doc["flag"] = to_flag(sel.config.weight_fn);
  doc["accuracy"] = sel.accuracy;
  doc["grid_size"] = points.size();
  const std::string selected_path = a.selected_out.empty() ? a.out + ".selected.json" : a.selected_out;
  write_text(selected_path, doc.dump(2) + '\n');

  out << "evaluated " << points.size() << " configurations on " << split_name << '\n';
  out << "selected " << to_flag(sel.config.weight_fn) << " accuracy " << pct(sel.accuracy) << "%\n";
  return kExitOk;
}

// ----------------------------------------------------------------- frontier

struct FrontierArgs {
  Common common;
  std::string method = "ose";
  std::string kind = "sigmoid";
  bool calibrate = false;
  GridArgs grid;
  std::string out;
};

int cmd_frontier(const FrontierArgs& a, std::ostream& out) {
  const auto manifest = load_manifest(a.common.manifest);
  FrontierOptions opt;
  opt.axes = a.grid.axes();
  opt.vrf_kind = parse_weight_kind(a.kind);
  opt.pipeline.features = parse_features(a.common.features);
  opt.pipeline.threads = a.common.threads;
  if (a.calibrate) opt.pipeline.calibration = fit_calibration(manifest.load_split(manifest.id_val().name));
  const auto method = parse_frontier_method(a.method);
  const auto index = maybe_index(a.common);
  const auto points = frontier(manifest, method, index ? &*index : nullptr, opt);
  write_text(a.out, frontier_csv(points));
  out << "frontier " << to_string(method) << ": " << points.size() << " points written to " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- baselines

struct BaselinesArgs {
  Common common;
  std::string detectors = "msp,energy,md,rmd,knn";
  double tpr = 0.95;
  double p_percent = kDefaultPPercent;
  std::string lambda;
  std::string out;
};

int cmd_baselines(const BaselinesArgs& a, std::ostream& out) {
  const auto manifest = load_manifest(a.common.manifest);
  std::vector<DetectorKind> kinds;
  for (const auto& d : split_list(a.detectors)) kinds.push_back(parse_detector_kind(d));
  if (kinds.empty()) throw ValidationError("--detectors is empty");
  BaselineOptions opt;
  opt.tpr = a.tpr;
  opt.p_percent = a.p_percent;
  opt.features = parse_features(a.common.features);
  opt.threads = a.common.threads;
  if (!a.lambda.empty()) opt.lambda_override = parse_lambda(a.lambda);

  json reports = json::array();
  bool header = false;
  for (auto kind : kinds) {
    const auto r = run_baseline(manifest, kind, opt);
    reports.push_back(json::parse(baseline_json(r)));
    if (!header) {
      out << std::left << std::setw(10) << "detector" << std::setw(10) << r.id_split;
      for (const auto& [name, acc] : r.ood_acc) out << std::setw(10) << name;
      out << "avg\n";
      header = true;
    }
    out << std::setw(10) << to_string(kind) << std::setw(10) << pct(r.id_acc);
    for (const auto& [name, acc] : r.ood_acc) out << std::setw(10) << pct(acc);
    out << pct(r.ood_acc_mean) << '\n';
  }
  if (!a.out.empty()) write_text(a.out, reports.dump(2) + '\n');
  return kExitOk;
}

// ------------------------------------------------------------------ analyze

struct AnalyzeArgs {
  Common common;
  bool ratio = false;
  bool residual = false;
  bool binned = false;
  std::string splits;
  bool raw = false;
  std::string centers;
  double halfwidth = kDefaultBinHalfwidth;
  std::string out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (static_cast<int>(a.ratio) + static_cast<int>(a.residual) + static_cast<int>(a.binned) != 1) {
    throw ValidationError("choose exactly one of --ratio-curve, --residual-stats, --binned-gopt");
  }
  const auto manifest = load_manifest(a.common.manifest);
  const auto names = resolve_splits(manifest, a.splits);
  const auto centers = a.centers.empty() ? default_bin_centers() : parse_grid(a.centers, "centers");
  std::optional<ZsfIndex> index;
  if (a.ratio || a.binned) {
    index = maybe_index(a.common);
    if (!index) throw ValidationError("--index is required for distance-binned analyses");
  }
  std::optional<Calibration> cal;
  if (!a.raw && (a.residual || a.binned)) cal = fit_calibration(manifest.load_split(manifest.id_val().name));

  PipelineOptions opt;
  opt.features = parse_features(a.common.features);
  opt.threads = a.common.threads;

  std::vector<double> d, eta_zs, eta_ft;
  std::vector<std::uint32_t> zs_pred, ft_pred, labels;
  for (const auto& name : names) {
    const auto split = manifest.load_split(name);
    if (index) {
      const auto sd = split_distances(split, *index, opt);
      d.insert(d.end(), sd.begin(), sd.end());
    }
    const auto zp = predict(split.zs.logits);
    const auto fp = predict(split.ft.logits);
    zs_pred.insert(zs_pred.end(), zp.begin(), zp.end());
    ft_pred.insert(ft_pred.end(), fp.begin(), fp.end());
    labels.insert(labels.end(), split.labels.begin(), split.labels.end());
    if (a.residual || a.binned) {
      const auto zl = cal ? apply_temperature(split.zs.logits, cal->zs) : split.zs.logits;
      const auto fl = cal ? apply_temperature(split.ft.logits, cal->ft) : split.ft.logits;
      const auto ez = residuals(softmax(zl), split.labels);
      const auto ef = residuals(softmax(fl), split.labels);
      eta_zs.insert(eta_zs.end(), ez.begin(), ez.end());
      eta_ft.insert(eta_ft.end(), ef.begin(), ef.end());
    }
  }

  if (a.ratio) {
    const auto curve = ratio_curve(d, zs_pred, ft_pred, labels, centers, a.halfwidth);
    write_text(a.out, ratio_curve_csv(curve));
    const auto trend = ratio_trend(curve);
    out << "ratio curve over " << labels.size() << " samples; spearman(center, ratio) = ";
    if (trend) {
      out << *trend << '\n';
    } else {
      out << "NA\n";
    }
  } else if (a.residual) {
    const auto stats = residual_stats(eta_zs, eta_ft);
    write_text(a.out, residual_stats_json(stats) + '\n');
    out << "V_zs = " << stats.var_zs << ", V_ft = " << stats.var_ft << ", C = " << stats.cov << '\n';
  } else {
    const auto bins = binned_optimal_weight(d, eta_zs, eta_ft, centers, a.halfwidth);
    write_text(a.out, binned_weight_csv(bins));
    out << "binned optimal weights for " << bins.size() << " bins written to " << a.out << '\n';
  }
  return kExitOk;
}

// -------------------------------------------------------------------- synth

struct SynthArgs {
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec = a.spec.empty() ? SynthSpec{} : synth_spec_from_json(read_text(a.spec));
  if (a.seed) spec.seed = *a.seed;
  const auto manifest = generate_dataset(spec, a.out);
  out << "synthetic dataset written to " << manifest.string() << '\n';
  return kExitOk;
}

// -------------------------------------------------------------------- bench

struct BenchArgs {
  std::string index;
  std::size_t members = 100000;
  std::size_t queries = 1024;
  std::size_t dims = 512;
  std::string ks = "100";
  std::size_t repeats = 3;
  std::size_t single = 64;
  std::uint64_t seed = 7;
  unsigned threads = 1;
  std::string out;
};

MatrixF random_unit_rows(std::size_t n, std::size_t d, SynthRng& rng) {
  MatrixF m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = m.row(i);
    double s = 0.0;
    for (auto& v : row) {
      v = static_cast<float>(rng.normal());
      s += static_cast<double>(v) * v;
    }
    const double inv = 1.0 / std::sqrt(s);
    for (auto& v : row) v = static_cast<float>(v * inv);
  }
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  SynthRng rng(a.seed);
  MatrixF members;
  if (!a.index.empty()) {
    members = ZsfIndex::load(a.index).members();
  } else {
    members = random_unit_rows(a.members, a.dims, rng);
  }
  if (members.empty()) throw EmptyIndexError("bench needs a non-empty member set");
  const KnnSearcher searcher(members);
  const MatrixF queries = random_unit_rows(a.queries, searcher.dim(), rng);
  std::vector<std::size_t> ks;
  for (const auto& k : split_list(a.ks)) ks.push_back(static_cast<std::size_t>(std::stoull(k)));
  if (ks.empty()) throw ValidationError("--k is empty");

  out << "members " << searcher.size() << ", dim " << searcher.dim() << ", queries " << queries.rows()
      << ", threads " << a.threads << '\n';
  json report = json::array();
  constexpr std::size_t kBlock = 64;
  for (std::size_t k : ks) {
    std::vector<double> batch_medians;
    std::vector<double> per_query;
    for (std::size_t r = 0; r < a.repeats; ++r) {
      std::vector<double> block_ms;
      for (std::size_t lo = 0; lo < queries.rows(); lo += kBlock) {
        const std::size_t n = std::min(kBlock, queries.rows() - lo);
        MatrixF block(n, queries.cols());
        for (std::size_t i = 0; i < n; ++i) std::copy_n(queries.row(lo + i).data(), queries.cols(), block.row(i).data());
        const auto t0 = clock::now();
        const auto d = searcher.kth_distances(block, k, a.threads);
        const auto t1 = clock::now();
        block_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(n));
      }
      batch_medians.push_back(median(block_ms));
    }
    for (std::size_t i = 0; i < std::min(a.single, queries.rows()); ++i) {
      const auto t0 = clock::now();
      const double d = searcher.kth_distance(queries.row(i), k);
      const auto t1 = clock::now();
      (void)d;
      per_query.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    const double batched = median(batch_medians);
    const double spread = *std::max_element(batch_medians.begin(), batch_medians.end()) -
                          *std::min_element(batch_medians.begin(), batch_medians.end());
    const double single_med = per_query.empty() ? 0.0 : median(per_query);
    const double single_p90 = per_query.empty() ? 0.0 : quantile(per_query, 0.9);
    out << std::fixed << std::setprecision(4) << "k=" << k << "  batched median " << batched
        << " ms/query (spread over " << a.repeats << " runs " << spread << ")  single-query median " << single_med
        << " ms, p90 " << single_p90 << " ms\n";
    report.push_back({{"k", k},
                      {"batched_median_ms", batched},
                      {"batched_repeat_spread_ms", spread},
                      {"single_median_ms", single_med},
                      {"single_p90_ms", single_p90}});
  }
  if (!a.out.empty()) write_text(a.out, report.dump(2) + '\n');
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sample-wise zero-shot / fine-tuned ensembling toolkit", "vrf"};
  app.require_subcommand(1);

  BuildZsfArgs build;
  auto* c_build = app.add_subcommand("build-zsf", "Build the zero-shot failure index from id-train");
  c_build->add_option("--manifest", build.common.manifest)->required()->check(CLI::ExistingFile);
  c_build->add_option("--p-percent", build.p_percent, "Neighbour count as a percent of |V|")
      ->check(CLI::PositiveNumber);
  c_build->add_option("--out", build.out, "Index file; the sidecar goes to <out>.json")->required();
  c_build->add_option("--features", build.common.features, "Encoder features to index: ft or zs");

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Evaluate one ensembling configuration per split");
  c_eval->add_option("--manifest", eval.common.manifest)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--index", eval.common.index)->check(CLI::ExistingFile);
  c_eval->add_option("--weight", eval.weight, "kind:key=val,... e.g. sigmoid:a=1.5,b=0.6");
  c_eval->add_option("--space", eval.space, "prob or logit");
  c_eval->add_option("--splits", eval.splits, "Comma-separated split names (default: all test splits)");
  c_eval->add_flag("--calibrate", eval.calibrate, "Temperature-scale both models on id-val first");
  c_eval->add_option("--features", eval.common.features, "Encoder features for distances: ft or zs");
  c_eval->add_option("--out", eval.out, "Result JSON");
  add_threads(c_eval, eval.common);

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Grid-search weight parameters and select on a validation split");
  c_sweep->add_option("--manifest", sw.common.manifest)->required()->check(CLI::ExistingFile);
  c_sweep->add_option("--index", sw.common.index)->check(CLI::ExistingFile);
  c_sweep->add_option("--kind", sw.kind, "constant, sigmoid, linear or binary");
  c_sweep->add_option("--select-on", sw.select_on, "Split used for selection (default: the id-val split)");
  c_sweep->add_option("--space", sw.space, "prob or logit");
  c_sweep->add_flag("--calibrate", sw.calibrate, "Temperature-scale both models on id-val first");
  c_sweep->add_option("--features", sw.common.features, "Encoder features for distances: ft or zs");
  c_sweep->add_option("--out", sw.out, "Grid CSV")->required();
  c_sweep->add_option("--selected-out", sw.selected_out, "Selected config JSON (default <out>.selected.json)");
  add_grid(c_sweep, sw.grid);
  add_threads(c_sweep, sw.common);

  FrontierArgs fr;
  auto* c_front = app.add_subcommand("frontier", "ID/OOD accuracy for every grid point of a method");
  c_front->add_option("--manifest", fr.common.manifest)->required()->check(CLI::ExistingFile);
  c_front->add_option("--index", fr.common.index)->check(CLI::ExistingFile);
  c_front->add_option("--method", fr.method, "ose, lse or vrf");
  c_front->add_option("--kind", fr.kind, "Weight family for the vrf method");
  c_front->add_flag("--calibrate", fr.calibrate, "Temperature-scale both models on id-val first");
  c_front->add_option("--features", fr.common.features, "Encoder features for distances: ft or zs");
  c_front->add_option("--out", fr.out, "Frontier CSV")->required();
  add_grid(c_front, fr.grid);
  add_threads(c_front, fr.common);

  BaselinesArgs bl;
  auto* c_base = app.add_subcommand("baselines", "Selective prediction with OOD detectors");
  c_base->add_option("--manifest", bl.common.manifest)->required()->check(CLI::ExistingFile);
  c_base->add_option("--detectors", bl.detectors, "Comma-separated: msp,energy,md,rmd,knn");
  c_base->add_option("--tpr", bl.tpr, "Target true positive rate on id-val")->check(CLI::Range(0.0, 1.0));
  c_base->add_option("--p-percent", bl.p_percent, "Neighbour percent for the knn detector")
      ->check(CLI::PositiveNumber);
  c_base->add_option("--lambda", bl.lambda, "Fixed threshold (number, inf or -inf) instead of calibration");
  c_base->add_option("--features", bl.common.features, "Encoder features for md/rmd/knn: ft or zs");
  c_base->add_option("--out", bl.out, "Report JSON");
  add_threads(c_base, bl.common);

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "Ratio curves, residual statistics and binned optimal weights");
  c_an->add_option("--manifest", an.common.manifest)->required()->check(CLI::ExistingFile);
  c_an->add_option("--index", an.common.index)->check(CLI::ExistingFile);
  c_an->add_flag("--ratio-curve", an.ratio, "Acc_ft / Acc_zs per distance bin (CSV)");
  c_an->add_flag("--residual-stats", an.residual, "Residual variances, covariance and optimal weights (JSON)");
  c_an->add_flag("--binned-gopt", an.binned, "Optimal weight per distance bin (CSV)");
  c_an->add_option("--splits", an.splits, "Comma-separated split names (default: all test splits)");
  c_an->add_flag("--raw", an.raw, "Skip temperature scaling before computing residuals");
  c_an->add_option("--centers", an.centers, "Comma-separated bin centers (default 0.2..1.8)");
  c_an->add_option("--halfwidth", an.halfwidth, "Bin halfwidth")->check(CLI::PositiveNumber);
  c_an->add_option("--features", an.common.features, "Encoder features for distances: ft or zs");
  c_an->add_option("--out", an.out, "Output file")->required();
  add_threads(c_an, an.common);

  SynthArgs sy;
  auto* c_syn = app.add_subcommand("synth", "Generate a synthetic dataset with planted structure");
  c_syn->add_option("--spec", sy.spec, "Generator parameters as JSON (default parameters otherwise)")
      ->check(CLI::ExistingFile);
  c_syn->add_option("--seed", sy.seed, "Override the seed");
  c_syn->add_option("--out", sy.out, "Output directory")->required();

  BenchArgs be;
  auto* c_bench = app.add_subcommand("bench", "k-NN query latency");
  c_bench->add_option("--index", be.index, "Index file (random unit vectors otherwise)")->check(CLI::ExistingFile);
  c_bench->add_option("--members", be.members, "Random member count when no index is given")
      ->check(CLI::PositiveNumber);
  c_bench->add_option("--queries", be.queries, "Query count")->check(CLI::PositiveNumber);
  c_bench->add_option("--dims", be.dims, "Dimension of random members")->check(CLI::PositiveNumber);
  c_bench->add_option("--k", be.ks, "Comma-separated neighbour counts");
  c_bench->add_option("--repeats", be.repeats, "Batched timing repetitions")->check(CLI::PositiveNumber);
  c_bench->add_option("--single", be.single, "Queries timed one at a time");
  c_bench->add_option("--seed", be.seed, "Seed for random members and queries");
  c_bench->add_option("--threads", be.threads, "Worker threads")->check(CLI::PositiveNumber);
  c_bench->add_option("--out", be.out, "Report JSON");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_build) return cmd_build_zsf(build, out);
    if (*c_eval) return cmd_evaluate(eval, out);
    if (*c_sweep) return cmd_sweep(sw, out);
    if (*c_front) return cmd_frontier(fr, out);
    if (*c_base) return cmd_baselines(bl, out);
    if (*c_an) return cmd_analyze(an, out);
    if (*c_syn) return cmd_synth(sy, out);
    if (*c_bench) return cmd_bench(be, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const EmptyIndexError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace vrf::cli
