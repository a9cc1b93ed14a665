// SPDX-License-Identifier: Apache-2.0
#include "vrf/zsf_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vrf/prediction.hpp"
#include "vrf/tensor_io.hpp"

namespace vrf {
namespace {

constexpr double kNormTolerance = 1e-4;

void check_p(double p_percent) {
  if (!(p_percent > 0.0 && p_percent <= 100.0)) {
    throw ValidationError("p_percent must lie in (0, 100]");
  }
}

double clamp_distance(double d) { return std::clamp(d, 0.0, 2.0); }

}  // namespace

std::size_t k_from_percent(double p_percent, std::size_t m) {
  check_p(p_percent);
  if (m == 0) return 0;
  const double raw = std::floor(p_percent * static_cast<double>(m) / 100.0 + 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(raw), 1, m);
}

std::filesystem::path index_sidecar_path(const std::filesystem::path& index_path) {
  auto p = index_path;
  p += ".json";
  return p;
}

ZsfIndex::ZsfIndex(Raw, const MatrixF& members, std::vector<std::uint64_t> source_indices, double p_percent)
    : searcher_(members),
      source_indices_(std::move(source_indices)),
      dim_(members.cols()),
      k_(k_from_percent(p_percent, members.rows())),
      p_percent_(p_percent) {
  if (source_indices_.size() != members.rows()) {
    throw DimensionError("source_indices length does not match the member count");
  }
}

ZsfIndex::ZsfIndex(const MatrixF& members, std::vector<std::uint64_t> source_indices, double p_percent)
    : ZsfIndex(Raw{}, members.rows() == 0 ? members : normalize_features(members), std::move(source_indices),
               p_percent) {}

ZsfIndex ZsfIndex::build(std::span<const std::uint32_t> labels, const MatrixF& zs_logits,
                         const MatrixF& ft_logits, const MatrixF& features, double p_percent) {
  check_p(p_percent);
  const std::size_t n = labels.size();
  if (zs_logits.rows() != n || ft_logits.rows() != n || features.rows() != n) {
    throw DimensionError("build_zsf: labels, logits and features must share N");
  }
  if (zs_logits.cols() != ft_logits.cols()) throw DimensionError("build_zsf: zs and ft logits disagree on K");
  if (features.cols() < 1) throw DimensionError("build_zsf: empty feature dimension");

  const auto pred_zs = predict(zs_logits);
  const auto pred_ft = predict(ft_logits);
  std::vector<std::uint64_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred_ft[i] == labels[i] && pred_zs[i] != labels[i]) rows.push_back(i);
  }
  MatrixF picked(rows.size(), features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = features.row(rows[r]);
    std::copy(src.begin(), src.end(), picked.row(r).begin());
  }
  return ZsfIndex(picked, std::move(rows), p_percent);
}

ZsfIndex ZsfIndex::build(const SplitData& train, double p_percent, FeatureSource source) {
  return build(train.labels, train.zs.logits, train.ft.logits, features_of(train, source), p_percent);
}

double ZsfIndex::distance(std::span<const float> query, std::size_t k) const {
  if (empty()) throw EmptyIndexError("zero-shot failure set is empty");
  if (query.size() != dim_) throw DimensionError("query dimension does not match the index");
  const MatrixF q = normalize_features(MatrixF(1, query.size(), std::vector<float>(query.begin(), query.end())));
  return clamp_distance(searcher_.kth_distance(q.row(0), k));
}

std::vector<double> ZsfIndex::distances(const MatrixF& queries, std::size_t k, unsigned threads) const {
  if (empty()) throw EmptyIndexError("zero-shot failure set is empty");
  if (queries.cols() != dim_) throw DimensionError("query dimension does not match the index");
  auto out = searcher_.kth_distances(normalize_features(queries), k, threads);
  for (auto& d : out) d = clamp_distance(d);
  return out;
}

void ZsfIndex::save(const std::filesystem::path& path) const {
  write_matrix(path, members());
  nlohmann::json side;
  side["k"] = k_;
  side["p_percent"] = p_percent_;
  side["source_indices"] = source_indices_;
  const auto side_path = index_sidecar_path(path);
  std::ofstream out(side_path);
  if (!out) throw IoError("cannot open '" + side_path.string() + "' for writing");
  out << side.dump() << '\n';
  if (!out) throw IoError("write failed for '" + side_path.string() + "'");
}

ZsfIndex ZsfIndex::load(const std::filesystem::path& path) {
  MatrixF members = read_tensor(path).to_matrix();
  const auto side_path = index_sidecar_path(path);
  std::ifstream in(side_path);
  if (!in) throw IoError("cannot open index sidecar '" + side_path.string() + "'");
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("index sidecar is not valid JSON: " + std::string(e.what()));
  }
  if (!side.is_object() || !side.contains("k") || !side.at("k").is_number_unsigned() ||
      !side.contains("p_percent") || !side.at("p_percent").is_number() || !side.contains("source_indices") ||
      !side.at("source_indices").is_array()) {
    throw SchemaError("index sidecar must hold integer 'k', number 'p_percent' and array 'source_indices'");
  }
  std::vector<std::uint64_t> sources;
  for (const auto& v : side.at("source_indices")) {
    if (!v.is_number_unsigned()) throw SchemaError("index sidecar: source_indices must be non-negative integers");
    sources.push_back(v.get<std::uint64_t>());
  }
  if (sources.size() != members.rows()) {
    throw FormatError("index sidecar lists " + std::to_string(sources.size()) + " source indices for " +
                      std::to_string(members.rows()) + " members");
  }
  for (std::size_t i = 0; i < members.rows(); ++i) {
    double ss = 0.0;
    for (float v : members.row(i)) ss += static_cast<double>(v) * v;
    if (!(std::abs(std::sqrt(ss) - 1.0) <= kNormTolerance)) {
      throw FormatError("index member " + std::to_string(i) + " is not unit norm");
    }
  }
  const double p = side.at("p_percent").get<double>();
  ZsfIndex index(Raw{}, members, std::move(sources), p);
  if (side.at("k").get<std::size_t>() != index.k_) {
    throw FormatError("index sidecar k does not follow the p_percent rule for this member count");
  }
  return index;
}

}  // namespace vrf
