// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vrf/knn.hpp"
#include "vrf/manifest.hpp"
#include "vrf/matrix.hpp"

namespace vrf {

/// Default neighbourhood size as a percentage of the member count.
inline constexpr double kDefaultPPercent = 0.1;

/// k = max(1, floor(p_percent / 100 * m)); 0 for an empty set.
std::size_t k_from_percent(double p_percent, std::size_t m);

/// Zero-shot failure set: fine-tuned-encoder features of training rows the
/// fine-tuned model classifies correctly and the zero-shot model does not,
/// queryable for the distance to the k-th nearest member.
///
/// Members are unit-norm and immutable after construction. An index with no
/// members is valid but every query raises EmptyIndexError.
class ZsfIndex {
 public:
  ZsfIndex() = default;

  /// Wraps an explicit member set. Rows are L2-normalized; `source_indices`
  /// must have one entry per row.
  ZsfIndex(const MatrixF& members, std::vector<std::uint64_t> source_indices, double p_percent);

  static ZsfIndex build(std::span<const std::uint32_t> labels, const MatrixF& zs_logits,
                        const MatrixF& ft_logits, const MatrixF& features, double p_percent);
  static ZsfIndex build(const SplitData& train, double p_percent,
                        FeatureSource source = FeatureSource::kFineTuned);

  std::size_t size() const noexcept { return searcher_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return searcher_.empty(); }
  std::size_t k() const noexcept { return k_; }
  double p_percent() const noexcept { return p_percent_; }
  const std::vector<std::uint64_t>& source_indices() const noexcept { return source_indices_; }
  MatrixF members() const { return searcher_.members(); }
  const KnnSearcher& searcher() const noexcept { return searcher_; }

  /// k-NN distance of one query (normalized before the search), in [0, 2].
  double distance(std::span<const float> query) const { return distance(query, k_); }
  double distance(std::span<const float> query, std::size_t k) const;

  std::vector<double> distances(const MatrixF& queries, unsigned threads = 1) const {
    return distances(queries, k_, threads);
  }
  std::vector<double> distances(const MatrixF& queries, std::size_t k, unsigned threads = 1) const;

  /// Writes the member tensor to `path` and {"k","p_percent","source_indices"}
  /// to `path` + ".json".
  void save(const std::filesystem::path& path) const;
  static ZsfIndex load(const std::filesystem::path& path);

 private:
  struct Raw {};
  ZsfIndex(Raw, const MatrixF& members, std::vector<std::uint64_t> source_indices, double p_percent);

  KnnSearcher searcher_;
  std::vector<std::uint64_t> source_indices_;
  std::size_t dim_ = 0;
  std::size_t k_ = 0;
  double p_percent_ = kDefaultPPercent;
};

std::filesystem::path index_sidecar_path(const std::filesystem::path& index_path);

}  // namespace vrf
