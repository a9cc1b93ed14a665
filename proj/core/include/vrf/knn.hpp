// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vrf/matrix.hpp"

namespace vrf {

/// Exact k-th nearest neighbour distance over an immutable member set.
///
/// Candidates are ranked with a blocked float32 kernel on
/// |q|^2 + |m|^2 - 2<q,m>. Every member whose approximate squared distance
/// lies within twice the kernel's rounding bound of the running k-th value is
/// kept, and the survivors are re-scored as sum((q_i - m_i)^2) in double. The
/// returned value is therefore the exact k-th order statistic of the double
/// distances, independent of blocking, member order and thread count.
class KnnSearcher {
 public:
  KnnSearcher() = default;
  explicit KnnSearcher(const MatrixF& members);

  std::size_t size() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return count_ == 0; }

  std::span<const float> member(std::size_t i) const noexcept {
    return {rows_.data() + i * dim_, dim_};
  }
  MatrixF members() const;

  /// Distance from `query` to its k-th nearest member (1-based k).
  double kth_distance(std::span<const float> query, std::size_t k) const;

  /// Row-wise `kth_distance`; `threads` = 0 means hardware concurrency.
  std::vector<double> kth_distances(const MatrixF& queries, std::size_t k,
                                    unsigned threads = 1) const;

 private:
  void check_query(std::size_t k) const;
  void search_block(const float* queries, std::size_t nq, std::size_t k, double* out) const;

  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> rows_;      // row-major copy used for exact re-scoring
  std::vector<float> lanes_;     // blocks of SIMD-width members, dimension-major within a block
  std::vector<float> sq_norms_;  // padded to whole blocks
  double max_norm_ = 0.0;
};

/// Worker count used when a caller passes 0.
unsigned default_thread_count();

}  // namespace vrf
