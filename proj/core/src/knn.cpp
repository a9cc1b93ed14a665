// SPDX-License-Identifier: Apache-2.0
#include "vrf/knn.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>
#include <string>
#include <thread>
#include <utility>

namespace vrf {
namespace {

#if defined(__AVX512F__)
constexpr std::size_t kLanes = 16;
constexpr std::size_t kTileQ = 6;
constexpr std::size_t kTileM = 4;
#else
constexpr std::size_t kLanes = 8;
constexpr std::size_t kTileQ = 4;
constexpr std::size_t kTileM = 2;
#endif

typedef float VecF __attribute__((vector_size(kLanes * sizeof(float))));

constexpr std::size_t kQueryBlock = 64;
constexpr std::size_t kMemberChunk = 256;  // multiple of kLanes * kTileM
constexpr std::size_t kPanel = 64;         // dimensions per L1-resident pass
constexpr double kUnitRoundoff = 0x1p-24;

inline VecF load(const float* p) {
  VecF v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store(float* p, VecF v) { std::memcpy(p, &v, sizeof(v)); }

// Partial dot products of QB queries against MB lane blocks over `len`
// dimensions, accumulated into out[i * ostride + j * kLanes + lane]. Each
// pair is a sequential sum in dimension order whatever the tile shape.
template <std::size_t QB, std::size_t MB>
void dot_tile(const float* q, std::size_t qstride, const float* m, std::size_t mstride, std::size_t len,
              float* out, std::size_t ostride, bool first) {
  VecF acc[QB][MB];
#pragma GCC unroll 8
  for (std::size_t i = 0; i < QB; ++i)
#pragma GCC unroll 8
    for (std::size_t j = 0; j < MB; ++j) acc[i][j] = first ? VecF{} : load(out + i * ostride + j * kLanes);
  for (std::size_t d = 0; d < len; ++d) {
    VecF mv[MB];
#pragma GCC unroll 8
    for (std::size_t j = 0; j < MB; ++j) mv[j] = load(m + j * mstride + d * kLanes);
#pragma GCC unroll 8
    for (std::size_t i = 0; i < QB; ++i) {
      const float qs = q[i * qstride + d];
#pragma GCC unroll 8
      for (std::size_t j = 0; j < MB; ++j) acc[i][j] += qs * mv[j];
    }
  }
#pragma GCC unroll 8
  for (std::size_t i = 0; i < QB; ++i)
#pragma GCC unroll 8
    for (std::size_t j = 0; j < MB; ++j) store(out + i * ostride + j * kLanes, acc[i][j]);
}

using TileFn = void (*)(const float*, std::size_t, const float*, std::size_t, std::size_t, float*, std::size_t,
                        bool);

template <std::size_t MB, std::size_t... Q>
constexpr std::array<TileFn, sizeof...(Q)> tile_row(std::index_sequence<Q...>) {
  return {&dot_tile<Q + 1, MB>...};
}

template <std::size_t... M>
constexpr std::array<std::array<TileFn, kTileQ>, sizeof...(M)> tile_table(std::index_sequence<M...>) {
  return {tile_row<M + 1>(std::make_index_sequence<kTileQ>{})...};
}

// kTiles[mb - 1][qb - 1] handles a qb x mb tile.
constexpr auto kTiles = tile_table(std::make_index_sequence<kTileM>{});

// Dot products of nq queries (row stride `dim`) against nb lane blocks of a
// chunk, written to out[i * ostride + member].
void dot_block(const float* q, std::size_t nq, const float* m, std::size_t nb, std::size_t dim, float* out,
               std::size_t ostride) {
  const std::size_t mstride = dim * kLanes;
  for (std::size_t j = 0; j < nb; j += kTileM) {
    const std::size_t mb = std::min(kTileM, nb - j);
    for (std::size_t p = 0; p < dim; p += kPanel) {
      const std::size_t len = std::min(kPanel, dim - p);
      for (std::size_t i = 0; i < nq; i += kTileQ) {
        const std::size_t qb = std::min(kTileQ, nq - i);
        kTiles[mb - 1][qb - 1](q + i * dim + p, dim, m + j * mstride + p * kLanes, mstride, len,
                               out + i * ostride + j * kLanes, ostride, p == 0);
      }
    }
  }
}

struct Candidate {
  float approx;
  std::uint32_t index;
};

// Running selection state for one query.
class Selection {
 public:
  void reset(std::size_t k, float band) {
    k_ = k;
    band_ = band;
    heap_ = {};
    kept_.clear();
    cut_ = std::numeric_limits<float>::infinity();
  }

  // Members whose approximate value exceeds the current cut can never be
  // among the k nearest.
  float cut() const noexcept { return cut_; }

  void offer(float approx, std::uint32_t index) {
    if (approx > cut_) return;
    kept_.push_back({approx, index});
    if (heap_.size() < k_) {
      heap_.push(approx);
    } else if (approx < heap_.top()) {
      heap_.pop();
      heap_.push(approx);
    }
    if (heap_.size() == k_) cut_ = heap_.top() + band_;
    if (kept_.size() > compact_at_) compact();
  }

  // Survivors: every member whose approximate value is within `band` of the
  // final k-th approximate value.
  const std::vector<Candidate>& finish() {
    compact();
    return kept_;
  }

 private:
  void compact() {
    if (heap_.size() == k_) {
      const float cut = heap_.top() + band_;
      std::erase_if(kept_, [cut](const Candidate& c) { return c.approx > cut; });
    }
    compact_at_ = std::max<std::size_t>(2 * kept_.size(), 4 * k_ + 1024);
  }

  std::size_t k_ = 1;
  float band_ = 0.0f;
  float cut_ = std::numeric_limits<float>::infinity();
  std::size_t compact_at_ = 1024;
  std::priority_queue<float> heap_;
  std::vector<Candidate> kept_;
};

void check_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) throw ValidationError("k-NN query is not finite");
  }
}

// Double-precision squared distance with eight interleaved partial sums
// combined pairwise; the order is fixed, so results are reproducible.
double exact_sq_distance(const float* a, const float* b, std::size_t dim) {
  double acc[8] = {};
  std::size_t d = 0;
  for (; d + 8 <= dim; d += 8) {
#pragma GCC unroll 8
    for (std::size_t l = 0; l < 8; ++l) {
      const double diff = static_cast<double>(a[d + l]) - static_cast<double>(b[d + l]);
      acc[l] += diff * diff;
    }
  }
  for (std::size_t l = 0; d < dim; ++d, ++l) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    acc[l] += diff * diff;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

}  // namespace

unsigned default_thread_count() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

KnnSearcher::KnnSearcher(const MatrixF& members) : count_(members.rows()), dim_(members.cols()) {
  if (count_ > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("k-NN member set too large");
  }
  const std::size_t blocks = (count_ + kLanes - 1) / kLanes;
  rows_.assign(members.values().begin(), members.values().end());
  lanes_.assign(blocks * kLanes * dim_, 0.0f);
  sq_norms_.assign(blocks * kLanes, 0.0f);
  for (std::size_t i = 0; i < count_; ++i) {
    const auto src = members.row(i);
    double ss = 0.0;
    for (float v : src) {
      if (!std::isfinite(v)) throw ValidationError("k-NN member row " + std::to_string(i) + " is not finite");
      ss += static_cast<double>(v) * v;
    }
    float* block = lanes_.data() + (i / kLanes) * kLanes * dim_ + i % kLanes;
    for (std::size_t d = 0; d < dim_; ++d) block[d * kLanes] = src[d];
    sq_norms_[i] = static_cast<float>(ss);
    max_norm_ = std::max(max_norm_, std::sqrt(ss));
  }
}

MatrixF KnnSearcher::members() const { return MatrixF(count_, dim_, rows_); }

void KnnSearcher::check_query(std::size_t k) const {
  if (count_ == 0) throw EmptyIndexError("k-NN query against an empty member set");
  if (k == 0 || k > count_) {
    throw ValidationError("k = " + std::to_string(k) + " outside [1, " + std::to_string(count_) + "]");
  }
}

double KnnSearcher::kth_distance(std::span<const float> query, std::size_t k) const {
  check_query(k);
  if (query.size() != dim_) throw DimensionError("query dimension does not match the member set");
  check_finite(query);
  double out = 0.0;
  search_block(query.data(), 1, k, &out);
  return out;
}

std::vector<double> KnnSearcher::kth_distances(const MatrixF& queries, std::size_t k,
                                               unsigned threads) const {
  check_query(k);
  if (queries.cols() != dim_) throw DimensionError("query dimension does not match the member set");
  const std::size_t n = queries.rows();
  check_finite(queries.values());
  std::vector<double> out(n);
  const std::size_t blocks = (n + kQueryBlock - 1) / kQueryBlock;
  if (threads == 0) threads = default_thread_count();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(blocks, 1)));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next.fetch_add(1); b < blocks; b = next.fetch_add(1)) {
      const std::size_t lo = b * kQueryBlock;
      const std::size_t nq = std::min(kQueryBlock, n - lo);
      search_block(queries.row(lo).data(), nq, k, out.data() + lo);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return out;
}

void KnnSearcher::search_block(const float* queries, std::size_t nq, std::size_t k, double* out) const {
  std::vector<Selection> sel(nq);
  std::vector<float> q_sq(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    const float* q = queries + i * dim_;
    double ss = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) ss += static_cast<double>(q[d]) * q[d];
    q_sq[i] = static_cast<float>(ss);
    // |approx - exact| <= eps: the sequential float dot is off by at most
    // D*u*|q||m| (with margin), the three-term combination by a few ulps of
    // (|q| + |m|)^2.
    const double qn = std::sqrt(ss);
    const double eps = 2.02 * static_cast<double>(std::max<std::size_t>(dim_, 1)) * kUnitRoundoff * qn * max_norm_ +
                       8.0 * kUnitRoundoff * (qn + max_norm_) * (qn + max_norm_);
    sel[i].reset(k, static_cast<float>(2.0 * eps) * 1.0001f + std::numeric_limits<float>::min());
  }

  std::vector<float> dots(nq * kMemberChunk);
  for (std::size_t m0 = 0; m0 < count_; m0 += kMemberChunk) {
    const std::size_t nm = std::min(kMemberChunk, count_ - m0);
    dot_block(queries, nq, lanes_.data() + m0 * dim_, (nm + kLanes - 1) / kLanes, dim_, dots.data(), kMemberChunk);
    for (std::size_t i = 0; i < nq; ++i) {
      float* row = dots.data() + i * kMemberChunk;
      const float* norms = sq_norms_.data() + m0;
      for (std::size_t j = 0; j < nm; ++j) row[j] = q_sq[i] + norms[j] - 2.0f * row[j];
      for (std::size_t j = 0; j < nm; ++j) {
        if (row[j] <= sel[i].cut()) sel[i].offer(row[j], static_cast<std::uint32_t>(m0 + j));
      }
    }
  }

  std::vector<double> exact;
  for (std::size_t i = 0; i < nq; ++i) {
    const auto& kept = sel[i].finish();
    exact.resize(kept.size());
    for (std::size_t c = 0; c < kept.size(); ++c) {
      exact[c] = exact_sq_distance(queries + i * dim_, rows_.data() + kept[c].index * dim_, dim_);
    }
    std::nth_element(exact.begin(), exact.begin() + static_cast<std::ptrdiff_t>(k - 1), exact.end());
    out[i] = std::sqrt(exact[k - 1]);
  }
}

}  // namespace vrf
