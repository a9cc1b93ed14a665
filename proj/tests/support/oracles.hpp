// SPDX-License-Identifier: Apache-2.0
// Reference implementations used as test oracles. They share no code with
// the library beyond the container types.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vrf/manifest.hpp"
#include "vrf/matrix.hpp"

namespace vrf::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::size_t between(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

MatrixF random_matrix(std::size_t rows, std::size_t cols, Gen& gen, double sd = 1.0);
MatrixF random_unit_rows(std::size_t rows, std::size_t cols, Gen& gen);
std::vector<std::uint32_t> random_labels(std::size_t n, std::uint32_t k, Gen& gen);

/// k-th smallest Euclidean distance by full sort in long double.
long double brute_kth_distance(const MatrixF& members, std::span<const float> query, std::size_t k);

/// Softmax in long double.
std::vector<long double> softmax_ld(std::span<const float> logits);

/// First index of the maximum.
std::uint32_t first_argmax(std::span<const float> row);

/// Rows where the fine-tuned argmax equals the label and the zero-shot
/// argmax does not, by a plain scan.
std::vector<std::uint64_t> zsf_scan(std::span<const std::uint32_t> labels, const MatrixF& zs, const MatrixF& ft);

/// Spearman correlation from O(n^2) counted mid-ranks.
double spearman_counted(const std::vector<double>& x, const std::vector<double>& y);

/// Argmin of f over {0, step, 2 step, ..., 1}.
double grid_argmin(const std::function<double(double)>& f, double step = 1e-4);

/// Population variance and covariance in long double.
long double variance_ld(const std::vector<double>& x);
long double covariance_ld(const std::vector<double>& x, const std::vector<double>& y);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<unsigned char> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

/// Split with random features and logits; `ft_bias` raises the logit of the
/// true class for the fine-tuned model so both outcomes occur.
SplitData random_split(std::size_t n, std::size_t dim, std::uint32_t k, Gen& gen, double ft_bias = 1.5,
                       double zs_bias = 0.5);

}  // namespace vrf::testing
