// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace vrf::testing {

MatrixF random_matrix(std::size_t rows, std::size_t cols, Gen& gen, double sd) {
  MatrixF m(rows, cols);
  for (auto& v : m.values()) v = static_cast<float>(gen.normal(0.0, sd));
  return m;
}

MatrixF random_unit_rows(std::size_t rows, std::size_t cols, Gen& gen) {
  MatrixF m = random_matrix(rows, cols, gen);
  for (std::size_t i = 0; i < rows; ++i) {
    long double s = 0.0L;
    for (float v : m.row(i)) s += static_cast<long double>(v) * v;
    const long double n = std::sqrt(s);
    for (auto& v : m.row(i)) v = static_cast<float>(v / n);
  }
  return m;
}

std::vector<std::uint32_t> random_labels(std::size_t n, std::uint32_t k, Gen& gen) {
  std::vector<std::uint32_t> out(n);
  for (auto& y : out) y = static_cast<std::uint32_t>(gen.index(k));
  return out;
}

long double brute_kth_distance(const MatrixF& members, std::span<const float> query, std::size_t k) {
  std::vector<long double> d;
  for (std::size_t i = 0; i < members.rows(); ++i) {
    long double s = 0.0L;
    for (std::size_t j = 0; j < query.size(); ++j) {
      const long double diff = static_cast<long double>(members(i, j)) - query[j];
      s += diff * diff;
    }
    d.push_back(std::sqrt(s));
  }
  std::sort(d.begin(), d.end());
  return d.at(k - 1);
}

std::vector<long double> softmax_ld(std::span<const float> logits) {
  long double m = logits[0];
  for (float v : logits) m = std::max<long double>(m, v);
  std::vector<long double> out;
  long double total = 0.0L;
  for (float v : logits) {
    out.push_back(std::exp(static_cast<long double>(v) - m));
    total += out.back();
  }
  for (auto& v : out) v /= total;
  return out;
}

std::uint32_t first_argmax(std::span<const float> row) {
  std::uint32_t best = 0;
  for (std::uint32_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

std::vector<std::uint64_t> zsf_scan(std::span<const std::uint32_t> labels, const MatrixF& zs, const MatrixF& ft) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (first_argmax(ft.row(i)) == labels[i] && first_argmax(zs.row(i)) != labels[i]) out.push_back(i);
  }
  return out;
}

namespace {
std::vector<double> counted_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}
}  // namespace

double spearman_counted(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = counted_ranks(x);
  const auto ry = counted_ranks(y);
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= rx.size();
  my /= ry.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

double grid_argmin(const std::function<double(double)>& f, double step) {
  const auto n = static_cast<long>(std::llround(1.0 / step));
  double best_g = 0.0, best_v = f(0.0);
  for (long i = 1; i <= n; ++i) {
    const double g = static_cast<double>(i) / static_cast<double>(n);
    const double v = f(g);
    if (v < best_v) {
      best_v = v;
      best_g = g;
    }
  }
  return best_g;
}

long double variance_ld(const std::vector<double>& x) { return covariance_ld(x, x); }

long double covariance_ld(const std::vector<double>& x, const std::vector<double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / x.size();
}

TempDir::TempDir() {
  static std::mt19937_64 rng{std::random_device{}()};
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto p = std::filesystem::temp_directory_path() / ("vrf-test-" + std::to_string(rng()));
    if (std::filesystem::create_directory(p)) {
      path_ = p;
      return;
    }
  }
  throw std::runtime_error("cannot create a temp directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

SplitData random_split(std::size_t n, std::size_t dim, std::uint32_t k, Gen& gen, double ft_bias, double zs_bias) {
  SplitData s;
  s.name = "random";
  s.labels = random_labels(n, k, gen);
  s.zs.tag = ModelTag::kZeroShot;
  s.zs.features = random_unit_rows(n, dim, gen);
  s.ft.features = random_unit_rows(n, dim, gen);
  s.zs.logits = random_matrix(n, k, gen);
  s.ft.logits = random_matrix(n, k, gen);
  for (std::size_t i = 0; i < n; ++i) {
    s.zs.logits(i, s.labels[i]) += static_cast<float>(zs_bias);
    s.ft.logits(i, s.labels[i]) += static_cast<float>(ft_bias);
  }
  return s;
}

}  // namespace vrf::testing
