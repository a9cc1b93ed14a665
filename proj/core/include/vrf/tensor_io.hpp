// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "vrf/matrix.hpp"

namespace vrf {

/// On-disk element type codes.
enum class DType : std::uint8_t {
  kFloat32 = 1,  ///< IEEE-754 binary32, little-endian
  kUInt32 = 2,   ///< unsigned 32-bit, little-endian
};

std::size_t dtype_size(DType dtype);

/// In-memory image of a tensor file: rank-1 or rank-2 array of one dtype.
///
/// File layout: "VRF1" | dtype u8 | rank u8 | rank x dim u64 LE | payload row-major LE.
/// No padding, no checksum.
struct Tensor {
  DType dtype = DType::kFloat32;
  std::vector<std::uint64_t> shape;
  std::variant<std::vector<float>, std::vector<std::uint32_t>> values;

  static Tensor from_matrix(const MatrixF& m);
  static Tensor from_vector(std::span<const float> v);
  static Tensor from_labels(std::span<const std::uint32_t> labels);

  std::uint64_t element_count() const;

  /// Rank-2 float32 view as a matrix; throws FormatError on dtype/rank mismatch.
  MatrixF to_matrix() const;
  /// Rank-1 uint32 labels; throws FormatError on dtype/rank mismatch.
  std::vector<std::uint32_t> to_labels() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct TensorHeader {
  DType dtype = DType::kFloat32;
  std::vector<std::uint64_t> shape;
  std::size_t header_bytes = 0;
  std::uint64_t payload_bytes = 0;
};

inline constexpr char kTensorMagic[4] = {'V', 'R', 'F', '1'};

std::vector<std::byte> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::byte> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

/// Parses and validates only the header; checks the file size against the
/// declared dims without reading the payload.
TensorHeader read_tensor_header(const std::filesystem::path& path);

inline void write_matrix(const std::filesystem::path& path, const MatrixF& m) {
  write_tensor(path, Tensor::from_matrix(m));
}
inline MatrixF read_matrix(const std::filesystem::path& path) {
  return read_tensor(path).to_matrix();
}
inline void write_labels(const std::filesystem::path& path,
                         std::span<const std::uint32_t> labels) {
  write_tensor(path, Tensor::from_labels(labels));
}
inline std::vector<std::uint32_t> read_labels(const std::filesystem::path& path) {
  return read_tensor(path).to_labels();
}

}  // namespace vrf
