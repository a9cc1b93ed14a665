// SPDX-License-Identifier: Apache-2.0
#include "vrf/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

namespace vrf {
namespace {

constexpr std::size_t kMaxRank = 2;

void put_u64_le(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
  }
}

std::uint64_t get_u64_le(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(p[i])) << (8 * i);
  }
  return v;
}

template <typename T>
void append_payload(std::vector<std::byte>& out, const std::vector<T>& values) {
  static_assert(sizeof(T) == 4);
  const std::size_t offset = out.size();
  out.resize(offset + values.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(out.data() + offset, values.data(), values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) {
        out[offset + 4 * i + b] = static_cast<std::byte>((bits >> (8 * b)) & 0xffu);
      }
    }
  }
}

template <typename T>
std::vector<T> extract_payload(const std::byte* p, std::size_t count) {
  std::vector<T> values(count);
  if constexpr (std::endian::native == std::endian::little) {
    if (count != 0) std::memcpy(values.data(), p, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(p[4 * i + b])) << (8 * b);
      }
      values[i] = std::bit_cast<T>(bits);
    }
  }
  return values;
}

// Parses the fixed header from the first bytes of a file. `total_size` is the
// full file length, used to check the payload length against the dims.
TensorHeader parse_header(std::span<const std::byte> head, std::uint64_t total_size) {
  if (head.size() < 6) throw FormatError("tensor file truncated: header shorter than 6 bytes");
  if (std::memcmp(head.data(), kTensorMagic, 4) != 0) {
    throw FormatError("bad magic: expected 'VRF1'");
  }
  TensorHeader h;
  const auto code = std::to_integer<std::uint8_t>(head[4]);
  if (code != 1 && code != 2) {
    throw FormatError("unsupported dtype code " + std::to_string(code));
  }
  h.dtype = static_cast<DType>(code);
  const auto rank = std::to_integer<std::uint8_t>(head[5]);
  if (rank < 1 || rank > kMaxRank) {
    throw FormatError("unsupported rank " + std::to_string(rank));
  }
  h.header_bytes = 6 + 8 * static_cast<std::size_t>(rank);
  if (head.size() < h.header_bytes) throw FormatError("tensor file truncated inside dims");
  std::uint64_t count = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    const std::uint64_t d = get_u64_le(head.data() + 6 + 8 * r);
    h.shape.push_back(d);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d) {
      throw FormatError("tensor dims overflow");
    }
    count *= d;
  }
  const std::uint64_t elem = dtype_size(h.dtype);
  if (count > std::numeric_limits<std::uint64_t>::max() / elem) {
    throw FormatError("tensor dims overflow");
  }
  h.payload_bytes = count * elem;
  const std::uint64_t available = total_size - h.header_bytes;
  if (available < h.payload_bytes) {
    throw FormatError("tensor payload truncated: expected " + std::to_string(h.payload_bytes) +
                      " bytes, found " + std::to_string(available));
  }
  if (available > h.payload_bytes) {
    throw FormatError("tensor payload has " + std::to_string(available - h.payload_bytes) +
                      " trailing bytes");
  }
  return h;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat32:
    case DType::kUInt32:
      return 4;
  }
  throw FormatError("unsupported dtype");
}

Tensor Tensor::from_matrix(const MatrixF& m) {
  return Tensor{DType::kFloat32, {m.rows(), m.cols()}, m.storage()};
}

Tensor Tensor::from_vector(std::span<const float> v) {
  return Tensor{DType::kFloat32, {v.size()}, std::vector<float>(v.begin(), v.end())};
}

Tensor Tensor::from_labels(std::span<const std::uint32_t> labels) {
  return Tensor{DType::kUInt32, {labels.size()},
                std::vector<std::uint32_t>(labels.begin(), labels.end())};
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

MatrixF Tensor::to_matrix() const {
  if (dtype != DType::kFloat32) throw FormatError("expected float32 tensor");
  if (shape.size() != 2) throw FormatError("expected rank-2 tensor");
  return MatrixF(shape[0], shape[1], std::get<std::vector<float>>(values));
}

std::vector<std::uint32_t> Tensor::to_labels() const {
  if (dtype != DType::kUInt32) throw FormatError("expected uint32 label tensor");
  if (shape.size() != 1) throw FormatError("expected rank-1 label tensor");
  return std::get<std::vector<std::uint32_t>>(values);
}

std::vector<std::byte> encode_tensor(const Tensor& tensor) {
  if (tensor.shape.empty() || tensor.shape.size() > kMaxRank) {
    throw ValidationError("unsupported tensor rank " + std::to_string(tensor.shape.size()));
  }
  const bool is_f32 = std::holds_alternative<std::vector<float>>(tensor.values);
  if ((tensor.dtype == DType::kFloat32) != is_f32 ||
      (tensor.dtype != DType::kFloat32 && tensor.dtype != DType::kUInt32)) {
    throw ValidationError("tensor dtype code does not match its values");
  }
  const std::size_t count = is_f32 ? std::get<std::vector<float>>(tensor.values).size()
                                   : std::get<std::vector<std::uint32_t>>(tensor.values).size();
  if (count != tensor.element_count()) {
    throw DimensionError("tensor value count does not match its shape");
  }

  std::vector<std::byte> out;
  out.reserve(6 + 8 * tensor.shape.size() + 4 * count);
  for (char c : kTensorMagic) out.push_back(static_cast<std::byte>(c));
  out.push_back(static_cast<std::byte>(tensor.dtype));
  out.push_back(static_cast<std::byte>(tensor.shape.size()));
  for (auto d : tensor.shape) put_u64_le(out, d);
  if (is_f32) {
    append_payload(out, std::get<std::vector<float>>(tensor.values));
  } else {
    append_payload(out, std::get<std::vector<std::uint32_t>>(tensor.values));
  }
  return out;
}

Tensor decode_tensor(std::span<const std::byte> bytes) {
  const TensorHeader h = parse_header(bytes, bytes.size());
  Tensor t;
  t.dtype = h.dtype;
  t.shape = h.shape;
  const std::size_t count = static_cast<std::size_t>(h.payload_bytes / 4);
  const std::byte* payload = bytes.data() + h.header_bytes;
  if (h.dtype == DType::kFloat32) {
    t.values = extract_payload<float>(payload, count);
  } else {
    t.values = extract_payload<std::uint32_t>(payload, count);
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size != 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("read failed for '" + path.string() + "'");
  }
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TensorHeader read_tensor_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::array<std::byte, 6 + 8 * kMaxRank> head{};
  const auto want = static_cast<std::streamsize>(std::min<std::uint64_t>(size, head.size()));
  in.read(reinterpret_cast<char*>(head.data()), want);
  try {
    return parse_header(std::span<const std::byte>(head.data(), static_cast<std::size_t>(want)), size);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace vrf
