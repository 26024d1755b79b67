// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gq/linalg.hpp"

namespace gq {

// On-disk layout, all integers little-endian:
//   magic   8 bytes  "GQTENSR1"
//   dtype   1 byte   0 = f32, 1 = f64, 2 = u8
//   ndim    u32
//   dims    ndim x u64
//   payload row-major values, little-endian
inline constexpr std::string_view kTensorMagic = "GQTENSR1";

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

std::size_t dtype_size(DType t);

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint8_t>> values;

  DType dtype() const { return static_cast<DType>(values.index()); }
  std::uint64_t element_count() const;

  static Tensor from_matrix(const Matrix& m);
  static Tensor from_u8(std::vector<std::uint64_t> dims, std::vector<std::uint8_t> data);
  /// 2-D f64 tensor to Matrix (f32 is widened).
  Matrix to_matrix() const;

  bool operator==(const Tensor&) const = default;
};

std::string encode_tensor(const Tensor& t);
/// Throws CorruptFile on bad magic, short or oversized payload; UnsupportedDtype on unknown dtype.
Tensor decode_tensor(std::string_view bytes);

/// Atomic: writes a sibling temp file, then renames over `path`.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Atomic whole-file write used for every artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace gq
