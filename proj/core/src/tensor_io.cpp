// SPDX-License-Identifier: Apache-2.0
#include "gq/tensor_io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include "gq/error.hpp"

namespace gq {

namespace {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(U)) fail(ErrorCode::CorruptFile, "truncated tensor header");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return v;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  fail(ErrorCode::UnsupportedDtype, "dtype " + std::to_string(static_cast<int>(t)));
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      fail(ErrorCode::CorruptFile, "tensor dims overflow");
    }
    n *= d;
  }
  return n;
}

Tensor Tensor::from_matrix(const Matrix& m) {
  return {{m.rows(), m.cols()}, m.storage()};
}

Tensor Tensor::from_u8(std::vector<std::uint64_t> dims, std::vector<std::uint8_t> data) {
  Tensor t{std::move(dims), std::move(data)};
  if (t.element_count() != std::get<std::vector<std::uint8_t>>(t.values).size()) {
    fail(ErrorCode::DimensionMismatch, "u8 tensor data does not match dims");
  }
  return t;
}

Matrix Tensor::to_matrix() const {
  if (dims.size() != 2) fail(ErrorCode::DimensionMismatch, "expected a 2-D tensor");
  const auto rows = static_cast<std::size_t>(dims[0]);
  const auto cols = static_cast<std::size_t>(dims[1]);
  if (const auto* d = std::get_if<std::vector<double>>(&values)) return Matrix(rows, cols, *d);
  if (const auto* f = std::get_if<std::vector<float>>(&values)) {
    return Matrix(rows, cols, std::vector<double>(f->begin(), f->end()));
  }
  fail(ErrorCode::UnsupportedDtype, "u8 tensor cannot be read as a real matrix");
}

std::string encode_tensor(const Tensor& t) {
  const std::uint64_t count = t.element_count();
  std::string out;
  out.reserve(kTensorMagic.size() + 5 + 8 * t.dims.size() + count * dtype_size(t.dtype()));
  out.append(kTensorMagic);
  out.push_back(static_cast<char>(t.dtype()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint64_t>(out, d);
  std::visit(
      [&](const auto& vec) {
        using T = typename std::decay_t<decltype(vec)>::value_type;
        if (vec.size() != count) fail(ErrorCode::DimensionMismatch, "tensor payload does not match dims");
        for (T v : vec) {
          if constexpr (std::is_same_v<T, double>) {
            put_le(out, std::bit_cast<std::uint64_t>(v));
          } else if constexpr (std::is_same_v<T, float>) {
            put_le(out, std::bit_cast<std::uint32_t>(v));
          } else {
            out.push_back(static_cast<char>(v));
          }
        }
      },
      t.values);
  return out;
}

Tensor decode_tensor(std::string_view bytes) {
  if (bytes.size() < kTensorMagic.size() || bytes.substr(0, kTensorMagic.size()) != kTensorMagic) {
    fail(ErrorCode::CorruptFile, "bad tensor magic");
  }
  std::size_t pos = kTensorMagic.size();
  const auto dtype_byte = get_le<std::uint8_t>(bytes, pos);
  if (dtype_byte > 2) fail(ErrorCode::UnsupportedDtype, "dtype " + std::to_string(dtype_byte));
  const auto dtype = static_cast<DType>(dtype_byte);
  const auto ndim = get_le<std::uint32_t>(bytes, pos);
  if (ndim > (bytes.size() - pos) / 8) fail(ErrorCode::CorruptFile, "truncated tensor dims");
  Tensor t;
  t.dims.resize(ndim);
  for (auto& d : t.dims) d = get_le<std::uint64_t>(bytes, pos);
  const std::uint64_t count = t.element_count();
  const std::size_t width = dtype_size(dtype);
  const std::size_t remaining = bytes.size() - pos;
  if (count > remaining / width || count * width != remaining) {
    fail(ErrorCode::CorruptFile, "payload is " + std::to_string(remaining) + " bytes, expected " +
                                     std::to_string(count) + " x " + std::to_string(width));
  }
  switch (dtype) {
    case DType::F32: {
      std::vector<float> v(count);
      for (auto& x : v) x = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
      t.values = std::move(v);
      break;
    }
    case DType::F64: {
      std::vector<double> v(count);
      for (auto& x : v) x = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
      t.values = std::move(v);
      break;
    }
    case DType::U8: {
      std::vector<std::uint8_t> v(count);
      for (auto& x : v) x = get_le<std::uint8_t>(bytes, pos);
      t.values = std::move(v);
      break;
    }
  }
  return t;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  thread_local std::mt19937_64 tag_source{std::random_device{}()};
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(tag_source());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorCode::Io, "rename to " + path.string() + " failed: " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_file_atomic(path, encode_tensor(t)); }

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorCode::Io, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace gq
