#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"

namespace biqe {

// Binary container shared by all model kinds:
//   "BIQECKPT" | u32 version | u32 len + model kind | u32 len + config JSON |
//   u32 array count | arrays... | u32 CRC-32 of everything before it
// Each array: u16 name len + name | u8 dtype (0 f32, 1 f64) | u64 rows | u64 cols | data.
// Integers are little-endian; array data is row-major.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct NamedArray {
  std::string name;
  DType dtype = DType::f32;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<unsigned char> bytes;
};

struct CheckpointFile {
  std::string kind;
  nlohmann::json config;
  std::vector<NamedArray> arrays;
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

// 64-bit FNV-1a of a file's bytes, as hex; used as a content fingerprint.
std::string file_checksum(const std::filesystem::path& path);
std::string string_checksum(const std::string& s);

template <typename Scalar>
constexpr DType dtype_of() {
  return sizeof(Scalar) == 4 ? DType::f32 : DType::f64;
}

template <typename Derived>
NamedArray to_named_array(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  NamedArray a;
  a.name = name;
  a.dtype = dtype_of<Scalar>();
  a.rows = static_cast<std::uint64_t>(m.rows());
  a.cols = static_cast<std::uint64_t>(m.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  a.bytes.resize(static_cast<std::size_t>(rm.size()) * sizeof(Scalar));
  std::memcpy(a.bytes.data(), rm.data(), a.bytes.size());
  return a;
}

// Copies into `out`, converting precision when the stored dtype differs.
template <typename Scalar>
void from_named_array(const NamedArray& a,
                      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& out,
                      Eigen::Index rows, Eigen::Index cols) {
  if (a.rows != static_cast<std::uint64_t>(rows) || a.cols != static_cast<std::uint64_t>(cols))
    fail(ErrorCode::parse, "array '" + a.name + "' has shape " + std::to_string(a.rows) + "x" +
                               std::to_string(a.cols) + ", config implies " +
                               std::to_string(rows) + "x" + std::to_string(cols));
  out.resize(rows, cols);
  const auto n = static_cast<std::size_t>(rows * cols);
  if (a.dtype == DType::f32) {
    std::vector<float> tmp(n);
    std::memcpy(tmp.data(), a.bytes.data(), n * sizeof(float));
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = static_cast<Scalar>(tmp[i]);
  } else {
    std::vector<double> tmp(n);
    std::memcpy(tmp.data(), a.bytes.data(), n * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = static_cast<Scalar>(tmp[i]);
  }
}

}  // namespace biqe
