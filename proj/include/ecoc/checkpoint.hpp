#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecoc/tensor.hpp"

namespace ecoc {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Binary parameter container:
///   "ECOCCKPT" | u32 version | records...
/// each record being
///   u32 name length | UTF-8 name | u8 dtype (0 = f64, 1 = f32) | u32 rank |
///   u64 dims[rank] | little-endian values
/// Records run to end of file.
namespace checkpoint {

inline constexpr std::array<char, 8> kMagic{'E', 'C', 'O', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kFloat64 = 0;
inline constexpr std::uint8_t kFloat32 = 1;

namespace detail {

template <typename U>
void put(std::ostream& os, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
    std::array<char, sizeof(U)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(U));
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(U));
  } else {
    os.write(reinterpret_cast<const char*>(&value), sizeof(U));
  }
}

template <typename U>
U get(std::istream& is, const std::string& what) {
  std::array<char, sizeof(U)> bytes;
  if (!is.read(bytes.data(), sizeof(U))) {
    throw CheckpointError("checkpoint truncated while reading " + what);
  }
  if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
    std::reverse(bytes.begin(), bytes.end());
  }
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

}  // namespace detail

template <typename T>
void save(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  detail::put<std::uint32_t>(os, kVersion);
  for (const auto& [name, value] : tensors) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint8_t>(os, std::is_same_v<T, float> ? kFloat32 : kFloat64);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(value.rank()));
    for (std::size_t d : value.shape()) detail::put<std::uint64_t>(os, d);
    for (T v : value.values()) detail::put<T>(os, v);
  }
  if (!os) throw CheckpointError("write failed for " + path.string());
}

template <typename T>
std::vector<NamedTensor<T>> load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError(path.string() + " is not an ECOCCKPT container");
  }
  const auto version = detail::get<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedTensor<T>> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = detail::get<std::uint32_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("checkpoint truncated in name");
    const auto dtype = detail::get<std::uint8_t>(is, "dtype of " + name);
    const auto rank = detail::get<std::uint32_t>(is, "rank of " + name);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get<std::uint64_t>(is, "dims of " + name);
    if (dtype != kFloat64 && dtype != kFloat32) {
      throw CheckpointError("unknown dtype tag " + std::to_string(dtype) + " for " + name);
    }
    const std::string what = "values of " + name;
    std::vector<T> values(shape_numel(shape));
    for (auto& v : values) {
      v = dtype == kFloat64 ? static_cast<T>(detail::get<double>(is, what))
                            : static_cast<T>(detail::get<float>(is, what));
    }
    out.push_back({std::move(name), Tensor<T>(std::move(shape), std::move(values))});
  }
  return out;
}

}  // namespace checkpoint
}  // namespace ecoc
