#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "fligan/errors.hpp"

namespace fligan {

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;  // row-major

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  bool operator==(const NamedTensor&) const = default;
};

/// Ordered named tensors: the message a node sends to the server.
struct WeightSet {
  std::vector<NamedTensor> tensors;

  const NamedTensor& at(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw ContractError("WeightSet has no tensor '" + name + "'");
  }

  bool has(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }

  bool same_structure(const WeightSet& other) const {
    if (tensors.size() != other.tensors.size()) return false;
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].name != other.tensors[i].name || tensors[i].shape != other.tensors[i].shape)
        return false;
    return true;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.values.size();
    return n;
  }

  bool operator==(const WeightSet&) const = default;
};

// Named-tensor container, little-endian:
//   "FLWS" | u32 version | u64 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 values[numel]

namespace detail {

inline constexpr char kWeightMagic[4] = {'F', 'L', 'W', 'S'};
inline constexpr std::uint32_t kWeightVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw IoError("weight file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_weights(std::ostream& out, const WeightSet& ws) {
  out.write(detail::kWeightMagic, 4);
  detail::put<std::uint32_t>(out, detail::kWeightVersion);
  detail::put<std::uint64_t>(out, ws.tensors.size());
  for (const auto& t : ws.tensors) {
    require(t.values.size() == t.numel(), "write_weights: tensor '" + t.name + "' shape/payload mismatch");
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put<std::uint64_t>(out, d);
    for (double v : t.values) detail::put<double>(out, v);
  }
}

inline WeightSet read_weights(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, detail::kWeightMagic, 4) != 0)
    throw IoError("not a named-tensor weight file");
  if (auto v = detail::get<std::uint32_t>(in); v != detail::kWeightVersion)
    throw IoError("unsupported weight file version " + std::to_string(v));
  WeightSet ws;
  auto count = detail::get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(detail::get<std::uint32_t>(in));
    if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size())))
      throw IoError("weight file truncated");
    t.shape.resize(detail::get<std::uint32_t>(in));
    for (auto& d : t.shape) d = detail::get<std::uint64_t>(in);
    t.values.resize(t.numel());
    for (auto& v : t.values) v = detail::get<double>(in);
    ws.tensors.push_back(std::move(t));
  }
  return ws;
}

inline void save_weights(const std::string& path, const WeightSet& ws) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_weights(out, ws);
}

inline WeightSet load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_weights(in);
}

}  // namespace fligan
