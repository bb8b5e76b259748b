#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "graviton/core/param_store.hpp"

namespace graviton {

// Checkpoint archive: a fixed header, a manifest (names, shapes, trainable
// flags) and one contiguous little-endian data blob. Round trips are bitwise.
//
//   magic   "GRVCKPT1"
//   u64     config hash
//   u8      scalar width (4 or 8)
//   u32     parameter count
//   entry*  u32 name_len | name | u8 trainable | u32 ndim | i32 dims[ndim]
//   data    raw scalars, manifest order

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace detail {

inline void write_bytes(std::ofstream& f, const void* p, size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::ifstream& f, void* p, size_t n, const std::string& path) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  GRAVITON_REQUIRE(f.gcount() == static_cast<std::streamsize>(n),
                   "corrupt checkpoint (truncated): ", path);
}

template <typename V>
void write_pod(std::ofstream& f, V v) {
  write_bytes(f, &v, sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& f, const std::string& path) {
  V v{};
  read_bytes(f, &v, sizeof(V), path);
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::string& path,
                     uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary);
  GRAVITON_REQUIRE(f.good(), "cannot open checkpoint for writing: ", path);
  f.write("GRVCKPT1", 8);
  detail::write_pod<uint64_t>(f, config_hash);
  detail::write_pod<uint8_t>(f, static_cast<uint8_t>(sizeof(T)));
  detail::write_pod<uint32_t>(f, static_cast<uint32_t>(store.size()));
  for (const auto& [name, e] : store.entries()) {
    detail::write_pod<uint32_t>(f, static_cast<uint32_t>(name.size()));
    detail::write_bytes(f, name.data(), name.size());
    detail::write_pod<uint8_t>(f, e.trainable ? 1 : 0);
    detail::write_pod<uint32_t>(f, static_cast<uint32_t>(e.value.shape.size()));
    for (int d : e.value.shape) detail::write_pod<int32_t>(f, d);
  }
  for (const auto& [name, e] : store.entries()) {
    detail::write_bytes(f, e.value.data.data(), e.value.data.size() * sizeof(T));
  }
  GRAVITON_REQUIRE(f.good(), "failed writing checkpoint: ", path);
}

struct CheckpointInfo {
  uint64_t config_hash = 0;
  int scalar_width = 0;
};

/// Loads a checkpoint saved with scalar width sizeof(T) or, when T is double,
/// widens a float checkpoint exactly. Narrowing is refused.
template <typename T>
ParamStore<T> load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr) {
  std::ifstream f(path, std::ios::binary);
  GRAVITON_REQUIRE(f.good(), "checkpoint file not found: ", path);
  char magic[8];
  detail::read_bytes(f, magic, 8, path);
  GRAVITON_REQUIRE(std::memcmp(magic, "GRVCKPT1", 8) == 0, "bad checkpoint magic in ", path);
  const uint64_t hash = detail::read_pod<uint64_t>(f, path);
  const uint8_t width = detail::read_pod<uint8_t>(f, path);
  GRAVITON_REQUIRE(width == 4 || width == 8, "bad scalar width in checkpoint ", path);
  GRAVITON_REQUIRE(width == sizeof(T) || (width == 4 && sizeof(T) == 8),
                   "checkpoint ", path, " stores ", static_cast<int>(width),
                   "-byte scalars; cannot narrow to ", sizeof(T), "-byte params");
  const uint32_t count = detail::read_pod<uint32_t>(f, path);

  struct Manifest {
    std::string name;
    bool trainable;
    std::vector<int> shape;
  };
  std::vector<Manifest> manifest(count);
  for (auto& m : manifest) {
    const uint32_t len = detail::read_pod<uint32_t>(f, path);
    GRAVITON_REQUIRE(len > 0 && len < 4096, "corrupt checkpoint (bad name length): ", path);
    m.name.resize(len);
    detail::read_bytes(f, m.name.data(), len, path);
    m.trainable = detail::read_pod<uint8_t>(f, path) != 0;
    const uint32_t ndim = detail::read_pod<uint32_t>(f, path);
    GRAVITON_REQUIRE(ndim >= 1 && ndim <= 8, "corrupt checkpoint (bad rank) for '", m.name,
                     "' in ", path);
    m.shape.resize(ndim);
    for (auto& d : m.shape) {
      d = detail::read_pod<int32_t>(f, path);
      GRAVITON_REQUIRE(d > 0, "corrupt checkpoint (bad dim) for '", m.name, "' in ", path);
    }
  }

  ParamStore<T> store;
  for (const auto& m : manifest) {
    Tensor<T> t(m.shape);
    if (width == sizeof(T)) {
      detail::read_bytes(f, t.data.data(), t.data.size() * sizeof(T), path);
    } else {
      std::vector<float> tmp(t.data.size());
      detail::read_bytes(f, tmp.data(), tmp.size() * sizeof(float), path);
      for (size_t i = 0; i < tmp.size(); ++i) t.data[i] = static_cast<T>(tmp[i]);
    }
    store.add(m.name, std::move(t), m.trainable);
  }
  if (info != nullptr) {
    info->config_hash = hash;
    info->scalar_width = width;
  }
  return store;
}

/// Model loaders call this to fail fast with the offending parameter name.
template <typename T>
void require_params(const ParamStore<T>& store, const std::vector<std::string>& names,
                    const std::string& context) {
  for (const auto& n : names) {
    GRAVITON_REQUIRE(store.contains(n), context, ": missing parameter: ", n);
  }
}

}  // namespace graviton
