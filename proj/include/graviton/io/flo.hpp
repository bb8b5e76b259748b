#pragma once

// Middlebury .flo flow files: float magic 202021.25, int32 width/height,
// then interleaved (x_o, y_o) float32 pairs in raster order.

#include <fstream>
#include <string>

#include "graviton/core/tensor.hpp"

namespace graviton::io {

inline constexpr float kFloMagic = 202021.25f;

template <typename T>
void write_flo(const Tensor<T>& flow, const std::string& path) {
  GRAVITON_REQUIRE(flow.ndim() == 3 && flow.dim(0) == 2, "write_flo: flow must be 2 x H x W");
  const int H = flow.dim(1), W = flow.dim(2);
  std::ofstream f(path, std::ios::binary);
  GRAVITON_REQUIRE(f.good(), "cannot write flow: ", path);
  f.write(reinterpret_cast<const char*>(&kFloMagic), 4);
  const int32_t w32 = W, h32 = H;
  f.write(reinterpret_cast<const char*>(&w32), 4);
  f.write(reinterpret_cast<const char*>(&h32), 4);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float fx = static_cast<float>(flow.at(0, y, x));
      const float fy = static_cast<float>(flow.at(1, y, x));
      f.write(reinterpret_cast<const char*>(&fx), 4);
      f.write(reinterpret_cast<const char*>(&fy), 4);
    }
  GRAVITON_REQUIRE(f.good(), "failed writing flow: ", path);
}

template <typename T>
Tensor<T> read_flo(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  GRAVITON_REQUIRE(f.good(), "flow file not found: ", path);
  float magic = 0;
  int32_t W = 0, H = 0;
  f.read(reinterpret_cast<char*>(&magic), 4);
  f.read(reinterpret_cast<char*>(&W), 4);
  f.read(reinterpret_cast<char*>(&H), 4);
  GRAVITON_REQUIRE(magic == kFloMagic, "bad flow magic in ", path);
  GRAVITON_REQUIRE(W > 0 && H > 0, "bad flow dimensions in ", path);
  Tensor<T> flow({2, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float fx = 0, fy = 0;
      f.read(reinterpret_cast<char*>(&fx), 4);
      f.read(reinterpret_cast<char*>(&fy), 4);
      GRAVITON_REQUIRE(f.good(), "truncated flow file: ", path);
      flow.at(0, y, x) = static_cast<T>(fx);
      flow.at(1, y, x) = static_cast<T>(fy);
    }
  return flow;
}

}  // namespace graviton::io
