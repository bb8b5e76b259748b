#pragma once

// Portable FloatMap (PFM): lossless float32 raster, the storage format for
// all dataset images. "PF" = 3-channel, "Pf" = 1-channel; negative scale
// marks little-endian; scanlines run bottom-to-top.

#include <fstream>
#include <string>

#include "graviton/core/tensor.hpp"

namespace graviton::io {

template <typename T>
void write_pfm(const Tensor<T>& img, const std::string& path) {
  GRAVITON_REQUIRE(img.ndim() == 3 && (img.dim(0) == 1 || img.dim(0) == 3),
                   "write_pfm: image must be 1 or 3 channels, got ", img.dim(0));
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  std::ofstream f(path, std::ios::binary);
  GRAVITON_REQUIRE(f.good(), "cannot write image: ", path);
  f << (C == 3 ? "PF" : "Pf") << "\n" << W << " " << H << "\n" << "-1.0" << "\n";
  std::vector<float> row(static_cast<size_t>(W) * C);
  for (int y = H - 1; y >= 0; --y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) row[static_cast<size_t>(x) * C + c] = static_cast<float>(img.at(c, y, x));
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  GRAVITON_REQUIRE(f.good(), "failed writing image: ", path);
}

template <typename T>
Tensor<T> read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  GRAVITON_REQUIRE(f.good(), "image file not found: ", path);
  std::string magic;
  f >> magic;
  GRAVITON_REQUIRE(magic == "PF" || magic == "Pf", "bad PFM magic in ", path);
  const int C = magic == "PF" ? 3 : 1;
  int W = 0, H = 0;
  double scale = 0;
  f >> W >> H >> scale;
  GRAVITON_REQUIRE(W > 0 && H > 0, "bad PFM dimensions in ", path);
  GRAVITON_REQUIRE(scale < 0, "big-endian PFM not supported: ", path);
  f.get();  // single whitespace after the header
  Tensor<T> img({C, H, W});
  std::vector<float> row(static_cast<size_t>(W) * C);
  for (int y = H - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(float)));
    GRAVITON_REQUIRE(f.gcount() == static_cast<std::streamsize>(row.size() * sizeof(float)),
                     "truncated PFM: ", path);
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) img.at(c, y, x) = static_cast<T>(row[static_cast<size_t>(x) * C + c]);
  }
  return img;
}

}  // namespace graviton::io
