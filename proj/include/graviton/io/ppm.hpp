#pragma once

// 8-bit PPM previews for eyeballing outputs, plus the flow color wheel.
// Previews are diagnostics; PFM is the lossless interchange format.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "graviton/core/tensor.hpp"

namespace graviton::io {

/// [-1,1] image -> 8-bit PPM
template <typename T>
void write_ppm(const Tensor<T>& img, const std::string& path) {
  GRAVITON_REQUIRE(img.ndim() == 3 && (img.dim(0) == 1 || img.dim(0) == 3),
                   "write_ppm: image must be 1 or 3 channels");
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  std::ofstream f(path, std::ios::binary);
  GRAVITON_REQUIRE(f.good(), "cannot write preview: ", path);
  f << "P6\n" << W << " " << H << "\n255\n";
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = static_cast<double>(img.at(C == 3 ? c : 0, y, x));
        const int byte = static_cast<int>(std::lround((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5));
        f.put(static_cast<char>(std::clamp(byte, 0, 255)));
      }
  GRAVITON_REQUIRE(f.good(), "failed writing preview: ", path);
}

/// simple hue-by-direction, saturation-by-magnitude flow rendering
template <typename T>
Tensor<T> flow_to_color(const Tensor<T>& flow, double max_magnitude = 0.0) {
  GRAVITON_REQUIRE(flow.ndim() == 3 && flow.dim(0) == 2, "flow_to_color: flow must be 2 x H x W");
  const int H = flow.dim(1), W = flow.dim(2);
  double maxm = max_magnitude;
  if (maxm <= 0) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double fx = flow.at(0, y, x), fy = flow.at(1, y, x);
        maxm = std::max(maxm, std::sqrt(fx * fx + fy * fy));
      }
    if (maxm == 0) maxm = 1.0;
  }
  Tensor<T> rgb({3, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double fx = flow.at(0, y, x), fy = flow.at(1, y, x);
      const double mag = std::min(1.0, std::sqrt(fx * fx + fy * fy) / maxm);
      const double hue = (std::atan2(fy, fx) + 3.14159265358979323846) / (2 * 3.14159265358979323846);
      const double hh = hue * 6.0;
      const int sector = static_cast<int>(hh) % 6;
      const double frac = hh - std::floor(hh);
      const double p = 1.0 - mag, q = 1.0 - mag * frac, t = 1.0 - mag * (1.0 - frac);
      double r = 1, g = 1, b = 1;
      switch (sector) {
        case 0: r = 1; g = t; b = p; break;
        case 1: r = q; g = 1; b = p; break;
        case 2: r = p; g = 1; b = t; break;
        case 3: r = p; g = q; b = 1; break;
        case 4: r = t; g = p; b = 1; break;
        default: r = 1; g = p; b = q; break;
      }
      rgb.at(0, y, x) = static_cast<T>(r * 2.0 - 1.0);
      rgb.at(1, y, x) = static_cast<T>(g * 2.0 - 1.0);
      rgb.at(2, y, x) = static_cast<T>(b * 2.0 - 1.0);
    }
  return rgb;
}

}  // namespace graviton::io
