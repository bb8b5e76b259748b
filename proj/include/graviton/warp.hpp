#pragma once

#include <cmath>
#include <vector>

#include "graviton/core/tape.hpp"
#include "graviton/core/tensor.hpp"

namespace graviton {

// Backward (gather) warping: out[c,y,x] samples src at (x + x_o, y + y_o)
// with bilinear interpolation; coordinates outside the image clamp to the
// border. Flow channel 0 is x_o, channel 1 is y_o, both in pixels.

namespace detail {

template <typename T>
struct SampleWeights {
  int x0, x1, y0, y1;
  T wx, wy;
  bool clamped_x, clamped_y;
};

template <typename T>
SampleWeights<T> bilinear_setup(T sx, T sy, int W, int H) {
  SampleWeights<T> s;
  s.clamped_x = sx < T(0) || sx > T(W - 1);
  s.clamped_y = sy < T(0) || sy > T(H - 1);
  sx = std::min(static_cast<T>(W - 1), std::max(T(0), sx));
  sy = std::min(static_cast<T>(H - 1), std::max(T(0), sy));
  s.x0 = static_cast<int>(std::floor(sx));
  s.y0 = static_cast<int>(std::floor(sy));
  if (s.x0 > W - 1) s.x0 = W - 1;
  if (s.y0 > H - 1) s.y0 = H - 1;
  s.x1 = std::min(s.x0 + 1, W - 1);
  s.y1 = std::min(s.y0 + 1, H - 1);
  s.wx = sx - static_cast<T>(s.x0);
  s.wy = sy - static_cast<T>(s.y0);
  return s;
}

}  // namespace detail

/// backward_warp on plain tensors; the exact semantics the whole project
/// shares (synthetic ground truth is built with this same routine).
template <typename T>
Tensor<T> backward_warp(const Tensor<T>& src, const Tensor<T>& flow) {
  GRAVITON_REQUIRE(src.ndim() == 3 && flow.ndim() == 3, "backward_warp: bad ranks");
  GRAVITON_REQUIRE(flow.dim(0) == 2 && flow.dim(1) == src.dim(1) && flow.dim(2) == src.dim(2),
                   "backward_warp: flow shape mismatch");
  const int C = src.dim(0), H = src.dim(1), W = src.dim(2);
  Tensor<T> out({C, H, W});
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const T sx = static_cast<T>(x) + flow.at(0, y, x);
      const T sy = static_cast<T>(y) + flow.at(1, y, x);
      const auto s = detail::bilinear_setup(sx, sy, W, H);
      for (int c = 0; c < C; ++c) {
        const T v00 = src.at(c, s.y0, s.x0);
        const T v01 = src.at(c, s.y0, s.x1);
        const T v10 = src.at(c, s.y1, s.x0);
        const T v11 = src.at(c, s.y1, s.x1);
        out.at(c, y, x) = (T(1) - s.wy) * ((T(1) - s.wx) * v00 + s.wx * v01) +
                          s.wy * ((T(1) - s.wx) * v10 + s.wx * v11);
      }
    }
  }
  return out;
}

/// Per-pixel arithmetic mean of m flows. Computed as f_1 + mean(f_k - f_1)
/// so that m identical flows average to themselves bit-exactly.
template <typename T>
Tensor<T> average_flow(const std::vector<Tensor<T>>& flows) {
  GRAVITON_REQUIRE(!flows.empty(), "average_flow: need m >= 1 flows");
  const auto& f0 = flows[0];
  GRAVITON_REQUIRE(f0.ndim() == 3 && f0.dim(0) == 2, "average_flow: flows must be 2 x H x W");
  for (const auto& f : flows) GRAVITON_REQUIRE(f.same_shape(f0), "average_flow: shape mismatch");
  const T inv = T(1) / static_cast<T>(flows.size());
  Tensor<T> out = f0;
  for (int64_t i = 0; i < out.size(); ++i) {
    T acc = T(0);
    for (const auto& f : flows) acc += f[i] - f0[i];
    out[i] += acc * inv;
  }
  return out;
}

/// Bilinear upsampling of a flow field by an integer factor; offsets are
/// rescaled to the target pixel grid.
template <typename T>
Tensor<T> upsample_flow(const Tensor<T>& flow, int target_h) {
  GRAVITON_REQUIRE(flow.ndim() == 3 && flow.dim(0) == 2, "upsample_flow: flow must be 2 x H x W");
  const int h = flow.dim(1), w = flow.dim(2);
  GRAVITON_REQUIRE(target_h > 0 && target_h % h == 0,
                   "upsample_flow: target height ", target_h, " not an integer multiple of ", h);
  const int f = target_h / h;
  const int H = h * f, W = w * f;
  Tensor<T> out({2, H, W});
  const T scale = static_cast<T>(f);
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const T sx = (static_cast<T>(x) + T(0.5)) / scale - T(0.5);
        const T sy = (static_cast<T>(y) + T(0.5)) / scale - T(0.5);
        const auto s = detail::bilinear_setup(sx, sy, w, h);
        const T v = (T(1) - s.wy) * ((T(1) - s.wx) * flow.at(c, s.y0, s.x0) +
                                     s.wx * flow.at(c, s.y0, s.x1)) +
                    s.wy * ((T(1) - s.wx) * flow.at(c, s.y1, s.x0) +
                            s.wx * flow.at(c, s.y1, s.x1));
        out.at(c, y, x) = v * scale;
      }
    }
  }
  return out;
}

namespace ops {

/// Differentiable backward warp; gradients flow to both src and flow.
template <typename T>
Var<T> grid_sample(Var<T> src, Var<T> flow) {
  GRAVITON_REQUIRE(src.val().ndim() == 3 && flow.val().ndim() == 3 && flow.val().dim(0) == 2 &&
                       flow.val().dim(1) == src.val().dim(1) &&
                       flow.val().dim(2) == src.val().dim(2),
                   "grid_sample: shape mismatch");
  Tensor<T> out = backward_warp(src.val(), flow.val());
  const int C = src.val().dim(0), H = src.val().dim(1), W = src.val().dim(2);
  int ps = src.id, pf = flow.id;
  int id = src.tape->push(std::move(out), [ps, pf, C, H, W](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& sv = t.value(ps);
    const auto& fv = t.value(pf);
    auto& gs = t.grad(ps);
    auto& gf = t.grad(pf);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const T sx = static_cast<T>(x) + fv.at(0, y, x);
        const T sy = static_cast<T>(y) + fv.at(1, y, x);
        const auto s = detail::bilinear_setup(sx, sy, W, H);
        T acc_fx = T(0), acc_fy = T(0);
        for (int c = 0; c < C; ++c) {
          const T gv = g.at(c, y, x);
          const T v00 = sv.at(c, s.y0, s.x0);
          const T v01 = sv.at(c, s.y0, s.x1);
          const T v10 = sv.at(c, s.y1, s.x0);
          const T v11 = sv.at(c, s.y1, s.x1);
          gs.at(c, s.y0, s.x0) += gv * (T(1) - s.wy) * (T(1) - s.wx);
          gs.at(c, s.y0, s.x1) += gv * (T(1) - s.wy) * s.wx;
          gs.at(c, s.y1, s.x0) += gv * s.wy * (T(1) - s.wx);
          gs.at(c, s.y1, s.x1) += gv * s.wy * s.wx;
          acc_fx += gv * ((T(1) - s.wy) * (v01 - v00) + s.wy * (v11 - v10));
          acc_fy += gv * ((T(1) - s.wx) * (v10 - v00) + s.wx * (v11 - v01));
        }
        if (!s.clamped_x) gf.at(0, y, x) += acc_fx;
        if (!s.clamped_y) gf.at(1, y, x) += acc_fy;
      }
    }
  });
  return {src.tape, id};
}

/// Mean over m flow heads stacked as a 2m x h x w map (Eq.-style average
/// offset). Shares the shift-by-first formulation of average_flow.
template <typename T>
Var<T> flow_mean(Var<T> stacked) {
  GRAVITON_REQUIRE(stacked.val().ndim() == 3 && stacked.val().dim(0) % 2 == 0 &&
                       stacked.val().dim(0) >= 2,
                   "flow_mean: expected 2m x h x w");
  const int m = stacked.val().dim(0) / 2;
  const int h = stacked.val().dim(1), w = stacked.val().dim(2);
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor<T> out({2, h, w});
  const T inv = T(1) / static_cast<T>(m);
  for (int o = 0; o < 2; ++o) {
    for (int64_t p = 0; p < plane; ++p) {
      const T base = stacked.val()[o * plane + p];
      T acc = T(0);
      for (int k = 0; k < m; ++k) acc += stacked.val()[(2 * k + o) * plane + p] - base;
      out[o * plane + p] = base + acc * inv;
    }
  }
  int pa = stacked.id;
  int id = stacked.tape->push(std::move(out), [pa, m, plane, inv](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int o = 0; o < 2; ++o)
      for (int64_t p = 0; p < plane; ++p) {
        const T gv = g[o * plane + p] * inv;
        for (int k = 0; k < m; ++k) ga[(2 * k + o) * plane + p] += gv;
      }
  });
  return {stacked.tape, id};
}

}  // namespace ops
}  // namespace graviton
