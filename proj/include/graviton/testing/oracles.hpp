#pragma once

// Brute-force reference implementations used by the test-suite and the CLI
// selftest. Everything here is written as plain nested loops over plain
// tensors, independent of the tape ops and module code it cross-checks.

#include <cmath>
#include <vector>

#include "graviton/core/tensor.hpp"

namespace graviton::testing {

/// per-pixel bilinear gather with border clamp, spelled out longhand
template <typename T>
Tensor<T> oracle_backward_warp(const Tensor<T>& src, const Tensor<T>& flow) {
  const int C = src.dim(0), H = src.dim(1), W = src.dim(2);
  Tensor<T> out({C, H, W});
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        T sx = static_cast<T>(x) + flow.at(0, y, x);
        T sy = static_cast<T>(y) + flow.at(1, y, x);
        if (sx < T(0)) sx = T(0);
        if (sx > T(W - 1)) sx = T(W - 1);
        if (sy < T(0)) sy = T(0);
        if (sy > T(H - 1)) sy = T(H - 1);
        int x0 = static_cast<int>(std::floor(sx));
        int y0 = static_cast<int>(std::floor(sy));
        if (x0 > W - 1) x0 = W - 1;
        if (y0 > H - 1) y0 = H - 1;
        const int x1 = x0 + 1 > W - 1 ? W - 1 : x0 + 1;
        const int y1 = y0 + 1 > H - 1 ? H - 1 : y0 + 1;
        const T wx = sx - static_cast<T>(x0);
        const T wy = sy - static_cast<T>(y0);
        out.at(c, y, x) = (T(1) - wy) * ((T(1) - wx) * src.at(c, y0, x0) +
                                         wx * src.at(c, y0, x1)) +
                          wy * ((T(1) - wx) * src.at(c, y1, x0) + wx * src.at(c, y1, x1));
      }
    }
  }
  return out;
}

/// all-pairs scaled dot products: out[p, q] = <Fs[:, p], Fr[:, q]> / sqrt(C)
template <typename T>
Tensor<T> oracle_correlation(const Tensor<T>& feat_s, const Tensor<T>& feat_r) {
  const int C = feat_s.dim(0), h = feat_s.dim(1), w = feat_s.dim(2);
  const int n = h * w;
  const T inv_sqrt_c = T(1) / std::sqrt(static_cast<T>(C));
  Tensor<T> out({n, n});
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      T acc = T(0);
      for (int c = 0; c < C; ++c) {
        acc += feat_s[static_cast<int64_t>(c) * n + p] * feat_r[static_cast<int64_t>(c) * n + q];
      }
      out.at(p, q) = acc * inv_sqrt_c;
    }
  }
  return out;
}

/// naive convolution, zero padding
template <typename T>
Tensor<T> oracle_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                        int pad) {
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor<T> out({cout, Ho, Wo});
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        T acc = b[co];
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride + ky - pad;
              const int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += w[((static_cast<int64_t>(co) * cin + ci) * kh + ky) * kw + kx] *
                     x.at(ci, iy, ix);
            }
          }
        }
        out.at(co, oy, ox) = acc;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> oracle_row_softmax(const Tensor<T>& m) {
  const int n = m.dim(0), k = m.dim(1);
  Tensor<T> out({n, k});
  for (int i = 0; i < n; ++i) {
    T mx = m.at(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, m.at(i, j));
    T sum = T(0);
    for (int j = 0; j < k; ++j) sum += std::exp(m.at(i, j) - mx);
    for (int j = 0; j < k; ++j) out.at(i, j) = std::exp(m.at(i, j) - mx) / sum;
  }
  return out;
}

template <typename T>
Tensor<T> oracle_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor<T> out({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      T acc = T(0);
      for (int kk = 0; kk < k; ++kk) acc += a.at(i, kk) * b.at(kk, j);
      out.at(i, j) = acc;
    }
  return out;
}

/// one context-branch graph convolution step:
///   A = U U^T, rows softmax-normalized, out = norm(A) . U . W
template <typename T>
Tensor<T> oracle_graph_conv(const Tensor<T>& u, const Tensor<T>& w) {
  const int K = u.dim(0), D = u.dim(1);
  Tensor<T> adj({K, K});
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      T acc = T(0);
      for (int d = 0; d < D; ++d) acc += u.at(i, d) * u.at(j, d);
      adj.at(i, j) = acc;
    }
  auto norm = oracle_row_softmax(adj);
  return oracle_matmul(oracle_matmul(norm, u), w);
}

/// decoupled cross-attention, Softmax(alpha beta^T / sqrt(d)) gamma for the
/// text branch plus the image branch with primed projections, summed
template <typename T>
Tensor<T> oracle_dcaa(const Tensor<T>& z, const Tensor<T>& x_t, const Tensor<T>& g_i,
                      const Tensor<T>& w_alpha, const Tensor<T>& w_beta,
                      const Tensor<T>& w_gamma, const Tensor<T>& w_beta_p,
                      const Tensor<T>& w_gamma_p) {
  const int d = w_alpha.dim(1);
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
  auto alpha = oracle_matmul(z, w_alpha);
  auto branch = [&](const Tensor<T>& tokens, const Tensor<T>& wb, const Tensor<T>& wg) {
    auto beta = oracle_matmul(tokens, wb);
    auto gamma = oracle_matmul(tokens, wg);
    Tensor<T> scores({alpha.dim(0), beta.dim(0)});
    for (int i = 0; i < alpha.dim(0); ++i)
      for (int j = 0; j < beta.dim(0); ++j) {
        T acc = T(0);
        for (int kk = 0; kk < d; ++kk) acc += alpha.at(i, kk) * beta.at(j, kk);
        scores.at(i, j) = acc * inv_sqrt_d;
      }
    return oracle_matmul(oracle_row_softmax(scores), gamma);
  };
  auto z_text = branch(x_t, w_beta, w_gamma);
  auto z_img = branch(g_i, w_beta_p, w_gamma_p);
  Tensor<T> out({z_text.dim(0), z_text.dim(1)});
  for (int64_t i = 0; i < out.size(); ++i) out[i] = z_text[i] + z_img[i];
  return out;
}

/// channel Gram matrix G = F F^T / (C h w) of a C x h x w feature map
template <typename T>
Tensor<T> oracle_gram(const Tensor<T>& f) {
  const int C = f.dim(0);
  const int64_t n = static_cast<int64_t>(f.dim(1)) * f.dim(2);
  const T inv = T(1) / static_cast<T>(C * n);
  Tensor<T> g({C, C});
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) {
      T acc = T(0);
      for (int64_t p = 0; p < n; ++p) acc += f[i * n + p] * f[j * n + p];
      g.at(i, j) = acc * inv;
    }
  return g;
}

/// mean SSIM over valid sliding windows, one window at a time
template <typename T>
T oracle_ssim(const Tensor<T>& a, const Tensor<T>& b, int window, T k1, T k2, T range) {
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const T c1 = (k1 * range) * (k1 * range);
  const T c2 = (k2 * range) * (k2 * range);
  const T n = static_cast<T>(window * window);
  T acc = T(0);
  int64_t count = 0;
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y + window <= H; ++y) {
      for (int x = 0; x + window <= W; ++x) {
        T sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < window; ++dy) {
          for (int dx = 0; dx < window; ++dx) {
            const T va = a.at(c, y + dy, x + dx);
            const T vb = b.at(c, y + dy, x + dx);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const T mu_a = sa / n, mu_b = sb / n;
        const T var_a = saa / n - mu_a * mu_a;
        const T var_b = sbb / n - mu_b * mu_b;
        const T cov = sab / n - mu_a * mu_b;
        const T val = ((T(2) * mu_a * mu_b + c1) * (T(2) * cov + c2)) /
                      ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        acc += val;
        ++count;
      }
    }
  }
  return acc / static_cast<T>(count);
}

}  // namespace graviton::testing
