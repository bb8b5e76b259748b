#pragma once

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "graviton/core/linalg.hpp"
#include "graviton/losses.hpp"

namespace graviton::metrics {

/// Mean local SSIM over valid sliding windows (uniform window), computed per
/// channel in double precision. Identical inputs give exactly 1.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, int window = 7, double k1 = 0.01,
            double k2 = 0.03, double range = 2.0) {
  GRAVITON_REQUIRE(a.same_shape(b), "ssim: shape mismatch");
  GRAVITON_REQUIRE(a.ndim() == 3, "ssim: expected C x H x W images");
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  GRAVITON_REQUIRE(H >= window && W >= window, "ssim: image ", H, "x", W,
                   " smaller than the ", window, "-pixel window");
  const double c1 = (k1 * range) * (k1 * range);
  const double c2 = (k2 * range) * (k2 * range);
  const double n = static_cast<double>(window) * window;

  // integral images per channel for the five window sums
  const int IH = H + 1, IW = W + 1;
  std::vector<double> ia(static_cast<size_t>(IH) * IW), ib(ia.size()), iaa(ia.size()),
      ibb(ia.size()), iab(ia.size());
  auto at = [IW](std::vector<double>& v, int y, int x) -> double& {
    return v[static_cast<size_t>(y) * IW + x];
  };

  double acc = 0;
  int64_t count = 0;
  for (int c = 0; c < C; ++c) {
    for (auto* v : {&ia, &ib, &iaa, &ibb, &iab}) std::fill(v->begin(), v->end(), 0.0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double va = static_cast<double>(a.at(c, y, x));
        const double vb = static_cast<double>(b.at(c, y, x));
        at(ia, y + 1, x + 1) = va + at(ia, y, x + 1) + at(ia, y + 1, x) - at(ia, y, x);
        at(ib, y + 1, x + 1) = vb + at(ib, y, x + 1) + at(ib, y + 1, x) - at(ib, y, x);
        at(iaa, y + 1, x + 1) = va * va + at(iaa, y, x + 1) + at(iaa, y + 1, x) - at(iaa, y, x);
        at(ibb, y + 1, x + 1) = vb * vb + at(ibb, y, x + 1) + at(ibb, y + 1, x) - at(ibb, y, x);
        at(iab, y + 1, x + 1) = va * vb + at(iab, y, x + 1) + at(iab, y + 1, x) - at(iab, y, x);
      }
    auto window_sum = [&](std::vector<double>& v, int y, int x) {
      return at(v, y + window, x + window) - at(v, y, x + window) - at(v, y + window, x) +
             at(v, y, x);
    };
    for (int y = 0; y + window <= H; ++y)
      for (int x = 0; x + window <= W; ++x) {
        const double mu_a = window_sum(ia, y, x) / n;
        const double mu_b = window_sum(ib, y, x) / n;
        const double var_a = window_sum(iaa, y, x) / n - mu_a * mu_a;
        const double var_b = window_sum(ibb, y, x) / n - mu_b * mu_b;
        const double cov = window_sum(iab, y, x) / n - mu_a * mu_b;
        acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        ++count;
      }
  }
  return acc / static_cast<double>(count);
}

/// tap-weighted squared L2 distance in the frozen feature space; a stand-in
/// for LPIPS that makes no claim of comparability with pretrained networks
template <typename T>
double lpips_proxy(const FixedFeatureNet<T>& net, const Tensor<T>& a, const Tensor<T>& b) {
  GRAVITON_REQUIRE(a.same_shape(b), "lpips_proxy: shape mismatch");
  auto taps_a = net.taps_plain(a);
  auto taps_b = net.taps_plain(b);
  double total = 0;
  for (size_t i = 0; i < taps_a.size(); ++i) {
    double acc = 0;
    for (int64_t j = 0; j < taps_a[i].size(); ++j) {
      const double d = static_cast<double>(taps_a[i][j]) - static_cast<double>(taps_b[i][j]);
      acc += d * d;
    }
    total += acc / static_cast<double>(taps_a[i].size());
  }
  return total / static_cast<double>(taps_a.size());
}

namespace detail {

struct Gaussian {
  Tensor<double> mean;  // {d}
  Tensor<double> cov;   // {d, d}, unbiased
};

template <typename T>
Gaussian fit_gaussian(const Tensor<T>& feats) {
  const int n = feats.dim(0), d = feats.dim(1);
  GRAVITON_REQUIRE(n >= 2, "need at least two feature rows");
  Gaussian g{Tensor<double>({d}), Tensor<double>({d, d})};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) g.mean[j] += static_cast<double>(feats.at(i, j));
  for (auto& v : g.mean.data) v /= n;
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < d; ++p) {
      const double dp = static_cast<double>(feats.at(i, p)) - g.mean[p];
      for (int q = 0; q < d; ++q) {
        const double dq = static_cast<double>(feats.at(i, q)) - g.mean[q];
        g.cov.at(p, q) += dp * dq;
      }
    }
  for (auto& v : g.cov.data) v /= (n - 1);
  return g;
}

/// symmetric PSD square root by eigendecomposition, negative modes clipped
inline Tensor<double> psd_sqrt(const Tensor<double>& m, bool* clipped) {
  auto eig = jacobi_eigh(m);
  const int d = m.dim(0);
  for (int i = 0; i < d; ++i) {
    if (eig.values[i] < -1e-8 && clipped != nullptr) *clipped = true;
    eig.values[i] = std::sqrt(std::max(0.0, eig.values[i]));
  }
  Tensor<double> out({d, d});
  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q) {
      double acc = 0;
      for (int k = 0; k < d; ++k) acc += eig.vectors.at(p, k) * eig.values[k] * eig.vectors.at(q, k);
      out.at(p, q) = acc;
    }
  return out;
}

inline Tensor<double> matmul_dd(const Tensor<double>& a, const Tensor<double>& b) {
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor<double> out({n, m});
  for (int i = 0; i < n; ++i)
    for (int kk = 0; kk < k; ++kk) {
      const double av = a.at(i, kk);
      for (int j = 0; j < m; ++j) out.at(i, j) += av * b.at(kk, j);
    }
  return out;
}

}  // namespace detail

/// Frechet distance between Gaussian fits of two feature sets:
///   ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})
/// The cross square root is computed as sqrt(S) S_b sqrt(S) which is
/// symmetric PSD; negative eigenvalues are clipped at zero with a warning.
template <typename T>
double fid(const Tensor<T>& feats_a, const Tensor<T>& feats_b) {
  GRAVITON_REQUIRE(feats_a.ndim() == 2 && feats_b.ndim() == 2 &&
                       feats_a.dim(1) == feats_b.dim(1),
                   "fid: feature width mismatch");
  auto ga = detail::fit_gaussian(feats_a);
  auto gb = detail::fit_gaussian(feats_b);
  const int d = ga.mean.dim(0);

  double mean_term = 0;
  for (int j = 0; j < d; ++j) {
    const double diff = ga.mean[j] - gb.mean[j];
    mean_term += diff * diff;
  }
  bool clipped = false;
  auto root_a = detail::psd_sqrt(ga.cov, &clipped);
  auto inner = detail::matmul_dd(detail::matmul_dd(root_a, gb.cov), root_a);
  // symmetrize before the second root
  for (int p = 0; p < d; ++p)
    for (int q = p + 1; q < d; ++q) {
      const double avg = 0.5 * (inner.at(p, q) + inner.at(q, p));
      inner.at(p, q) = avg;
      inner.at(q, p) = avg;
    }
  auto eig = jacobi_eigh(inner);
  double trace_cross = 0;
  for (int i = 0; i < d; ++i) {
    if (eig.values[i] < -1e-8) clipped = true;
    trace_cross += std::sqrt(std::max(0.0, eig.values[i]));
  }
  if (clipped) {
    std::cerr << "[graviton] warning: fid covariance sqrt clipped negative eigenvalues\n";
  }
  double trace_term = 0;
  for (int p = 0; p < d; ++p) trace_term += ga.cov.at(p, p) + gb.cov.at(p, p);
  return mean_term + trace_term - 2.0 * trace_cross;
}

/// Unbiased squared MMD with the polynomial kernel (x.y / d + 1)^3. For equal
/// sample counts the paired estimator is used, which vanishes identically on
/// identical sets.
template <typename T>
double kid(const Tensor<T>& feats_a, const Tensor<T>& feats_b) {
  GRAVITON_REQUIRE(feats_a.ndim() == 2 && feats_b.ndim() == 2 &&
                       feats_a.dim(1) == feats_b.dim(1),
                   "kid: feature width mismatch");
  const int n = feats_a.dim(0), m = feats_b.dim(0), d = feats_a.dim(1);
  GRAVITON_REQUIRE(n >= 2 && m >= 2, "kid: need at least two rows per set");
  auto kernel = [&](const Tensor<T>& xa, int i, const Tensor<T>& xb, int j) {
    double dot = 0;
    for (int k = 0; k < d; ++k)
      dot += static_cast<double>(xa.at(i, k)) * static_cast<double>(xb.at(j, k));
    const double base = dot / d + 1.0;
    return base * base * base;
  };
  if (n == m) {
    double acc = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        acc += kernel(feats_a, i, feats_a, j) + kernel(feats_b, i, feats_b, j) -
               kernel(feats_a, i, feats_b, j) - kernel(feats_a, j, feats_b, i);
      }
    return acc / (static_cast<double>(n) * (n - 1));
  }
  double kaa = 0, kbb = 0, kab = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) kaa += kernel(feats_a, i, feats_a, j);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (i != j) kbb += kernel(feats_b, i, feats_b, j);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) kab += kernel(feats_a, i, feats_b, j);
  return kaa / (static_cast<double>(n) * (n - 1)) + kbb / (static_cast<double>(m) * (m - 1)) -
         2.0 * kab / (static_cast<double>(n) * m);
}

struct MetricReport {
  double ssim = 0;
  double lpips_proxy = 0;
  double fid_paired = 0;
  double kid_paired = 0;
  double fid_unpaired = 0;
  double kid_unpaired = 0;
  int samples = 0;

  std::string to_kv() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "ssim=%.17g\nlpips_proxy=%.17g\nfid_p=%.17g\nkid_p=%.17g\nfid_u=%.17g\n"
                  "kid_u=%.17g\nsamples=%d\n",
                  ssim, lpips_proxy, fid_paired, kid_paired, fid_unpaired, kid_unpaired,
                  samples);
    return buf;
  }

  std::string to_table() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "setting   ssim     lpips*   fid      kid\n"
                  "paired    %-8.4f %-8.4f %-8.4f %-8.4f\n"
                  "unpaired  -        -        %-8.4f %-8.4f\n",
                  ssim, lpips_proxy, fid_paired, kid_paired, fid_unpaired, kid_unpaired);
    return buf;
  }
};

}  // namespace graviton::metrics
