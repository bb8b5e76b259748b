#pragma once

#include <cmath>

#include "graviton/core/tensor.hpp"

namespace graviton {

struct EigResult {
  Tensor<double> values;   // {n}, ascending
  Tensor<double> vectors;  // {n, n}, column j pairs with values[j]
};

/// Cyclic Jacobi eigendecomposition for symmetric matrices. The problem sizes
/// here (feature dims <= 64) make this exact to machine precision and keep the
/// metric stack dependency-free.
inline EigResult jacobi_eigh(const Tensor<double>& m, int max_sweeps = 64) {
  GRAVITON_REQUIRE(m.ndim() == 2 && m.dim(0) == m.dim(1), "jacobi_eigh expects a square matrix");
  const int n = m.dim(0);
  Tensor<double> a = m;
  // enforce symmetry before rotating
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (a.at(i, j) + a.at(j, i));
      a.at(i, j) = avg;
      a.at(j, i) = avg;
    }
  Tensor<double> v({n, n});
  for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
    if (off < 1e-26) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  EigResult res{Tensor<double>({n}), v};
  for (int i = 0; i < n; ++i) res.values[i] = a.at(i, i);
  // sort ascending, permuting vector columns alongside
  for (int i = 0; i < n - 1; ++i) {
    int best = i;
    for (int j = i + 1; j < n; ++j)
      if (res.values[j] < res.values[best]) best = j;
    if (best != i) {
      std::swap(res.values[i], res.values[best]);
      for (int k = 0; k < n; ++k) std::swap(res.vectors.at(k, i), res.vectors.at(k, best));
    }
  }
  return res;
}

}  // namespace graviton
