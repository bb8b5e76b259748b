#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "graviton/core/tensor.hpp"

namespace graviton {

/// Reverse-mode autodiff over Tensor<T>. Each op records its output and a
/// backward closure; backward(root) walks the recording in reverse. Nodes are
/// appended in topological order by construction, so one reverse sweep is
/// enough. A fresh tape is built per training step and cleared afterwards.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    std::function<void(Tape&, int)> backward;  // null for leaves/constants
  };

  int push(Tensor<T> value, std::function<void(Tape&, int)> bwd) {
    if (check_finite_ && !value.all_finite()) {
      throw error("non-finite values produced on tape (contract violation)");
    }
    nodes_.push_back(Node{std::move(value), std::move(bwd)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor<T>& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }

  Tensor<T>& grad(int id) {
    auto& g = grads_[static_cast<size_t>(id)];
    if (g.data.empty()) g = Tensor<T>(nodes_[static_cast<size_t>(id)].value.shape);
    return g;
  }

  bool has_grad(int id) const {
    return id < static_cast<int>(grads_.size()) && !grads_[static_cast<size_t>(id)].data.empty();
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
  void backward(int root) {
    GRAVITON_REQUIRE(root >= 0 && root < static_cast<int>(nodes_.size()), "bad root id");
    GRAVITON_REQUIRE(value(root).size() == 1, "backward root must be scalar");
    grads_.assign(nodes_.size(), Tensor<T>{});
    grad(root)[0] = T(1);
    for (int i = root; i >= 0; --i) {
      auto& node = nodes_[static_cast<size_t>(i)];
      if (node.backward && has_grad(i)) node.backward(*this, i);
    }
  }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

  size_t node_count() const { return nodes_.size(); }
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  bool check_finite_ = true;
};

/// Handle to a tape node.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;
  const Tensor<T>& val() const { return tape->value(id); }
  const std::vector<int>& shape() const { return val().shape; }
};

namespace ops {

template <typename T>
Var<T> leaf(Tape<T>& tape, Tensor<T> value) {
  return {&tape, tape.push(std::move(value), nullptr)};
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  GRAVITON_REQUIRE(a.val().same_shape(b.val()), "add: shape mismatch");
  Tensor<T> out = a.val();
  const auto& bv = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  int pa = a.id, pb = b.id;
  int id = a.tape->push(std::move(out), [pa, pb](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    auto& gb = t.grad(pb);
    for (int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
  return {a.tape, id};
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  GRAVITON_REQUIRE(a.val().same_shape(b.val()), "sub: shape mismatch");
  Tensor<T> out = a.val();
  const auto& bv = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  int pa = a.id, pb = b.id;
  int id = a.tape->push(std::move(out), [pa, pb](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    auto& gb = t.grad(pb);
    for (int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
  return {a.tape, id};
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  GRAVITON_REQUIRE(a.val().same_shape(b.val()), "mul: shape mismatch");
  Tensor<T> out = a.val();
  const auto& bv = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  int pa = a.id, pb = b.id;
  int id = a.tape->push(std::move(out), [pa, pb](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(pa);
    const auto& bv2 = t.value(pb);
    auto& ga = t.grad(pa);
    auto& gb = t.grad(pb);
    for (int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv2[i];
      gb[i] += g[i] * av[i];
    }
  });
  return {a.tape, id};
}

template <typename T>
Var<T> mul_scalar(Var<T> a, T s) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v *= s;
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, s](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
  return {a.tape, id};
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v += s;
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return {a.tape, id};
}

template <typename T>
Var<T> neg(Var<T> a) {
  return mul_scalar(a, T(-1));
}

template <typename T>
Var<T> leaky_relu(Var<T> a, T slope) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = v > T(0) ? v : slope * v;
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, slope](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(pa);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (x[i] > T(0) ? T(1) : slope);
  });
  return {a.tape, id};
}

template <typename T>
Var<T> relu(Var<T> a) {
  return leaky_relu(a, T(0));
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& s = t.value(self);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (T(1) - s[i]);
  });
  return {a.tape, id};
}

template <typename T>
Var<T> tanh_act(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::tanh(v);
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
  return {a.tape, id};
}

template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::min(hi, std::max(lo, v));
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, lo, hi](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(pa);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < g.size(); ++i) {
      if (x[i] > lo && x[i] < hi) ga[i] += g[i];
    }
  });
  return {a.tape, id};
}

template <typename T>
Var<T> abs_val(Var<T> a) {
  Tensor<T> out = a.val();
  for (auto& v : out.data) v = std::abs(v);
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(pa);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < g.size(); ++i) {
      T s = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
      ga[i] += g[i] * s;
    }
  });
  return {a.tape, id};
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(Var<T> a) {
  Tensor<T> out({1});
  T acc = T(0);
  for (const auto& v : a.val().data) acc += v;
  out[0] = acc;
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa](Tape<T>& t, int self) {
    const T g = t.grad(self)[0];
    auto& ga = t.grad(pa);
    for (auto& v : ga.data) v += g;
  });
  return {a.tape, id};
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  const T inv = T(1) / static_cast<T>(a.val().size());
  return mul_scalar(sum_all(a), inv);
}

/// n x d -> 1 x d column means
template <typename T>
Var<T> mean_rows(Var<T> a) {
  GRAVITON_REQUIRE(a.val().ndim() == 2, "mean_rows expects a matrix");
  const int n = a.val().dim(0), d = a.val().dim(1);
  Tensor<T> out({1, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[j] += a.val().at(i, j);
  const T inv = T(1) / static_cast<T>(n);
  for (auto& v : out.data) v *= inv;
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, n, d, inv](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) ga.at(i, j) += g[j] * inv;
  });
  return {a.tape, id};
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  GRAVITON_REQUIRE(a.val().ndim() == 2 && b.val().ndim() == 2, "matmul expects matrices");
  const int n = a.val().dim(0), k = a.val().dim(1), m = b.val().dim(1);
  GRAVITON_REQUIRE(b.val().dim(0) == k, "matmul: inner dims differ: ", k, " vs ", b.val().dim(0));
  Tensor<T> out({n, m});
  {
    const T* A = a.val().data.data();
    const T* B = b.val().data.data();
    T* C = out.data.data();
    for (int i = 0; i < n; ++i) {
      for (int kk = 0; kk < k; ++kk) {
        const T av = A[i * k + kk];
        const T* brow = B + static_cast<size_t>(kk) * m;
        T* crow = C + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  }
  int pa = a.id, pb = b.id;
  int id = a.tape->push(std::move(out), [pa, pb, n, k, m](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& A = t.value(pa);
    const auto& B = t.value(pb);
    auto& ga = t.grad(pa);
    auto& gb = t.grad(pb);
    // dA = g . B^T
    for (int i = 0; i < n; ++i) {
      for (int kk = 0; kk < k; ++kk) {
        T acc = T(0);
        const T* grow = &g[static_cast<int64_t>(i) * m];
        const T* brow = &B[static_cast<int64_t>(kk) * m];
        for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
        ga[static_cast<int64_t>(i) * k + kk] += acc;
      }
    }
    // dB = A^T . g
    for (int kk = 0; kk < k; ++kk) {
      for (int i = 0; i < n; ++i) {
        const T av = A[static_cast<int64_t>(i) * k + kk];
        const T* grow = &g[static_cast<int64_t>(i) * m];
        T* gbrow = &gb[static_cast<int64_t>(kk) * m];
        for (int j = 0; j < m; ++j) gbrow[j] += av * grow[j];
      }
    }
  });
  return {a.tape, id};
}

template <typename T>
Var<T> transpose(Var<T> a) {
  GRAVITON_REQUIRE(a.val().ndim() == 2, "transpose expects a matrix");
  const int n = a.val().dim(0), m = a.val().dim(1);
  Tensor<T> out({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(j, i) = a.val().at(i, j);
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, n, m](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga.at(i, j) += g.at(j, i);
  });
  return {a.tape, id};
}

/// matrix + broadcast row vector {d} or {1,d}
template <typename T>
Var<T> add_row_bias(Var<T> a, Var<T> b) {
  GRAVITON_REQUIRE(a.val().ndim() == 2, "add_row_bias expects a matrix");
  const int n = a.val().dim(0), d = a.val().dim(1);
  GRAVITON_REQUIRE(b.val().size() == d, "add_row_bias: bias width mismatch");
  Tensor<T> out = a.val();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) += b.val()[j];
  int pa = a.id, pb = b.id;
  int id = a.tape->push(std::move(out), [pa, pb, n, d](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    auto& gb = t.grad(pb);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        ga.at(i, j) += g.at(i, j);
        gb[j] += g.at(i, j);
      }
  });
  return {a.tape, id};
}

/// matrix * broadcast row vector {d} or {1, d}
template <typename T>
Var<T> mul_row(Var<T> a, Var<T> v) {
  GRAVITON_REQUIRE(a.val().ndim() == 2, "mul_row expects a matrix");
  const int n = a.val().dim(0), d = a.val().dim(1);
  GRAVITON_REQUIRE(v.val().size() == d, "mul_row: vector width mismatch");
  Tensor<T> out = a.val();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) *= v.val()[j];
  int pa = a.id, pv = v.id;
  int id = a.tape->push(std::move(out), [pa, pv, n, d](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(pa);
    const auto& vv = t.value(pv);
    auto& ga = t.grad(pa);
    auto& gv = t.grad(pv);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        ga.at(i, j) += g.at(i, j) * vv[j];
        gv[j] += g.at(i, j) * av.at(i, j);
      }
  });
  return {a.tape, id};
}

/// multiply a tensor by a scalar-valued Var (shape {1})
template <typename T>
Var<T> mul_by_scalar_var(Var<T> x, Var<T> s) {
  GRAVITON_REQUIRE(s.val().size() == 1, "mul_by_scalar_var: scale must be scalar");
  const T sv = s.val()[0];
  Tensor<T> out = x.val();
  for (auto& v : out.data) v *= sv;
  int px = x.id, ps = s.id;
  int id = x.tape->push(std::move(out), [px, ps](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(px);
    const T scale = t.value(ps)[0];
    auto& gx = t.grad(px);
    auto& gs = t.grad(ps);
    T acc = T(0);
    for (int64_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * scale;
      acc += g[i] * xv[i];
    }
    gs[0] += acc;
  });
  return {x.tape, id};
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  GRAVITON_REQUIRE(a.val().ndim() == 2, "softmax_rows expects a matrix");
  const int n = a.val().dim(0), m = a.val().dim(1);
  Tensor<T> out = a.val();
  for (int i = 0; i < n; ++i) {
    T mx = out.at(i, 0);
    for (int j = 1; j < m; ++j) mx = std::max(mx, out.at(i, j));
    T sum = T(0);
    for (int j = 0; j < m; ++j) {
      T e = std::exp(out.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < m; ++j) out.at(i, j) *= inv;
  }
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, n, m](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& s = t.value(self);
    auto& ga = t.grad(pa);
    for (int i = 0; i < n; ++i) {
      T dot = T(0);
      for (int j = 0; j < m; ++j) dot += g.at(i, j) * s.at(i, j);
      for (int j = 0; j < m; ++j) ga.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
    }
  });
  return {a.tape, id};
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
  GRAVITON_REQUIRE(Tensor<T>::numel(shape) == a.val().size(), "reshape: element count mismatch");
  Tensor<T> out;
  out.shape = std::move(shape);
  out.data = a.val().data;
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return {a.tape, id};
}

/// C x h x w -> (h*w) x C token matrix
template <typename T>
Var<T> tokens_from_chw(Var<T> a) {
  GRAVITON_REQUIRE(a.val().ndim() == 3, "tokens_from_chw expects C x H x W");
  const int c = a.val().dim(0), h = a.val().dim(1), w = a.val().dim(2);
  Tensor<T> out({h * w, c});
  for (int ci = 0; ci < c; ++ci)
    for (int p = 0; p < h * w; ++p) out.at(p, ci) = a.val()[static_cast<int64_t>(ci) * h * w + p];
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, c, h, w](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int ci = 0; ci < c; ++ci)
      for (int p = 0; p < h * w; ++p) ga[static_cast<int64_t>(ci) * h * w + p] += g.at(p, ci);
  });
  return {a.tape, id};
}

/// (h*w) x C token matrix -> C x h x w
template <typename T>
Var<T> chw_from_tokens(Var<T> a, int h, int w) {
  GRAVITON_REQUIRE(a.val().ndim() == 2 && a.val().dim(0) == h * w,
                   "chw_from_tokens: token count mismatch");
  const int c = a.val().dim(1);
  Tensor<T> out({c, h, w});
  for (int ci = 0; ci < c; ++ci)
    for (int p = 0; p < h * w; ++p) out[static_cast<int64_t>(ci) * h * w + p] = a.val().at(p, ci);
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, c, h, w](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int ci = 0; ci < c; ++ci)
      for (int p = 0; p < h * w; ++p) ga.at(p, ci) += g[static_cast<int64_t>(ci) * h * w + p];
  });
  return {a.tape, id};
}

template <typename T>
Var<T> concat_ch(Var<T> a, Var<T> b) {
  GRAVITON_REQUIRE(a.val().ndim() == 3 && b.val().ndim() == 3, "concat_ch expects maps");
  GRAVITON_REQUIRE(a.val().dim(1) == b.val().dim(1) && a.val().dim(2) == b.val().dim(2),
                   "concat_ch: spatial mismatch");
  const int ca = a.val().dim(0), cb = b.val().dim(0);
  const int h = a.val().dim(1), w = a.val().dim(2);
  Tensor<T> out({ca + cb, h, w});
  std::copy(a.val().data.begin(), a.val().data.end(), out.data.begin());
  std::copy(b.val().data.begin(), b.val().data.end(),
            out.data.begin() + static_cast<int64_t>(ca) * h * w);
  int pa = a.id, pb = b.id;
  int id = a.tape->push(std::move(out), [pa, pb, ca, cb, h, w](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    auto& gb = t.grad(pb);
    const int64_t na = static_cast<int64_t>(ca) * h * w;
    const int64_t nb = static_cast<int64_t>(cb) * h * w;
    for (int64_t i = 0; i < na; ++i) ga[i] += g[i];
    for (int64_t i = 0; i < nb; ++i) gb[i] += g[na + i];
  });
  return {a.tape, id};
}

template <typename T>
Var<T> slice_ch(Var<T> a, int c0, int c1) {
  GRAVITON_REQUIRE(a.val().ndim() == 3, "slice_ch expects a map");
  const int c = a.val().dim(0), h = a.val().dim(1), w = a.val().dim(2);
  GRAVITON_REQUIRE(0 <= c0 && c0 < c1 && c1 <= c, "slice_ch: bad channel range");
  Tensor<T> out({c1 - c0, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::copy(a.val().data.begin() + c0 * plane, a.val().data.begin() + c1 * plane,
            out.data.begin());
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, c0, c1, plane](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int64_t i = 0; i < (c1 - c0) * plane; ++i) ga[c0 * plane + i] += g[i];
  });
  return {a.tape, id};
}

/// matrix column range [c0, c1)
template <typename T>
Var<T> slice_cols(Var<T> a, int c0, int c1) {
  GRAVITON_REQUIRE(a.val().ndim() == 2, "slice_cols expects a matrix");
  const int n = a.val().dim(0), m = a.val().dim(1);
  GRAVITON_REQUIRE(0 <= c0 && c0 < c1 && c1 <= m, "slice_cols: bad column range");
  Tensor<T> out({n, c1 - c0});
  for (int i = 0; i < n; ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = a.val().at(i, j);
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, n, c0, c1](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int i = 0; i < n; ++i)
      for (int j = c0; j < c1; ++j) ga.at(i, j) += g.at(i, j - c0);
  });
  return {a.tape, id};
}

/// crop a map to top-left h x w window (used to undo odd-size upsampling)
template <typename T>
Var<T> crop_spatial(Var<T> a, int h, int w) {
  GRAVITON_REQUIRE(a.val().ndim() == 3, "crop_spatial expects a map");
  const int c = a.val().dim(0), H = a.val().dim(1), W = a.val().dim(2);
  GRAVITON_REQUIRE(h <= H && w <= W, "crop_spatial: target larger than source");
  Tensor<T> out({c, h, w});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(ci, y, x) = a.val().at(ci, y, x);
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, c, h, w](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) ga.at(ci, y, x) += g.at(ci, y, x);
  });
  return {a.tape, id};
}

// ---------------------------------------------------------------------------
// map ops (C x H x W)
// ---------------------------------------------------------------------------

/// 2d convolution over C x H x W with zero padding.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  const auto& xv = x.val();
  const auto& wv = w.val();
  GRAVITON_REQUIRE(xv.ndim() == 3 && wv.ndim() == 4, "conv2d: bad ranks");
  const int cin = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  GRAVITON_REQUIRE(wv.dim(1) == cin, "conv2d: input channel mismatch: ", wv.dim(1), " vs ", cin);
  GRAVITON_REQUIRE(b.val().size() == cout, "conv2d: bias size mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  GRAVITON_REQUIRE(Ho > 0 && Wo > 0, "conv2d: empty output");

  Tensor<T> out({cout, Ho, Wo});
  {
    const T* X = xv.data.data();
    const T* K = wv.data.data();
    T* O = out.data.data();
    for (int co = 0; co < cout; ++co) {
      T* oplane = O + static_cast<size_t>(co) * Ho * Wo;
      const T bias = b.val()[co];
      for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) oplane[i] = bias;
      for (int ci = 0; ci < cin; ++ci) {
        const T* xplane = X + static_cast<size_t>(ci) * H * W;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const T kval = K[((static_cast<size_t>(co) * cin + ci) * kh + ky) * kw + kx];
            int ox_lo = 0;
            while (ox_lo * stride + kx - pad < 0) ++ox_lo;
            int ox_hi = Wo - 1;
            while (ox_hi >= 0 && ox_hi * stride + kx - pad > W - 1) --ox_hi;
            for (int oy = 0; oy < Ho; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              const T* xrow = xplane + static_cast<size_t>(iy) * W + (kx - pad);
              T* orow = oplane + static_cast<size_t>(oy) * Wo;
              for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += kval * xrow[ox * stride];
            }
          }
        }
      }
    }
  }

  int px = x.id, pw = w.id, pb = b.id;
  int id = x.tape->push(
      std::move(out), [px, pw, pb, cin, cout, H, W, Ho, Wo, kh, kw, stride, pad](Tape<T>& t,
                                                                                 int self) {
        const auto& g = t.grad(self);
        const auto& xv2 = t.value(px);
        const auto& wv2 = t.value(pw);
        auto& gx = t.grad(px);
        auto& gw = t.grad(pw);
        auto& gb = t.grad(pb);
        for (int co = 0; co < cout; ++co) {
          const T* gplane = &g[static_cast<int64_t>(co) * Ho * Wo];
          T acc_b = T(0);
          for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) acc_b += gplane[i];
          gb[co] += acc_b;
          for (int ci = 0; ci < cin; ++ci) {
            const T* xplane = &xv2[static_cast<int64_t>(ci) * H * W];
            T* gxplane = &gx[static_cast<int64_t>(ci) * H * W];
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int64_t widx = ((static_cast<int64_t>(co) * cin + ci) * kh + ky) * kw + kx;
                const T kval = wv2[widx];
                T acc_w = T(0);
                int ox_lo = 0;
                while (ox_lo * stride + kx - pad < 0) ++ox_lo;
                int ox_hi = Wo - 1;
                while (ox_hi >= 0 && ox_hi * stride + kx - pad > W - 1) --ox_hi;
                for (int oy = 0; oy < Ho; ++oy) {
                  const int iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= H) continue;
                  const T* xrow = xplane + static_cast<size_t>(iy) * W + (kx - pad);
                  T* gxrow = gxplane + static_cast<size_t>(iy) * W + (kx - pad);
                  const T* grow = gplane + static_cast<size_t>(oy) * Wo;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                    const T gv = grow[ox];
                    acc_w += gv * xrow[ox * stride];
                    gxrow[ox * stride] += kval * gv;
                  }
                }
                gw[widx] += acc_w;
              }
            }
          }
        }
      });
  return {x.tape, id};
}

template <typename T>
Var<T> nearest_up2(Var<T> a) {
  GRAVITON_REQUIRE(a.val().ndim() == 3, "nearest_up2 expects a map");
  const int c = a.val().dim(0), h = a.val().dim(1), w = a.val().dim(2);
  Tensor<T> out({c, h * 2, w * 2});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < 2 * w; ++x) out.at(ci, y, x) = a.val().at(ci, y / 2, x / 2);
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, c, h, w](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < 2 * h; ++y)
        for (int x = 0; x < 2 * w; ++x) ga.at(ci, y / 2, x / 2) += g.at(ci, y, x);
  });
  return {a.tape, id};
}

/// C x H x W -> {C} per-channel spatial means
template <typename T>
Var<T> global_avg_pool(Var<T> a) {
  GRAVITON_REQUIRE(a.val().ndim() == 3, "global_avg_pool expects a map");
  const int c = a.val().dim(0), h = a.val().dim(1), w = a.val().dim(2);
  const T inv = T(1) / static_cast<T>(h * w);
  Tensor<T> out({c});
  for (int ci = 0; ci < c; ++ci) {
    T acc = T(0);
    for (int p = 0; p < h * w; ++p) acc += a.val()[static_cast<int64_t>(ci) * h * w + p];
    out[ci] = acc * inv;
  }
  int pa = a.id;
  int id = a.tape->push(std::move(out), [pa, c, h, w, inv](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (int ci = 0; ci < c; ++ci)
      for (int p = 0; p < h * w; ++p) ga[static_cast<int64_t>(ci) * h * w + p] += g[ci] * inv;
  });
  return {a.tape, id};
}

/// multiply map channels by a {C} vector
template <typename T>
Var<T> scale_channels(Var<T> x, Var<T> s) {
  GRAVITON_REQUIRE(x.val().ndim() == 3 && x.val().dim(0) == static_cast<int>(s.val().size()),
                   "scale_channels: channel mismatch");
  const int c = x.val().dim(0);
  const int64_t plane = static_cast<int64_t>(x.val().dim(1)) * x.val().dim(2);
  Tensor<T> out = x.val();
  for (int ci = 0; ci < c; ++ci)
    for (int64_t p = 0; p < plane; ++p) out[ci * plane + p] *= s.val()[ci];
  int px = x.id, ps = s.id;
  int id = x.tape->push(std::move(out), [px, ps, c, plane](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(px);
    const auto& sv = t.value(ps);
    auto& gx = t.grad(px);
    auto& gs = t.grad(ps);
    for (int ci = 0; ci < c; ++ci) {
      T acc = T(0);
      for (int64_t p = 0; p < plane; ++p) {
        gx[ci * plane + p] += g[ci * plane + p] * sv[ci];
        acc += g[ci * plane + p] * xv[ci * plane + p];
      }
      gs[ci] += acc;
    }
  });
  return {x.tape, id};
}

/// add a {C} vector to every spatial position
template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> b) {
  GRAVITON_REQUIRE(x.val().ndim() == 3 && x.val().dim(0) == static_cast<int>(b.val().size()),
                   "add_channel_bias: channel mismatch");
  const int c = x.val().dim(0);
  const int64_t plane = static_cast<int64_t>(x.val().dim(1)) * x.val().dim(2);
  Tensor<T> out = x.val();
  for (int ci = 0; ci < c; ++ci)
    for (int64_t p = 0; p < plane; ++p) out[ci * plane + p] += b.val()[ci];
  int px = x.id, pb = b.id;
  int id = x.tape->push(std::move(out), [px, pb, c, plane](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(px);
    auto& gb = t.grad(pb);
    for (int ci = 0; ci < c; ++ci) {
      T acc = T(0);
      for (int64_t p = 0; p < plane; ++p) {
        gx[ci * plane + p] += g[ci * plane + p];
        acc += g[ci * plane + p];
      }
      gb[ci] += acc;
    }
  });
  return {x.tape, id};
}

/// multiply a C x H x W map by a 1 x H x W map, broadcast over channels
template <typename T>
Var<T> mul_spatial(Var<T> x, Var<T> m) {
  GRAVITON_REQUIRE(x.val().ndim() == 3 && m.val().ndim() == 3 && m.val().dim(0) == 1 &&
                       m.val().dim(1) == x.val().dim(1) && m.val().dim(2) == x.val().dim(2),
                   "mul_spatial: shape mismatch");
  const int c = x.val().dim(0);
  const int64_t plane = static_cast<int64_t>(x.val().dim(1)) * x.val().dim(2);
  Tensor<T> out = x.val();
  for (int ci = 0; ci < c; ++ci)
    for (int64_t p = 0; p < plane; ++p) out[ci * plane + p] *= m.val()[p];
  int px = x.id, pm = m.id;
  int id = x.tape->push(std::move(out), [px, pm, c, plane](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(px);
    const auto& mv = t.value(pm);
    auto& gx = t.grad(px);
    auto& gm = t.grad(pm);
    for (int ci = 0; ci < c; ++ci)
      for (int64_t p = 0; p < plane; ++p) {
        gx[ci * plane + p] += g[ci * plane + p] * mv[p];
        gm[p] += g[ci * plane + p] * xv[ci * plane + p];
      }
  });
  return {x.tape, id};
}

}  // namespace ops
}  // namespace graviton
