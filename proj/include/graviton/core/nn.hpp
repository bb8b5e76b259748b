#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "graviton/core/param_store.hpp"
#include "graviton/core/rng.hpp"
#include "graviton/core/tape.hpp"

namespace graviton::nn {

inline constexpr double kLeakySlope = 0.1;

template <typename T>
void init_conv(ParamStore<T>& store, Rng& rng, const std::string& name, int cin, int cout,
               int k, bool zero_init = false) {
  Tensor<T> w({cout, cin, k, k});
  if (!zero_init) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    rng.fill_normal(w, stddev);
  }
  store.add(name + ".w", std::move(w));
  store.add(name + ".b", Tensor<T>({cout}));
}

template <typename T>
void init_linear(ParamStore<T>& store, Rng& rng, const std::string& name, int in, int out,
                 bool zero_init = false) {
  Tensor<T> w({in, out});
  if (!zero_init) {
    const double stddev = std::sqrt(1.0 / static_cast<double>(in));
    rng.fill_normal(w, stddev);
  }
  store.add(name + ".w", std::move(w));
  store.add(name + ".b", Tensor<T>({out}));
}

/// 1x1 conv initialized to the identity map (requires cin == cout)
template <typename T>
void init_conv1x1_identity(ParamStore<T>& store, const std::string& name, int channels) {
  Tensor<T> w({channels, channels, 1, 1});
  for (int c = 0; c < channels; ++c) w[static_cast<int64_t>(c) * channels + c] = T(1);
  store.add(name + ".w", std::move(w));
  store.add(name + ".b", Tensor<T>({channels}));
}

template <typename T>
Var<T> conv(TapeBinding<T>& bind, const std::string& name, Var<T> x, int stride, int pad) {
  return ops::conv2d(x, bind(name + ".w"), bind(name + ".b"), stride, pad);
}

/// row-major tokens {n, in} -> {n, out}
template <typename T>
Var<T> linear(TapeBinding<T>& bind, const std::string& name, Var<T> x) {
  return ops::add_row_bias(ops::matmul(x, bind(name + ".w")), bind(name + ".b"));
}

template <typename T>
Var<T> leaky(Var<T> x) {
  return ops::leaky_relu(x, static_cast<T>(kLeakySlope));
}

inline void conv_names(std::vector<std::string>& out, const std::string& name) {
  out.push_back(name + ".w");
  out.push_back(name + ".b");
}

}  // namespace graviton::nn
