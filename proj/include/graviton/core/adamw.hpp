#pragma once

#include <cmath>
#include <map>
#include <string>

#include "graviton/core/param_store.hpp"

namespace graviton {

/// AdamW with decoupled weight decay:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
/// Only trainable parameters are updated; frozen entries stay bit-identical.
template <typename T>
class AdamW {
 public:
  AdamW(double lr, double beta1, double beta2, double weight_decay, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

  void step(ParamStore<T>& store, TapeBinding<T>& binding) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& name : store.names()) {
      if (!store.trainable(name)) continue;
      const Tensor<T>* g = binding.grad_of(name);
      if (g == nullptr) continue;
      auto& theta = store.value(name);
      auto& m = state_m_[name];
      auto& v = state_v_[name];
      if (m.data.empty()) {
        m = Tensor<T>(theta.shape);
        v = Tensor<T>(theta.shape);
      }
      for (int64_t i = 0; i < theta.size(); ++i) {
        const double gi = static_cast<double>((*g)[i]);
        double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
        double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double m_hat = mi / bc1;
        const double v_hat = vi / bc2;
        double upd = lr_ * m_hat / (std::sqrt(v_hat) + eps_) +
                     lr_ * weight_decay_ * static_cast<double>(theta[i]);
        theta[i] = static_cast<T>(static_cast<double>(theta[i]) - upd);
      }
    }
  }

  void set_learning_rate(double lr) { lr_ = lr; }
  int64_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, weight_decay_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Tensor<T>> state_m_;
  std::map<std::string, Tensor<T>> state_v_;
};

}  // namespace graviton
