#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "graviton/core/nn.hpp"

namespace graviton {

/// Background convention: synthetic scenes use mid-gray (0) background, so a
/// pixel carries garment/foreground content when any channel exceeds this
/// margin in magnitude. Shared by the occlusion-aware loss and the stage-2
/// mask derivation.
inline constexpr double kForegroundTau = 0.05;

/// 1 x H x W binary map: 1 where any channel of img has |value| > tau
template <typename T>
Tensor<T> foreground_mask(const Tensor<T>& img, double tau = kForegroundTau) {
  GRAVITON_REQUIRE(img.ndim() == 3, "foreground_mask expects C x H x W");
  GRAVITON_REQUIRE(tau > 0 && tau < 1, "foreground_mask: tau must lie in (0,1)");
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor<T> mask({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      bool on = false;
      for (int c = 0; c < C && !on; ++c) on = std::abs(static_cast<double>(img.at(c, y, x))) > tau;
      mask.at(0, y, x) = on ? T(1) : T(0);
    }
  return mask;
}

/// Occlusion-aware warp loss: mean absolute difference over garment-present
/// pixels of the ground-truth warp only. Pixels the ground truth lost to
/// self-occlusion (burned-in holes) carry zero weight, so the network is free
/// to hallucinate a complete garment there.
template <typename T>
Var<T> owl_loss(Tape<T>& tape, Var<T> pred, const Tensor<T>& gt_warp, double tau = kForegroundTau,
                bool* degenerate = nullptr) {
  GRAVITON_REQUIRE(pred.val().same_shape(gt_warp), "owl_loss: shape mismatch");
  const int C = gt_warp.dim(0);
  Tensor<T> mask = foreground_mask(gt_warp, tau);
  double mask_sum = 0;
  for (const auto& v : mask.data) mask_sum += static_cast<double>(v);
  if (degenerate != nullptr) *degenerate = mask_sum == 0;
  if (mask_sum == 0) {
    std::cerr << "[graviton] warning: owl_loss on a degenerate sample (empty gt mask)\n";
    return ops::leaf(tape, Tensor<T>({1}));
  }
  auto diff = ops::abs_val(ops::sub(pred, ops::leaf(tape, gt_warp)));
  auto masked = ops::mul_spatial(diff, ops::leaf(tape, mask));
  const T scale = static_cast<T>(1.0 / (static_cast<double>(C) * mask_sum));
  return ops::mul_scalar(ops::sum_all(masked), scale);
}

/// Frozen random conv stack standing in for a pretrained perceptual network.
/// Parameters are derived from a fixed seed at construction, never updated,
/// and identical across runs and processes.
template <typename T>
struct FixedFeatureNet {
  static constexpr uint64_t kSeed = 0xfea7;
  std::vector<int> channels = {12, 24, 32};
  ParamStore<T> params;

  FixedFeatureNet() {
    Rng rng(kSeed);
    int cin = 3;
    for (size_t i = 0; i < channels.size(); ++i) {
      nn::init_conv(params, rng, "ffn.c" + std::to_string(i), cin, channels[i], 3);
      cin = channels[i];
    }
    for (const auto& name : params.names()) params.set_trainable(name, false);
  }

  /// taps after each stage, gradients flow to the input image only
  std::vector<Var<T>> taps(Tape<T>& tape, Var<T> image) const {
    GRAVITON_REQUIRE(image.val().ndim() == 3 && image.val().dim(0) == 3,
                     "FixedFeatureNet expects a 3-channel image");
    std::vector<Var<T>> out;
    Var<T> x = image;
    for (size_t i = 0; i < channels.size(); ++i) {
      const std::string name = "ffn.c" + std::to_string(i);
      auto w = ops::leaf(tape, params.value(name + ".w"));
      auto b = ops::leaf(tape, params.value(name + ".b"));
      x = ops::leaky_relu(ops::conv2d(x, w, b, 2, 1), static_cast<T>(nn::kLeakySlope));
      out.push_back(x);
    }
    return out;
  }

  /// plain forward for the metric stack (no tape)
  std::vector<Tensor<T>> taps_plain(const Tensor<T>& image) const {
    Tape<T> tape;
    auto vars = taps(tape, ops::leaf(tape, image));
    std::vector<Tensor<T>> out;
    out.reserve(vars.size());
    for (auto& v : vars) out.push_back(v.val());
    return out;
  }

  /// pooled embedding: global average of the last tap, used by FID/KID
  Tensor<T> embed(const Tensor<T>& image) const {
    auto all = taps_plain(image);
    const auto& last = all.back();
    const int C = last.dim(0);
    const int64_t plane = static_cast<int64_t>(last.dim(1)) * last.dim(2);
    Tensor<T> out({C});
    for (int c = 0; c < C; ++c) {
      T acc = T(0);
      for (int64_t p = 0; p < plane; ++p) acc += last[c * plane + p];
      out[c] = acc / static_cast<T>(plane);
    }
    return out;
  }

  int embed_dim() const { return channels.back(); }
};

/// mean L1 across the feature taps
template <typename T>
Var<T> perceptual_loss(Tape<T>& tape, const FixedFeatureNet<T>& net, Var<T> a, Var<T> b) {
  GRAVITON_REQUIRE(a.val().same_shape(b.val()), "perceptual_loss: shape mismatch");
  auto taps_a = net.taps(tape, a);
  auto taps_b = net.taps(tape, b);
  Var<T> total = ops::leaf(tape, Tensor<T>({1}));
  for (size_t i = 0; i < taps_a.size(); ++i) {
    total = ops::add(total, ops::mean_all(ops::abs_val(ops::sub(taps_a[i], taps_b[i]))));
  }
  return ops::mul_scalar(total, static_cast<T>(1.0 / taps_a.size()));
}

template <typename T>
Var<T> gram_matrix(Var<T> tap) {
  const int C = tap.val().dim(0);
  const int64_t hw = static_cast<int64_t>(tap.val().dim(1)) * tap.val().dim(2);
  auto mat = ops::reshape(tap, {C, static_cast<int>(hw)});
  auto gram = ops::matmul(mat, ops::transpose(mat));
  return ops::mul_scalar(gram, static_cast<T>(1.0 / (static_cast<double>(C) * hw)));
}

/// mean squared difference of channel Gram matrices across the taps
template <typename T>
Var<T> style_loss(Tape<T>& tape, const FixedFeatureNet<T>& net, Var<T> a, Var<T> b) {
  GRAVITON_REQUIRE(a.val().same_shape(b.val()), "style_loss: shape mismatch");
  auto taps_a = net.taps(tape, a);
  auto taps_b = net.taps(tape, b);
  Var<T> total = ops::leaf(tape, Tensor<T>({1}));
  for (size_t i = 0; i < taps_a.size(); ++i) {
    auto diff = ops::sub(gram_matrix(taps_a[i]), gram_matrix(taps_b[i]));
    total = ops::add(total, ops::mean_all(ops::mul(diff, diff)));
  }
  return ops::mul_scalar(total, static_cast<T>(1.0 / taps_a.size()));
}

struct LossWeights {
  double lambda_l1 = 1.0;
  double lambda_prec = 1.0;
  double lambda_style = 100.0;
  double lambda_owl = 1.0;
};

struct LossBreakdown {
  double l1 = 0;
  double prec = 0;
  double style = 0;
  double owl = 0;
  double total = 0;
};

/// Composite stage-1 objective: L1 + perceptual + style between the coarse
/// tryon and the person image, plus the occlusion-aware term between the
/// predicted and ground-truth warped garment; weighted sum.
template <typename T>
Var<T> stage1_loss(Tape<T>& tape, const FixedFeatureNet<T>& net, Var<T> tryon,
                   const Tensor<T>& person, Var<T> warp_pred, const Tensor<T>& warp_gt,
                   const LossWeights& w, LossBreakdown* breakdown = nullptr) {
  auto person_leaf = ops::leaf(tape, person);
  auto l1 = ops::mean_all(ops::abs_val(ops::sub(tryon, person_leaf)));
  auto prec = perceptual_loss(tape, net, tryon, person_leaf);
  auto style = style_loss(tape, net, tryon, person_leaf);
  auto owl = owl_loss(tape, warp_pred, warp_gt);
  auto total = ops::add(
      ops::add(ops::mul_scalar(l1, static_cast<T>(w.lambda_l1)),
               ops::mul_scalar(prec, static_cast<T>(w.lambda_prec))),
      ops::add(ops::mul_scalar(style, static_cast<T>(w.lambda_style)),
               ops::mul_scalar(owl, static_cast<T>(w.lambda_owl))));
  if (breakdown != nullptr) {
    breakdown->l1 = static_cast<double>(l1.val()[0]);
    breakdown->prec = static_cast<double>(prec.val()[0]);
    breakdown->style = static_cast<double>(style.val()[0]);
    breakdown->owl = static_cast<double>(owl.val()[0]);
    breakdown->total = static_cast<double>(total.val()[0]);
  }
  return total;
}

}  // namespace graviton
