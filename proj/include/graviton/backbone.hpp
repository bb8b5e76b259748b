#pragma once

#include <string>
#include <vector>

#include "graviton/core/nn.hpp"

namespace graviton {

struct EncoderConfig {
  int layers = 3;
  int stride = 2;
  std::vector<int> channels = {32, 64, 96};
  int kernel = 3;
};

struct DecoderConfig {
  int stages = 3;
  std::vector<int> channels = {48, 32, 24};
  int out_channels = 3;
  int kernel = 3;
};

/// Strided conv feature extractor; three stride-2 stages take H x W down to
/// H/8 x W/8. Spatial divisibility is checked before any compute.
template <typename T>
struct Encoder {
  std::string prefix;
  int in_channels = 3;
  EncoderConfig cfg;

  void init(ParamStore<T>& store, Rng& rng) const {
    int cin = in_channels;
    for (int i = 0; i < cfg.layers; ++i) {
      nn::init_conv(store, rng, layer_name(i), cin, cfg.channels[static_cast<size_t>(i)],
                    cfg.kernel);
      cin = cfg.channels[static_cast<size_t>(i)];
    }
  }

  Var<T> forward(TapeBinding<T>& bind, Var<T> image) const {
    GRAVITON_REQUIRE(image.val().ndim() == 3 && image.val().dim(0) == in_channels,
                     prefix, ": expected ", in_channels, " input channels");
    int div = 1;
    for (int i = 0; i < cfg.layers; ++i) div *= cfg.stride;
    GRAVITON_REQUIRE(image.val().dim(1) % div == 0 && image.val().dim(2) % div == 0,
                     prefix, ": spatial size ", image.val().dim(1), "x", image.val().dim(2),
                     " not divisible by ", div);
    Var<T> x = image;
    const int pad = cfg.kernel / 2;
    for (int i = 0; i < cfg.layers; ++i) {
      x = nn::leaky(nn::conv(bind, layer_name(i), x, cfg.stride, pad));
    }
    return x;
  }

  int out_channels() const { return cfg.channels.back(); }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (int i = 0; i < cfg.layers; ++i) nn::conv_names(out, layer_name(i));
    return out;
  }

 private:
  std::string layer_name(int i) const { return prefix + ".c" + std::to_string(i); }
};

/// Shared decoder: three rounds of nearest x2 upsampling followed by a 3x3
/// conv, then a bounded output head. Output always lands in [-1, 1].
template <typename T>
struct Decoder {
  std::string prefix;
  int in_channels = 96;
  DecoderConfig cfg;

  void init(ParamStore<T>& store, Rng& rng) const {
    int cin = in_channels;
    for (int i = 0; i < cfg.stages; ++i) {
      nn::init_conv(store, rng, layer_name(i), cin, cfg.channels[static_cast<size_t>(i)],
                    cfg.kernel);
      cin = cfg.channels[static_cast<size_t>(i)];
    }
    nn::init_conv(store, rng, prefix + ".out", cin, cfg.out_channels, cfg.kernel);
  }

  Var<T> forward(TapeBinding<T>& bind, Var<T> feat) const {
    GRAVITON_REQUIRE(feat.val().ndim() == 3 && feat.val().dim(0) == in_channels,
                     prefix, ": expected ", in_channels, " feature channels, got ",
                     feat.val().dim(0));
    Var<T> x = feat;
    const int pad = cfg.kernel / 2;
    for (int i = 0; i < cfg.stages; ++i) {
      x = ops::nearest_up2(x);
      x = nn::leaky(nn::conv(bind, layer_name(i), x, 1, pad));
    }
    return ops::tanh_act(nn::conv(bind, prefix + ".out", x, 1, pad));
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (int i = 0; i < cfg.stages; ++i) nn::conv_names(out, layer_name(i));
    nn::conv_names(out, prefix + ".out");
    return out;
  }

 private:
  std::string layer_name(int i) const { return prefix + ".u" + std::to_string(i); }
};

/// Final 1x1 refinement of the decoded warp image. Identity at initialization;
/// the clamp keeps the image contract intact once the kernel trains away from
/// identity.
template <typename T>
struct Refine1x1 {
  std::string prefix;
  int channels = 3;

  void init(ParamStore<T>& store) const {
    nn::init_conv1x1_identity(store, prefix + ".k", channels);
  }

  Var<T> forward(TapeBinding<T>& bind, Var<T> image) const {
    GRAVITON_REQUIRE(image.val().ndim() == 3 && image.val().dim(0) == channels,
                     prefix, ": channel mismatch");
    auto y = nn::conv(bind, prefix + ".k", image, 1, 0);
    return ops::clamp(y, T(-1), T(1));
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    nn::conv_names(out, prefix + ".k");
    return out;
  }
};

}  // namespace graviton
