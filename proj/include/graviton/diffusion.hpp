#pragma once

#include <algorithm>
#include <ostream>
#include <string>
#include <vector>

#include "graviton/core/adamw.hpp"
#include "graviton/core/checkpoint.hpp"
#include "graviton/core/run_config.hpp"
#include "graviton/dcaa.hpp"
#include "graviton/stage1.hpp"

namespace graviton {

// Stage 2: toy latent diffusion inpainting. A small frozen autoencoder maps
// images to 4-channel latents at 1/8 scale; a 3-level conditional denoiser
// with one DCAA block per level predicts the forward-process noise; sampling
// is deterministic (variance-free) and the decoded result is composited with
// the agnostic person outside the coarse body mask.

struct Stage2Config {
  int height = 64;
  int width = 48;
  int latent_channels = 4;
  int timesteps = 200;       // T
  int sample_steps = 50;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  int time_embed_dim = 32;
  std::vector<int> unet_channels = {32, 48, 64};
  int dcaa_width = 64;

  static Stage2Config for_size(int h, int w) {
    Stage2Config cfg;
    cfg.height = h;
    cfg.width = w;
    return cfg;
  }
};

/// cumulative signal coefficients of a linear-variance forward process;
/// alpha_bar[0] = 1 exactly so t = 0 is the identity
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> alpha_bar;  // size steps + 1

  static NoiseSchedule linear(int steps, double beta_min, double beta_max) {
    GRAVITON_REQUIRE(steps >= 1, "schedule needs at least one step");
    NoiseSchedule s;
    s.steps = steps;
    s.alpha_bar.resize(static_cast<size_t>(steps) + 1);
    s.alpha_bar[0] = 1.0;
    double acc = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const double beta =
          steps == 1 ? beta_min
                     : beta_min + (beta_max - beta_min) * static_cast<double>(t - 1) / (steps - 1);
      acc *= 1.0 - beta;
      s.alpha_bar[static_cast<size_t>(t)] = acc;
    }
    return s;
  }

  double at(int t) const {
    GRAVITON_REQUIRE(t >= 0 && t <= steps, "schedule index ", t, " out of range [0, ", steps, "]");
    return alpha_bar[static_cast<size_t>(t)];
  }
};

/// x_t = sqrt(ab_t) x_0 + sqrt(1 - ab_t) eps; exact identity at t = 0
template <typename T>
Tensor<T> add_noise(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                    const NoiseSchedule& schedule) {
  GRAVITON_REQUIRE(x0.same_shape(eps), "add_noise: shape mismatch");
  GRAVITON_REQUIRE(t >= 0 && t <= schedule.steps, "add_noise: t out of range");
  const T a = static_cast<T>(std::sqrt(schedule.at(t)));
  const T b = static_cast<T>(std::sqrt(1.0 - schedule.at(t)));
  Tensor<T> out = x0;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

/// deterministic reverse update from t to t_prev given the predicted noise
template <typename T>
Tensor<T> denoise_update(const Tensor<T>& x_t, int t, int t_prev, const Tensor<T>& eps_hat,
                         const NoiseSchedule& schedule) {
  GRAVITON_REQUIRE(t >= 1 && t <= schedule.steps, "denoise_update: t out of range");
  GRAVITON_REQUIRE(t_prev >= 0 && t_prev < t, "denoise_update: t_prev must precede t");
  const double ab_t = schedule.at(t);
  const double ab_p = schedule.at(t_prev);
  Tensor<T> out = x_t;
  const T c0 = static_cast<T>(std::sqrt(ab_p / ab_t));
  const T c1 = static_cast<T>(std::sqrt(1.0 - ab_p) -
                              std::sqrt(ab_p * (1.0 - ab_t) / ab_t));
  for (int64_t i = 0; i < out.size(); ++i) out[i] = c0 * x_t[i] + c1 * eps_hat[i];
  return out;
}

template <typename T>
struct ToyAutoencoder {
  std::string prefix = "ae";
  int latent_channels = 4;

  void init(ParamStore<T>& store, Rng& rng) const {
    nn::init_conv(store, rng, prefix + ".e0", 3, 16, 3);
    nn::init_conv(store, rng, prefix + ".e1", 16, 32, 3);
    nn::init_conv(store, rng, prefix + ".e2", 32, latent_channels, 3);
    nn::init_conv(store, rng, prefix + ".d0", latent_channels, 32, 3);
    nn::init_conv(store, rng, prefix + ".d1", 32, 16, 3);
    nn::init_conv(store, rng, prefix + ".d2", 16, 12, 3);
    nn::init_conv(store, rng, prefix + ".out", 12, 3, 3);
    store.add(prefix + ".latent_scale", Tensor<T>({1}, T(1)), /*trainable=*/false);
  }

  Var<T> encode(TapeBinding<T>& bind, Var<T> img) const {
    GRAVITON_REQUIRE(img.val().dim(0) == 3, prefix, ": encoder expects 3 channels");
    auto x = nn::leaky(nn::conv(bind, prefix + ".e0", img, 2, 1));
    x = nn::leaky(nn::conv(bind, prefix + ".e1", x, 2, 1));
    return nn::conv(bind, prefix + ".e2", x, 2, 1);
  }

  Var<T> decode(TapeBinding<T>& bind, Var<T> latent) const {
    GRAVITON_REQUIRE(latent.val().dim(0) == latent_channels, prefix, ": latent channel mismatch");
    auto x = nn::leaky(nn::conv(bind, prefix + ".d0", ops::nearest_up2(latent), 1, 1));
    x = nn::leaky(nn::conv(bind, prefix + ".d1", ops::nearest_up2(x), 1, 1));
    x = nn::leaky(nn::conv(bind, prefix + ".d2", ops::nearest_up2(x), 1, 1));
    return ops::tanh_act(nn::conv(bind, prefix + ".out", x, 1, 1));
  }

  Tensor<T> encode_plain(ParamStore<T>& store, const Tensor<T>& img) const {
    Tape<T> tape;
    TapeBinding<T> bind(tape, store);
    return encode(bind, ops::leaf(tape, img)).val();
  }

  Tensor<T> decode_plain(ParamStore<T>& store, const Tensor<T>& latent) const {
    Tape<T> tape;
    TapeBinding<T> bind(tape, store);
    return decode(bind, ops::leaf(tape, latent)).val();
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (const char* n : {".e0", ".e1", ".e2", ".d0", ".d1", ".d2", ".out"})
      nn::conv_names(out, prefix + n);
    out.push_back(prefix + ".latent_scale");
    return out;
  }
};

// ---------------------------------------------------------------------------
// conditioning assembly
// ---------------------------------------------------------------------------

/// area-average downsampling for masks
template <typename T>
Tensor<T> area_downsample(const Tensor<T>& img, int factor) {
  GRAVITON_REQUIRE(img.ndim() == 3 && img.dim(1) % factor == 0 && img.dim(2) % factor == 0,
                   "area_downsample: size not divisible by factor");
  const int C = img.dim(0), h = img.dim(1) / factor, w = img.dim(2) / factor;
  Tensor<T> out({C, h, w});
  const T inv = T(1) / static_cast<T>(factor * factor);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T acc = T(0);
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += img.at(c, y * factor + dy, x * factor + dx);
        out.at(c, y, x) = acc * inv;
      }
  return out;
}

/// bilinear downsampling for image-like planes (pose render)
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& img, int out_h, int out_w) {
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor<T> out({C, out_h, out_w});
  const double sy = static_cast<double>(H) / out_h;
  const double sx = static_cast<double>(W) / out_w;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const double fy = (y + 0.5) * sy - 0.5;
        const double fx = (x + 0.5) * sx - 0.5;
        const auto s = detail::bilinear_setup(static_cast<T>(fx), static_cast<T>(fy), W, H);
        out.at(c, y, x) = (T(1) - s.wy) * ((T(1) - s.wx) * img.at(c, s.y0, s.x0) +
                                           s.wx * img.at(c, s.y0, s.x1)) +
                          s.wy * ((T(1) - s.wx) * img.at(c, s.y1, s.x0) +
                                  s.wx * img.at(c, s.y1, s.x1));
      }
  return out;
}

/// stage-2 preprocessing inputs derived from the stage-1 coarse tryon
template <typename T>
struct Stage2Inputs {
  Tensor<T> coarse_mask;  // 1 x H x W binary person silhouette of the coarse tryon
  Tensor<T> pose;         // passthrough
  Tensor<T> agnostic;     // passthrough
};

template <typename T>
Stage2Inputs<T> derive_stage2_inputs(const Tensor<T>& tryon_c, const Tensor<T>& pose,
                                     const Tensor<T>& agnostic) {
  Stage2Inputs<T> in;
  in.coarse_mask = foreground_mask(tryon_c);
  double area = 0;
  for (const auto& v : in.coarse_mask.data) area += static_cast<double>(v);
  GRAVITON_REQUIRE(area > 0, "degenerate all-background coarse tryon");
  in.pose = pose;
  in.agnostic = agnostic;
  return in;
}

template <typename T>
Stage2Inputs<T> derive_stage2_inputs(const Tensor<T>& tryon_c, const synth::TryonSample<T>& s) {
  return derive_stage2_inputs(tryon_c, s.pose, s.agnostic);
}

/// the twelve static conditioning channels of beta (everything except the
/// noise slot): [mask(1); pose(3); E(warp_g)(4); E(agnostic)(4)], all at
/// latent resolution. Channel order is part of the checkpoint contract.
template <typename T>
Tensor<T> conditioning_planes(ParamStore<T>& store, const ToyAutoencoder<T>& ae,
                              const Stage2Inputs<T>& in, const Tensor<T>& warp_g) {
  const int h = in.coarse_mask.dim(1) / 8, w = in.coarse_mask.dim(2) / 8;
  Tensor<T> mask_lat = area_downsample(in.coarse_mask, 8);
  Tensor<T> pose_lat = bilinear_resize(in.pose, h, w);
  Tensor<T> e_warp = ae.encode_plain(store, warp_g);
  Tensor<T> e_agn = ae.encode_plain(store, in.agnostic);
  Tensor<T> out({12, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  auto copy_into = [&](const Tensor<T>& src, int at) {
    std::copy(src.data.begin(), src.data.end(), out.data.begin() + at * plane);
  };
  copy_into(mask_lat, 0);
  copy_into(pose_lat, 1);
  copy_into(e_warp, 4);
  copy_into(e_agn, 8);
  return out;
}

// ---------------------------------------------------------------------------
// conditional denoiser
// ---------------------------------------------------------------------------

template <typename T>
struct Denoiser {
  std::string prefix = "dn";
  Stage2Config cfg;
  std::vector<DcaaBlock<T>> dcaa;

  explicit Denoiser(Stage2Config c = {}) : cfg(c) {
    for (size_t i = 0; i < cfg.unet_channels.size(); ++i) {
      dcaa.push_back(DcaaBlock<T>{prefix + ".dcaa" + std::to_string(i), cfg.unet_channels[i],
                                  cfg.dcaa_width});
    }
  }

  void init(ParamStore<T>& store, Rng& rng) const {
    const auto& ch = cfg.unet_channels;
    nn::init_conv(store, rng, prefix + ".in", 4 + 12, ch[0], 3);
    nn::init_conv(store, rng, prefix + ".down1", ch[0], ch[1], 3);
    nn::init_conv(store, rng, prefix + ".down2", ch[1], ch[2], 3);
    nn::init_conv(store, rng, prefix + ".mid", ch[2], ch[2], 3);
    nn::init_conv(store, rng, prefix + ".up1", ch[2] + ch[1], ch[1], 3);
    nn::init_conv(store, rng, prefix + ".up2", ch[1] + ch[0], ch[0], 3);
    nn::init_conv(store, rng, prefix + ".out", ch[0], cfg.latent_channels, 3, /*zero_init=*/true);
    for (size_t i = 0; i < ch.size(); ++i) {
      nn::init_linear(store, rng, prefix + ".temb" + std::to_string(i), cfg.time_embed_dim,
                      ch[i]);
      dcaa[i].init(store, rng);
      // small-magnitude projection back into the conv features
      Tensor<T> w({cfg.dcaa_width, ch[i]});
      rng.fill_normal(w, 0.05 / std::sqrt(static_cast<double>(cfg.dcaa_width)));
      store.add(prefix + ".dcaa_out" + std::to_string(i) + ".w", std::move(w));
      store.add(prefix + ".dcaa_out" + std::to_string(i) + ".b", Tensor<T>({ch[i]}));
    }
  }

  Tensor<T> time_embedding(int t) const {
    const int d = cfg.time_embed_dim;
    Tensor<T> e({1, d});
    for (int i = 0; i < d / 2; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / std::max(1, d / 2 - 1));
      e.at(0, 2 * i) = static_cast<T>(std::sin(t * freq));
      e.at(0, 2 * i + 1) = static_cast<T>(std::cos(t * freq));
    }
    return e;
  }

  Var<T> inject(TapeBinding<T>& bind, Var<T> feat, int level, int t, Var<T> x_text,
                Var<T> g_tokens) const {
    // timestep bias
    auto temb = nn::linear(bind, prefix + ".temb" + std::to_string(level),
                           ops::leaf(bind.tape(), time_embedding(t)));
    auto with_t = ops::add_channel_bias(
        feat, ops::reshape(temb, {cfg.unet_channels[static_cast<size_t>(level)]}));
    // decoupled cross-attention over the level tokens
    const int h = feat.val().dim(1), w = feat.val().dim(2);
    auto tokens = ops::tokens_from_chw(with_t);
    auto attended = dcaa[static_cast<size_t>(level)].attend(bind, tokens, x_text, g_tokens);
    auto proj = nn::linear(bind, prefix + ".dcaa_out" + std::to_string(level), attended);
    return ops::add(with_t, ops::chw_from_tokens(proj, h, w));
  }

  /// predicts the forward-process noise from the 16-channel conditioned input
  Var<T> forward(TapeBinding<T>& bind, Var<T> x_t, Var<T> cond12, int t, Var<T> x_text,
                 Var<T> g_tokens) const {
    GRAVITON_REQUIRE(x_t.val().dim(0) == cfg.latent_channels, prefix, ": latent channel mismatch");
    GRAVITON_REQUIRE(cond12.val().dim(0) == 12, prefix, ": conditioning must have 12 channels");
    auto beta = ops::concat_ch(x_t, cond12);  // [Z; mask; pose; E(warp); E(agnostic)]
    auto l0 = nn::leaky(nn::conv(bind, prefix + ".in", beta, 1, 1));
    l0 = inject(bind, l0, 0, t, x_text, g_tokens);
    auto l1 = nn::leaky(nn::conv(bind, prefix + ".down1", l0, 2, 1));
    l1 = inject(bind, l1, 1, t, x_text, g_tokens);
    auto l2 = nn::leaky(nn::conv(bind, prefix + ".down2", l1, 2, 1));
    l2 = inject(bind, l2, 2, t, x_text, g_tokens);
    auto mid = nn::leaky(nn::conv(bind, prefix + ".mid", l2, 1, 1));
    auto u1 = ops::crop_spatial(ops::nearest_up2(mid), l1.val().dim(1), l1.val().dim(2));
    auto c1 = nn::leaky(nn::conv(bind, prefix + ".up1", ops::concat_ch(u1, l1), 1, 1));
    auto u2 = ops::crop_spatial(ops::nearest_up2(c1), l0.val().dim(1), l0.val().dim(2));
    auto c2 = nn::leaky(nn::conv(bind, prefix + ".up2", ops::concat_ch(u2, l0), 1, 1));
    return nn::conv(bind, prefix + ".out", c2, 1, 1);
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (const char* n : {".in", ".down1", ".down2", ".mid", ".up1", ".up2", ".out"})
      nn::conv_names(out, prefix + n);
    for (size_t i = 0; i < cfg.unet_channels.size(); ++i) {
      out.push_back(prefix + ".temb" + std::to_string(i) + ".w");
      out.push_back(prefix + ".temb" + std::to_string(i) + ".b");
      for (const auto& n : dcaa[i].param_names()) out.push_back(n);
      out.push_back(prefix + ".dcaa_out" + std::to_string(i) + ".w");
      out.push_back(prefix + ".dcaa_out" + std::to_string(i) + ".b");
    }
    return out;
  }
};

/// everything stage 2 owns: frozen autoencoder, denoiser with DCAA blocks,
/// and the two toy embedders
template <typename T>
struct Stage2Model {
  Stage2Config cfg;
  ToyAutoencoder<T> ae;
  Denoiser<T> denoiser;
  TextEmbedder<T> text;
  TextureEmbedder<T> texture;

  explicit Stage2Model(Stage2Config c = {})
      : cfg(c), ae{}, denoiser(c), text{"emb.text", c.dcaa_width},
        texture{"emb.tex", c.dcaa_width} {}

  void init(ParamStore<T>& store, Rng& rng) const {
    ae.init(store, rng);
    denoiser.init(store, rng);
    text.init(store, rng);
    texture.init(store, rng);
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (const auto& n : ae.param_names()) out.push_back(n);
    for (const auto& n : denoiser.param_names()) out.push_back(n);
    for (const auto& n : text.param_names()) out.push_back(n);
    for (const auto& n : texture.param_names()) out.push_back(n);
    return out;
  }
};

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

/// Deterministic sampling from pure noise, followed by the inpainting
/// composite: pixels outside the coarse mask are replaced by the agnostic
/// person pixels exactly.
template <typename T>
Tensor<T> sample_tryon(ParamStore<T>& store, const Stage2Model<T>& model,
                       const Stage2Inputs<T>& inputs, const Tensor<T>& warp_g,
                       const std::string& caption, const Tensor<T>& garment, int steps,
                       uint64_t seed) {
  const auto& cfg = model.cfg;
  GRAVITON_REQUIRE(steps >= 1 && steps <= cfg.timesteps, "sample_tryon: steps must lie in [1, T]");
  NoiseSchedule schedule = NoiseSchedule::linear(cfg.timesteps, cfg.beta_min, cfg.beta_max);
  const int h = cfg.height / 8, w = cfg.width / 8;

  Tensor<T> cond = conditioning_planes(store, model.ae, inputs, warp_g);
  Rng rng(sub_seed(seed, "stage2-sample"));
  Tensor<T> x({cfg.latent_channels, h, w});
  rng.fill_normal(x);

  // evenly spaced timesteps T = t_1 > t_2 > ... > t_steps, ending at 0
  std::vector<int> ts(static_cast<size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    ts[static_cast<size_t>(i)] =
        static_cast<int>(std::lround(static_cast<double>(cfg.timesteps) *
                                     static_cast<double>(steps - i) / steps));
    ts[static_cast<size_t>(i)] = std::max(1, ts[static_cast<size_t>(i)]);
  }
  for (size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    if (t_prev >= t) continue;  // collapsed pair on very dense schedules
    Tape<T> tape;
    TapeBinding<T> bind(tape, store);
    auto x_text = model.text.embed(bind, caption);
    auto g_tokens = model.texture.embed(bind, ops::leaf(tape, garment));
    auto eps_hat = model.denoiser.forward(bind, ops::leaf(tape, x), ops::leaf(tape, cond), t,
                                          x_text, g_tokens);
    x = denoise_update(x, t, t_prev, eps_hat.val(), schedule);
  }

  const T scale = store.value("ae.latent_scale")[0];
  Tensor<T> descaled = x;
  for (auto& v : descaled.data) v /= scale;
  Tensor<T> decoded = model.ae.decode_plain(store, descaled);

  // inpainting contract: unmasked pixels are the agnostic person, bit-exact
  Tensor<T> out = decoded;
  for (int y = 0; y < cfg.height; ++y)
    for (int x2 = 0; x2 < cfg.width; ++x2)
      if (inputs.coarse_mask.at(0, y, x2) == T(0))
        for (int c = 0; c < 3; ++c) out.at(c, y, x2) = inputs.agnostic.at(c, y, x2);
  return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct Stage2TrainResult {
  std::vector<double> ae_losses;       // per pretrain iteration (L1)
  std::vector<double> eps_mse;         // per training iteration
  double ae_recon_l1 = 0;              // mean reconstruction L1 after pretraining
};

/// Two phases: autoencoder pretraining on persons + garments (then frozen),
/// followed by epsilon-prediction training of denoiser, DCAA trainables and
/// embedders on stage-1 derived conditioning.
template <typename T>
Stage2TrainResult train_stage2(const std::vector<synth::TryonSample<T>>& data,
                               ParamStore<T>& stage1_store, const Stage1Model<T>& stage1,
                               ParamStore<T>& store, const Stage2Model<T>& model,
                               const RunConfig& cfg, int ae_iterations, int iterations,
                               std::ostream* log = nullptr) {
  GRAVITON_REQUIRE(!data.empty(), "train_stage2: empty dataset");
  Stage2TrainResult result;
  NoiseSchedule schedule =
      NoiseSchedule::linear(model.cfg.timesteps, model.cfg.beta_min, model.cfg.beta_max);

  // phase A: autoencoder pretraining on person and garment images
  {
    AdamW<T> opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.weight_decay);
    Rng pick(sub_seed(cfg.seed, "stage2-ae"));
    for (int it = 0; it < ae_iterations; ++it) {
      Tape<T> tape;
      TapeBinding<T> bind(tape, store);
      Var<T> total{};
      const int batch = std::min<int>(4, static_cast<int>(data.size()));
      for (int k = 0; k < batch; ++k) {
        const auto& s = data[static_cast<size_t>(pick.below(static_cast<int64_t>(data.size())))];
        const Tensor<T>& img = (it + k) % 2 == 0 ? s.person : s.garment;
        auto x = ops::leaf(tape, img);
        auto rec = model.ae.decode(bind, model.ae.encode(bind, x));
        auto term = ops::mean_all(ops::abs_val(ops::sub(rec, x)));
        total = k == 0 ? term : ops::add(total, term);
      }
      auto loss = ops::mul_scalar(total, static_cast<T>(1.0 / batch));
      const double v = static_cast<double>(loss.val()[0]);
      GRAVITON_REQUIRE(std::isfinite(v), "non-finite autoencoder loss at batch index ", it);
      tape.backward(loss.id);
      opt.step(store, bind);
      result.ae_losses.push_back(v);
    }
  }

  // freeze the autoencoder and fix the latent scale from the train latents
  for (const auto& name : model.ae.param_names()) store.set_trainable(name, false);
  {
    double acc = 0;
    int64_t count = 0;
    for (const auto& s : data) {
      auto z = model.ae.encode_plain(store, s.person);
      for (const auto& v : z.data) {
        acc += static_cast<double>(v) * static_cast<double>(v);
        ++count;
      }
    }
    const double stddev = std::sqrt(std::max(1e-12, acc / static_cast<double>(count)));
    store.value("ae.latent_scale")[0] = static_cast<T>(1.0 / stddev);

    double recon = 0;
    for (const auto& s : data) {
      auto rec = model.ae.decode_plain(store, model.ae.encode_plain(store, s.person));
      double l1 = 0;
      for (int64_t i = 0; i < rec.size(); ++i)
        l1 += std::abs(static_cast<double>(rec[i]) - static_cast<double>(s.person[i]));
      recon += l1 / static_cast<double>(rec.size());
    }
    result.ae_recon_l1 = recon / static_cast<double>(data.size());
  }

  // precompute stage-1 conditioning per sample
  std::vector<Tensor<T>> cond_planes;
  std::vector<Tensor<T>> x0_latents;
  cond_planes.reserve(data.size());
  x0_latents.reserve(data.size());
  const T scale = store.value("ae.latent_scale")[0];
  for (const auto& s : data) {
    auto s1 = stage1.infer(stage1_store, s.garment, s.pose, s.agnostic);
    auto inputs = derive_stage2_inputs(s1.tryon_c, s);
    cond_planes.push_back(conditioning_planes(store, model.ae, inputs, s1.warp_g));
    Tensor<T> z = model.ae.encode_plain(store, s.person);
    for (auto& v : z.data) v *= scale;
    x0_latents.push_back(std::move(z));
  }

  // phase B: epsilon-prediction training
  AdamW<T> opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.weight_decay);
  Rng draw(sub_seed(cfg.seed, "stage2-train"));
  for (int it = 0; it < iterations; ++it) {
    Tape<T> tape;
    TapeBinding<T> bind(tape, store);
    Var<T> total{};
    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(data.size()));
    for (int k = 0; k < batch; ++k) {
      const size_t idx = static_cast<size_t>(draw.below(static_cast<int64_t>(data.size())));
      const auto& s = data[idx];
      const int t = 1 + static_cast<int>(draw.below(model.cfg.timesteps));
      Tensor<T> eps(x0_latents[idx].shape);
      draw.fill_normal(eps);
      Tensor<T> x_t = add_noise(x0_latents[idx], t, eps, schedule);
      auto x_text = model.text.embed(bind, s.caption);
      auto g_tokens = model.texture.embed(bind, ops::leaf(tape, s.garment));
      auto eps_hat = model.denoiser.forward(bind, ops::leaf(tape, x_t),
                                            ops::leaf(tape, cond_planes[idx]), t, x_text,
                                            g_tokens);
      auto diff = ops::sub(eps_hat, ops::leaf(tape, eps));
      auto term = ops::mean_all(ops::mul(diff, diff));
      total = k == 0 ? term : ops::add(total, term);
    }
    auto loss = ops::mul_scalar(total, static_cast<T>(1.0 / batch));
    const double v = static_cast<double>(loss.val()[0]);
    GRAVITON_REQUIRE(std::isfinite(v), "non-finite diffusion loss at batch index ", it);
    tape.backward(loss.id);
    opt.step(store, bind);
    result.eps_mse.push_back(v);
    if (log != nullptr && (it + 1) % 50 == 0) {
      (*log) << "iter=" << it + 1 << " eps_mse=" << v << "\n";
    }
  }
  return result;
}

}  // namespace graviton
