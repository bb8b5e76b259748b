#pragma once

#include <algorithm>
#include <ostream>
#include <string>
#include <vector>

#include "graviton/backbone.hpp"
#include "graviton/core/adamw.hpp"
#include "graviton/core/checkpoint.hpp"
#include "graviton/core/run_config.hpp"
#include "graviton/gfw.hpp"
#include "graviton/losses.hpp"
#include "graviton/synth.hpp"

namespace graviton {

struct Stage1Config {
  int height = 64;
  int width = 48;
  EncoderConfig encoder;
  DecoderConfig decoder;
  GfwConfig gfw;

  static Stage1Config for_size(int h, int w) {
    Stage1Config cfg;
    cfg.height = h;
    cfg.width = w;
    cfg.gfw.graph_nodes = std::min(64, (h / 8) * (w / 8));
    return cfg;
  }
};

/// full-resolution outputs of one stage-1 pass
template <typename T>
struct Stage1Output {
  Tensor<T> warp_g;      // 3 x H x W refined warped garment
  Tensor<T> tryon_c;     // 3 x H x W coarse tryon
  Tensor<T> flow_src;    // 2 x H x W, upsampled diagnostics
  Tensor<T> flow_ref;    // 2 x H x W
  Tensor<T> attention;   // 1 x H x W refine attention (upsampled)
};

template <typename T>
struct Stage1Model {
  Stage1Config cfg;
  Encoder<T> enc_garment;
  Encoder<T> enc_reference;
  GfwModule<T> gfw;
  Decoder<T> decoder;
  Refine1x1<T> refine1x1;

  explicit Stage1Model(Stage1Config c = Stage1Config::for_size(64, 48))
      : cfg(c),
        enc_garment{"s1.enc_g", 3, c.encoder},
        enc_reference{"s1.enc_r", 6, c.encoder},
        gfw("s1.gfw", c.gfw),
        decoder{"s1.dec", c.encoder.channels.back(), c.decoder},
        refine1x1{"s1.ref1x1", 3} {}

  void init(ParamStore<T>& store, Rng& rng) const {
    enc_garment.init(store, rng);
    enc_reference.init(store, rng);
    gfw.init(store, rng, cfg.height / 8, cfg.width / 8);
    decoder.init(store, rng);
    refine1x1.init(store);
    const int fc = cfg.encoder.channels.back();
    nn::init_conv(store, rng, "s1.refine.c0", 2 * fc, 96, 3);
    nn::init_conv(store, rng, "s1.refine.c1", 96, 96, 3);
    nn::init_conv(store, rng, "s1.refine.c2", 96, 64, 3);
    nn::init_conv(store, rng, "s1.refine.c3", 64, 5, 3, /*zero_init=*/true);
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (const auto& n : enc_garment.param_names()) out.push_back(n);
    for (const auto& n : enc_reference.param_names()) out.push_back(n);
    for (const auto& n : gfw.param_names()) out.push_back(n);
    for (const auto& n : decoder.param_names()) out.push_back(n);
    for (const auto& n : refine1x1.param_names()) out.push_back(n);
    for (int i = 0; i < 4; ++i) nn::conv_names(out, "s1.refine.c" + std::to_string(i));
    return out;
  }

  struct RefineOut {
    Var<T> offsets_src;  // 2 x h x w
    Var<T> offsets_ref;  // 2 x h x w
    Var<T> attention;    // 1 x h x w, sigmoid
  };

  /// conv stack over concat(warped source, warped reference) emitting five
  /// channels: two offset pairs and the attention logit
  RefineOut refine_net(TapeBinding<T>& bind, Var<T> feat_s_warped, Var<T> feat_r_warped) const {
    GRAVITON_REQUIRE(feat_s_warped.val().same_shape(feat_r_warped.val()),
                     "refine_net: geometry mismatch");
    auto x = ops::concat_ch(feat_s_warped, feat_r_warped);
    x = nn::leaky(nn::conv(bind, "s1.refine.c0", x, 1, 1));
    x = nn::leaky(nn::conv(bind, "s1.refine.c1", x, 1, 1));
    x = nn::leaky(nn::conv(bind, "s1.refine.c2", x, 1, 1));
    auto head = nn::conv(bind, "s1.refine.c3", x, 1, 1);
    return {ops::slice_ch(head, 0, 2), ops::slice_ch(head, 2, 4),
            ops::sigmoid(ops::slice_ch(head, 4, 5))};
  }

  struct ForwardVars {
    Var<T> tryon_c;
    Var<T> warp_g;
    Var<T> flow1;      // first GFW pass flow (latent scale)
    Var<T> flow2;      // second GFW pass flow
    Var<T> off_src;    // refine offsets
    Var<T> off_ref;
    Var<T> refine_att;
  };

  ForwardVars forward(TapeBinding<T>& bind, Var<T> garment, Var<T> pose, Var<T> agnostic) const {
    GRAVITON_REQUIRE(garment.val().dim(1) == cfg.height && garment.val().dim(2) == cfg.width,
                     "stage1: input size mismatch");
    auto feat_s = enc_garment.forward(bind, garment);
    auto feat_r = enc_reference.forward(bind, ops::concat_ch(pose, agnostic));

    // GFW applied twice with shared parameters: source warped toward the
    // reference, then the result refined against the reference again
    auto g1 = gfw.forward(bind, feat_s, feat_r);
    auto feat_s_warped = g1.warped;
    auto g2 = gfw.forward(bind, feat_s_warped, feat_r);
    auto feat_r_warped = g2.warped;

    auto rn = refine_net(bind, feat_s_warped, feat_r_warped);
    auto att_complement = ops::add_scalar(ops::mul_scalar(rn.attention, T(-1)), T(1));
    auto feat_s_refine =
        ops::mul_spatial(ops::grid_sample(feat_s_warped, rn.offsets_src), rn.attention);
    auto feat_r_refine =
        ops::mul_spatial(ops::grid_sample(feat_r_warped, rn.offsets_ref), att_complement);

    auto tryon_c = decoder.forward(bind, ops::add(feat_s_refine, feat_r_refine));
    auto warp = decoder.forward(bind, feat_s_refine);
    auto warp_g = refine1x1.forward(bind, warp);
    return {tryon_c, warp_g, g1.flow, g2.flow, rn.offsets_src, rn.offsets_ref, rn.attention};
  }

  /// plain-tensor inference wrapper
  Stage1Output<T> infer(ParamStore<T>& store, const Tensor<T>& garment, const Tensor<T>& pose,
                        const Tensor<T>& agnostic) const {
    Tape<T> tape;
    TapeBinding<T> bind(tape, store);
    auto out = forward(bind, ops::leaf(tape, garment), ops::leaf(tape, pose),
                       ops::leaf(tape, agnostic));
    Stage1Output<T> res;
    res.warp_g = out.warp_g.val();
    res.tryon_c = out.tryon_c.val();
    // diagnostics at full resolution
    Tensor<T> flow_src = out.flow1.val();
    Tensor<T> off_src = out.off_src.val();
    for (int64_t i = 0; i < flow_src.size(); ++i) flow_src[i] += off_src[i];
    Tensor<T> flow_ref = out.flow2.val();
    Tensor<T> off_ref = out.off_ref.val();
    for (int64_t i = 0; i < flow_ref.size(); ++i) flow_ref[i] += off_ref[i];
    res.flow_src = upsample_flow(flow_src, cfg.height);
    res.flow_ref = upsample_flow(flow_ref, cfg.height);
    Tensor<T> att({1, cfg.height, cfg.width});
    const auto& a = out.refine_att.val();
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) att.at(0, y, x) = a.at(0, y / 8, x / 8);
    res.attention = att;
    return res;
  }
};

struct Stage1TrainResult {
  std::vector<LossBreakdown> iteration_losses;
  std::vector<LossBreakdown> epoch_means;
};

/// AdamW training loop for stage 1. Deterministic given the config seed; a
/// non-finite loss aborts naming the batch index. `max_iterations` caps the
/// total optimizer steps (0 = run all epochs).
template <typename T>
Stage1TrainResult train_stage1(const std::vector<synth::TryonSample<T>>& data,
                               const RunConfig& cfg, ParamStore<T>& store,
                               const Stage1Model<T>& model, int max_iterations = 0,
                               std::ostream* log = nullptr) {
  GRAVITON_REQUIRE(!data.empty(), "train_stage1: empty dataset");
  for (size_t i = 0; i < data.size(); ++i) {
    std::string diag;
    GRAVITON_REQUIRE(synth::verify_sample(data[i], &diag), "train_stage1: sample ", i,
                     " failed verification: ", diag);
  }
  FixedFeatureNet<T> ffn;
  LossWeights weights{cfg.lambda_l1, cfg.lambda_prec, cfg.lambda_style, cfg.lambda_owl};
  AdamW<T> opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.weight_decay);

  Stage1TrainResult result;
  int iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(sub_seed(cfg.seed, "stage1-shuffle", static_cast<uint64_t>(epoch)));
    auto order = shuffle_rng.permutation(static_cast<int>(data.size()));
    LossBreakdown epoch_acc;
    int epoch_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Tape<T> tape;
      TapeBinding<T> bind(tape, store);
      Var<T> total{};
      LossBreakdown batch_bd;
      for (size_t k = start; k < end; ++k) {
        const auto& s = data[static_cast<size_t>(order[k])];
        auto out = model.forward(bind, ops::leaf(tape, s.garment), ops::leaf(tape, s.pose),
                                 ops::leaf(tape, s.agnostic));
        LossBreakdown bd;
        auto loss = stage1_loss(tape, ffn, out.tryon_c, s.person, out.warp_g, s.gt_warp,
                                weights, &bd);
        batch_bd.l1 += bd.l1;
        batch_bd.prec += bd.prec;
        batch_bd.style += bd.style;
        batch_bd.owl += bd.owl;
        total = k == start ? loss : ops::add(total, loss);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      auto mean_loss = ops::mul_scalar(total, static_cast<T>(inv));
      const double loss_value = static_cast<double>(mean_loss.val()[0]);
      GRAVITON_REQUIRE(std::isfinite(loss_value), "non-finite loss at batch index ", iteration);
      tape.backward(mean_loss.id);
      opt.step(store, bind);

      batch_bd.l1 *= inv;
      batch_bd.prec *= inv;
      batch_bd.style *= inv;
      batch_bd.owl *= inv;
      batch_bd.total = loss_value;
      result.iteration_losses.push_back(batch_bd);
      epoch_acc.l1 += batch_bd.l1;
      epoch_acc.prec += batch_bd.prec;
      epoch_acc.style += batch_bd.style;
      epoch_acc.owl += batch_bd.owl;
      epoch_acc.total += batch_bd.total;
      ++epoch_batches;
      ++iteration;
      if (max_iterations > 0 && iteration >= max_iterations) break;
    }
    const double einv = 1.0 / std::max(1, epoch_batches);
    epoch_acc.l1 *= einv;
    epoch_acc.prec *= einv;
    epoch_acc.style *= einv;
    epoch_acc.owl *= einv;
    epoch_acc.total *= einv;
    result.epoch_means.push_back(epoch_acc);
    if (log != nullptr) {
      (*log) << "epoch=" << epoch << " l1=" << epoch_acc.l1 << " prec=" << epoch_acc.prec
             << " style=" << epoch_acc.style << " owl=" << epoch_acc.owl
             << " total=" << epoch_acc.total << "\n";
    }
    if (max_iterations > 0 && iteration >= max_iterations) break;
  }
  return result;
}

}  // namespace graviton
