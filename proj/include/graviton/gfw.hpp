#pragma once

#include <string>
#include <vector>

#include "graviton/core/nn.hpp"
#include "graviton/warp.hpp"

namespace graviton {

// Graph-based Flow Warping module. Pipeline per forward pass:
//   correlation volume -> motion feature f_s
//   reference feature  -> context feature f_c (garment encoder)
//   both projected to graph space, context adjacency A = U_c U_c^T,
//   source adjacency learned adaptively conditioned on the context,
//   residual back-projection gated by scalars initialized at zero,
//   channel-attention fusion emitting m flow heads plus an attention map,
//   final flow = per-pixel mean of the heads.

struct GfwConfig {
  int feat_channels = 96;   // encoder feature width entering the module
  int motion_channels = 64; // width of motion/context features and node embeddings
  int graph_nodes = 48;     // K, must not exceed the latent pixel count
  int flow_heads = 6;       // m
  int iterations = 1;       // t
  int se_reduction = 4;
};

/// all-pairs scaled dot products between two C x h x w maps -> (hw) x (hw)
template <typename T>
Var<T> build_correlation(Var<T> feat_s, Var<T> feat_r) {
  GRAVITON_REQUIRE(feat_s.val().same_shape(feat_r.val()), "build_correlation: shape mismatch");
  const int C = feat_s.val().dim(0);
  auto tokens_s = ops::tokens_from_chw(feat_s);
  auto tokens_r = ops::tokens_from_chw(feat_r);
  auto vol = ops::matmul(tokens_s, ops::transpose(tokens_r));
  return ops::mul_scalar(vol, static_cast<T>(1.0 / std::sqrt(static_cast<double>(C))));
}

/// learned soft assignment into K graph nodes; the assignment is retained so
/// the residual back-projection can invert it
template <typename T>
struct GraphProjector {
  std::string prefix;
  int nodes = 48;

  void init(ParamStore<T>& store, Rng& rng, int latent_pixels) const {
    GRAVITON_REQUIRE(nodes <= latent_pixels, prefix, ": K = ", nodes,
                     " exceeds latent pixel count ", latent_pixels);
    Tensor<T> logits({nodes, latent_pixels});
    rng.fill_normal(logits, 0.5);
    store.add(prefix + ".assign", std::move(logits));
  }

  struct Projection {
    Var<T> nodes_embed;  // K x D
    Var<T> assign;       // K x (hw), rows sum to 1
  };

  Projection project(TapeBinding<T>& bind, Var<T> feat) const {
    const int hw = feat.val().dim(1) * feat.val().dim(2);
    const auto& logits = bind(prefix + ".assign");
    GRAVITON_REQUIRE(logits.val().dim(1) == hw, prefix, ": assignment built for ",
                     logits.val().dim(1), " pixels, feature has ", hw);
    GRAVITON_REQUIRE(logits.val().dim(0) <= hw, prefix, ": K = ", logits.val().dim(0),
                     " exceeds pixel count ", hw);
    auto assign = ops::softmax_rows(logits);
    auto tokens = ops::tokens_from_chw(feat);    // hw x D
    auto embed = ops::matmul(assign, tokens);    // K x D
    return {embed, assign};
  }

  /// f + gate * P^T(u_hat), the Eq.-style residual back-projection
  Var<T> back_project(Var<T> feat, Var<T> node_update, Var<T> assign, Var<T> gate) const {
    const int h = feat.val().dim(1), w = feat.val().dim(2);
    auto tokens = ops::matmul(ops::transpose(assign), node_update);  // hw x D
    auto residual = ops::chw_from_tokens(tokens, h, w);
    return ops::add(feat, ops::mul_by_scalar_var(residual, gate));
  }

  std::vector<std::string> param_names() const { return {prefix + ".assign"}; }
};

/// context graph convolution plus the adaptive source-graph learner
template <typename T>
struct GraphReasoner {
  std::string prefix;
  int width = 64;  // D

  void init(ParamStore<T>& store, Rng& rng) const {
    nn::init_linear(store, rng, prefix + ".wg", width, width);
    nn::init_linear(store, rng, prefix + ".wa", width, width);
    nn::init_linear(store, rng, prefix + ".learner1", width, width);
    Tensor<T> w2({width, width});
    rng.fill_normal(w2, std::sqrt(1.0 / width));
    store.add(prefix + ".learner2", std::move(w2));
    // context conditioner emitting per-channel scale and shift for layer 1
    Tensor<T> theta_w({width, 2 * width});
    rng.fill_normal(theta_w, 0.1 / std::sqrt(static_cast<double>(width)));
    store.add(prefix + ".theta.w", std::move(theta_w));
    store.add(prefix + ".theta.b", Tensor<T>({2 * width}));
  }

  struct Result {
    Var<T> u_c;          // K x D
    Var<T> u_s;          // K x D
    Var<T> adj_context;  // raw A = U_c U_c^T of the last iteration
    Var<T> adj_source;   // raw learned adjacency of the last iteration
  };

  Result forward(TapeBinding<T>& bind, Var<T> u_c, Var<T> u_s, int iterations) const {
    GRAVITON_REQUIRE(iterations >= 1, prefix, ": iterations must be >= 1");
    GRAVITON_REQUIRE(u_c.val().dim(1) == width && u_s.val().dim(1) == width,
                     prefix, ": node width mismatch");
    Var<T> adj_c{}, adj_s{};
    for (int it = 0; it < iterations; ++it) {
      adj_c = ops::matmul(u_c, ops::transpose(u_c));
      GRAVITON_REQUIRE(adj_c.val().all_finite(), prefix, ": non-finite adjacency");
      adj_s = learn_adjacency(bind, u_s, u_c);
      auto norm_c = ops::softmax_rows(adj_c);
      auto norm_s = ops::softmax_rows(adj_s);
      auto next_c = ops::matmul(ops::matmul(norm_c, u_c), bind(prefix + ".wg.w"));
      auto next_s = ops::matmul(ops::matmul(norm_s, u_s), bind(prefix + ".wa.w"));
      u_c = next_c;
      u_s = next_s;
    }
    return {u_c, u_s, adj_c, adj_s};
  }

  /// two-layer learner: channel-wise layer modulated by the context summary,
  /// then a bilinear node-interaction layer producing the K x K adjacency
  Var<T> learn_adjacency(TapeBinding<T>& bind, Var<T> u_s, Var<T> u_c) const {
    auto summary = ops::mean_rows(u_c);  // 1 x D
    auto film = nn::linear(bind, prefix + ".theta", summary);
    auto scale = ops::add_scalar(ops::reshape(ops::slice_cols(film, 0, width), {width}), T(1));
    auto shift = ops::reshape(ops::slice_cols(film, width, 2 * width), {width});
    auto pre = nn::linear(bind, prefix + ".learner1", u_s);
    auto modulated = ops::add_row_bias(ops::mul_row(pre, scale), shift);
    auto h1 = ops::relu(modulated);
    return ops::matmul(ops::matmul(h1, bind(prefix + ".learner2")), ops::transpose(h1));
  }

  std::vector<std::string> param_names() const {
    return {prefix + ".wg.w",       prefix + ".wg.b",       prefix + ".wa.w",
            prefix + ".wa.b",       prefix + ".learner1.w", prefix + ".learner1.b",
            prefix + ".learner2",   prefix + ".theta.w",    prefix + ".theta.b"};
  }
};

/// squeeze-excite channel attention over f_s_hat gating concat(f_c_hat, f_s_hat),
/// then the conv head emitting m flow pairs plus one attention channel
template <typename T>
struct OffsetFusion {
  std::string prefix;
  GfwConfig cfg;

  void init(ParamStore<T>& store, Rng& rng) const {
    const int d = cfg.motion_channels;
    nn::init_linear(store, rng, prefix + ".se1", d, d / cfg.se_reduction);
    nn::init_linear(store, rng, prefix + ".se2", d / cfg.se_reduction, 2 * d);
    nn::init_conv(store, rng, prefix + ".h0", 2 * d, 96, 3);
    nn::init_conv(store, rng, prefix + ".h1", 96, 64, 3);
    nn::init_conv(store, rng, prefix + ".h2", 64, 2 * cfg.flow_heads + 1, 3, /*zero_init=*/true);
  }

  struct Result {
    Var<T> flows;      // 2m x h x w
    Var<T> attention;  // 1 x h x w in (0, 1)
    Var<T> gate;       // 2D channel attention in (0, 1)
    Var<T> fused;      // gated concat as fed to the head
  };

  Result forward(TapeBinding<T>& bind, Var<T> f_c_hat, Var<T> f_s_hat) const {
    GRAVITON_REQUIRE(f_c_hat.val().same_shape(f_s_hat.val()),
                     prefix, ": channel parity between context and source required");
    auto squeezed = ops::reshape(ops::global_avg_pool(f_s_hat), {1, cfg.motion_channels});
    auto gate = ops::sigmoid(
        nn::linear(bind, prefix + ".se2",
                   nn::leaky(nn::linear(bind, prefix + ".se1", squeezed))));
    auto gate_vec = ops::reshape(gate, {2 * cfg.motion_channels});
    auto cat = ops::concat_ch(f_c_hat, f_s_hat);
    auto fused = ops::scale_channels(cat, ops::add_scalar(gate_vec, T(1)));
    auto x = nn::leaky(nn::conv(bind, prefix + ".h0", fused, 1, 1));
    x = nn::leaky(nn::conv(bind, prefix + ".h1", x, 1, 1));
    auto head = nn::conv(bind, prefix + ".h2", x, 1, 1);
    auto flows = ops::slice_ch(head, 0, 2 * cfg.flow_heads);
    auto attention = ops::sigmoid(ops::slice_ch(head, 2 * cfg.flow_heads, 2 * cfg.flow_heads + 1));
    return {flows, attention, gate_vec, fused};
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out = {prefix + ".se1.w", prefix + ".se1.b", prefix + ".se2.w",
                                    prefix + ".se2.b"};
    nn::conv_names(out, prefix + ".h0");
    nn::conv_names(out, prefix + ".h1");
    nn::conv_names(out, prefix + ".h2");
    return out;
  }
};

template <typename T>
struct GfwModule {
  std::string prefix;
  GfwConfig cfg;
  GraphProjector<T> proj_context;
  GraphProjector<T> proj_source;
  GraphReasoner<T> reasoner;
  OffsetFusion<T> fusion;

  GfwModule(std::string name, GfwConfig c)
      : prefix(std::move(name)),
        cfg(c),
        proj_context{prefix + ".proj_c", c.graph_nodes},
        proj_source{prefix + ".proj_s", c.graph_nodes},
        reasoner{prefix + ".graph", c.motion_channels},
        fusion{prefix + ".fuse", c} {}

  void init(ParamStore<T>& store, Rng& rng, int latent_h, int latent_w) const {
    const int hw = latent_h * latent_w;
    const int d = cfg.motion_channels;
    // four convolutions over the per-pixel correlation slices
    nn::init_conv(store, rng, prefix + ".motion.c0", hw, 96, 3);
    nn::init_conv(store, rng, prefix + ".motion.c1", 96, 96, 3);
    nn::init_conv(store, rng, prefix + ".motion.c2", 96, d, 3);
    nn::init_conv(store, rng, prefix + ".motion.c3", d, d, 3);
    // garment (context) encoder applied to reference features
    nn::init_conv(store, rng, prefix + ".ctx.c0", cfg.feat_channels, 96, 3);
    nn::init_conv(store, rng, prefix + ".ctx.c1", 96, d, 3);
    proj_context.init(store, rng, hw);
    proj_source.init(store, rng, hw);
    reasoner.init(store, rng);
    fusion.init(store, rng);
    store.add(prefix + ".gate.h", Tensor<T>({1}));  // context back-projection, starts at 0
    store.add(prefix + ".gate.l", Tensor<T>({1}));  // source back-projection, starts at 0
  }

  Var<T> motion_feature(TapeBinding<T>& bind, Var<T> corr, int h, int w) const {
    GRAVITON_REQUIRE(corr.val().ndim() == 2 && corr.val().dim(0) == h * w &&
                         corr.val().dim(1) == h * w,
                     prefix, ": correlation volume must be (hw) x (hw)");
    auto x = ops::chw_from_tokens(corr, h, w);  // hw channels at h x w
    x = nn::leaky(nn::conv(bind, prefix + ".motion.c0", x, 1, 1));
    x = nn::leaky(nn::conv(bind, prefix + ".motion.c1", x, 1, 1));
    x = nn::leaky(nn::conv(bind, prefix + ".motion.c2", x, 1, 1));
    return nn::leaky(nn::conv(bind, prefix + ".motion.c3", x, 1, 1));
  }

  Var<T> context_feature(TapeBinding<T>& bind, Var<T> feat_r) const {
    auto x = nn::leaky(nn::conv(bind, prefix + ".ctx.c0", feat_r, 1, 1));
    return nn::leaky(nn::conv(bind, prefix + ".ctx.c1", x, 1, 1));
  }

  struct Result {
    Var<T> flow;       // 2 x h x w, mean of the heads
    Var<T> attention;  // 1 x h x w
    Var<T> warped;     // warped source feature, attention applied
    Var<T> flows;      // the m individual heads, 2m x h x w
    Var<T> f_c_hat;
    Var<T> f_s_hat;
  };

  Result forward(TapeBinding<T>& bind, Var<T> feat_s, Var<T> feat_r) const {
    GRAVITON_REQUIRE(feat_s.val().same_shape(feat_r.val()), prefix, ": feature shape mismatch");
    const int h = feat_s.val().dim(1), w = feat_s.val().dim(2);
    auto corr = build_correlation(feat_s, feat_r);
    auto f_s = motion_feature(bind, corr, h, w);
    auto f_c = context_feature(bind, feat_r);
    auto pc = proj_context.project(bind, f_c);
    auto ps = proj_source.project(bind, f_s);
    auto reasoned = reasoner.forward(bind, pc.nodes_embed, ps.nodes_embed, cfg.iterations);
    auto f_c_hat =
        proj_context.back_project(f_c, reasoned.u_c, pc.assign, bind(prefix + ".gate.h"));
    auto f_s_hat =
        proj_source.back_project(f_s, reasoned.u_s, ps.assign, bind(prefix + ".gate.l"));
    auto fused = fusion.forward(bind, f_c_hat, f_s_hat);
    auto flow = ops::flow_mean(fused.flows);
    auto warped = ops::mul_spatial(ops::grid_sample(feat_s, flow), fused.attention);
    return {flow, fused.attention, warped, fused.flows, f_c_hat, f_s_hat};
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    nn::conv_names(out, prefix + ".motion.c0");
    nn::conv_names(out, prefix + ".motion.c1");
    nn::conv_names(out, prefix + ".motion.c2");
    nn::conv_names(out, prefix + ".motion.c3");
    nn::conv_names(out, prefix + ".ctx.c0");
    nn::conv_names(out, prefix + ".ctx.c1");
    for (const auto& n : proj_context.param_names()) out.push_back(n);
    for (const auto& n : proj_source.param_names()) out.push_back(n);
    for (const auto& n : reasoner.param_names()) out.push_back(n);
    for (const auto& n : fusion.param_names()) out.push_back(n);
    out.push_back(prefix + ".gate.h");
    out.push_back(prefix + ".gate.l");
    return out;
  }
};

}  // namespace graviton
