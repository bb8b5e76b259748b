#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "graviton/core/grad_check.hpp"
#include "graviton/stage1.hpp"

using namespace graviton;

namespace {

synth::GeneratorSpec spec_for(int h, int w, int count) {
  synth::GeneratorSpec spec;
  spec.height = h;
  spec.width = w;
  spec.train_count = count;
  spec.val_count = 1;
  spec.test_count = 1;
  spec.max_translation_px = 2.0;
  spec.max_rotation_deg = 5.0;
  return spec;
}

}  // namespace

TEST_CASE("refine net: zero inputs and zero-init head give zero offsets, attention 0.5",
          "[stage1]") {
  Stage1Model<double> model(Stage1Config::for_size(32, 24));
  ParamStore<double> store;
  Rng rng(0);
  model.init(store, rng);
  Tape<double> tape;
  TapeBinding<double> bind(tape, store);
  auto zero = ops::leaf(tape, Tensor<double>({96, 4, 3}));
  auto out = model.refine_net(bind, zero, zero);
  CHECK(out.offsets_src.val().shape == std::vector<int>{2, 4, 3});
  CHECK(out.offsets_ref.val().shape == std::vector<int>{2, 4, 3});
  CHECK(out.attention.val().shape == std::vector<int>{1, 4, 3});
  for (int64_t i = 0; i < out.offsets_src.val().size(); ++i) {
    CHECK(out.offsets_src.val()[i] == 0.0);
    CHECK(out.offsets_ref.val()[i] == 0.0);
  }
  for (int64_t i = 0; i < out.attention.val().size(); ++i) CHECK(out.attention.val()[i] == 0.5);
}

TEST_CASE("refine net emits five channels and passes the gradient check", "[stage1]") {
  Stage1Model<double> model(Stage1Config::for_size(16, 8));
  ParamStore<double> store;
  Rng rng(1);
  model.init(store, rng);
  Rng data_rng(2);
  Tensor<double> fs({96, 2, 1}), fr({96, 2, 1});
  data_rng.fill_uniform(fs, -1.0, 1.0);
  data_rng.fill_uniform(fr, -1.0, 1.0);
  Tensor<double> w5({5, 2, 1});
  data_rng.fill_uniform(w5, 0.5, 1.5);

  auto f = [&](Tape<double>& tape, TapeBinding<double>& bind) {
    auto out = model.refine_net(bind, ops::leaf(tape, fs), ops::leaf(tape, fr));
    auto cat = ops::concat_ch(ops::concat_ch(out.offsets_src, out.offsets_ref), out.attention);
    return ops::sum_all(ops::mul(cat, ops::leaf(tape, w5)));
  };
  auto report = grad_check(f, store, 1e-5, 50);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("stage-1 forward emits bounded full-size images", "[stage1]") {
  Stage1Model<float> model(Stage1Config::for_size(64, 48));
  ParamStore<float> store;
  Rng rng(3);
  model.init(store, rng);
  auto spec = spec_for(64, 48, 1);
  Rng srng(4);
  auto sample = synth::make_sample<float>(spec, synth::draw_params(spec, srng), srng);
  auto out = model.infer(store, sample.garment, sample.pose, sample.agnostic);
  CHECK(out.warp_g.shape == std::vector<int>{3, 64, 48});
  CHECK(out.tryon_c.shape == std::vector<int>{3, 64, 48});
  CHECK(out.flow_src.shape == std::vector<int>{2, 64, 48});
  CHECK(out.attention.shape == std::vector<int>{1, 64, 48});
  for (int64_t i = 0; i < out.tryon_c.size(); ++i) {
    CHECK(out.tryon_c[i] <= 1.0f);
    CHECK(out.tryon_c[i] >= -1.0f);
    CHECK(out.warp_g[i] <= 1.0f);
    CHECK(out.warp_g[i] >= -1.0f);
  }
}

TEST_CASE("coarse tryon is invariant to the order of feature addition", "[stage1]") {
  // the decoder consumes feat_s_refine + feat_r_refine; float addition of two
  // tensors is commutative bitwise, so the decode must be identical
  Rng rng(5);
  Tensor<double> a({96, 4, 3}), b({96, 4, 3});
  rng.fill_uniform(a, -1.0, 1.0);
  rng.fill_uniform(b, -1.0, 1.0);
  Decoder<double> dec{"dec", 96, {}};
  ParamStore<double> store;
  dec.init(store, rng);
  Tape<double> tape;
  TapeBinding<double> bind(tape, store);
  auto ab = dec.forward(bind, ops::add(ops::leaf(tape, a), ops::leaf(tape, b)));
  auto ba = dec.forward(bind, ops::add(ops::leaf(tape, b), ops::leaf(tape, a)));
  CHECK(bitwise_equal(ab.val(), ba.val()));
}

TEST_CASE("composite stage-1 loss passes central differences on a 32x24 sample", "[stage1]") {
  // the central-difference oracle at eps = 1e-5 over 50 sampled parameters
  auto spec = spec_for(32, 24, 1);
  Rng srng(6);
  auto sample = synth::make_sample<double>(spec, synth::draw_params(spec, srng), srng);

  Stage1Model<double> model(Stage1Config::for_size(32, 24));
  ParamStore<double> store;
  Rng rng(7);
  model.init(store, rng);
  // gates off zero so every branch carries gradient, and the zero-init flow
  // heads off the exact-integer sampling points where bilinear interpolation
  // is one-sided (its derivative is only defined away from the lattice)
  store.value("s1.gfw.gate.h")[0] = 0.2;
  store.value("s1.gfw.gate.l")[0] = -0.15;
  Rng jitter(8);
  for (const auto& name : {"s1.refine.c3.w", "s1.refine.c3.b", "s1.gfw.fuse.h2.w",
                           "s1.gfw.fuse.h2.b"}) {
    auto& t = store.value(name);
    for (auto& v : t.data) v += jitter.uniform(-0.05, 0.05);
  }
  FixedFeatureNet<double> ffn;

  auto f = [&](Tape<double>& tape, TapeBinding<double>& bind) {
    auto out = model.forward(bind, ops::leaf(tape, sample.garment), ops::leaf(tape, sample.pose),
                             ops::leaf(tape, sample.agnostic));
    return stage1_loss(tape, ffn, out.tryon_c, sample.person, out.warp_g, sample.gt_warp, {});
  };
  auto report = grad_check(f, store, 1e-5, 50);
  INFO("worst: " << report.worst_param << "[" << report.worst_index << "]");
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("short training run reduces the loss deterministically", "[stage1]") {
  auto spec = spec_for(32, 24, 8);
  auto ds = synth::generate_dataset<float>(spec, 9);

  RunConfig cfg;
  cfg.height = 32;
  cfg.width = 24;
  cfg.learning_rate = 2e-3;
  cfg.batch_size = 4;
  cfg.epochs = 100;
  cfg.seed = 13;

  auto run = [&]() {
    Stage1Model<float> model(Stage1Config::for_size(32, 24));
    ParamStore<float> store;
    Rng rng(sub_seed(cfg.seed, "stage1-init"));
    model.init(store, rng);
    return train_stage1(ds.train, cfg, store, model, 24);
  };
  auto r1 = run();
  auto r2 = run();
  REQUIRE(r1.iteration_losses.size() == 24);
  CHECK(r1.iteration_losses.back().total < r1.iteration_losses.front().total);
  for (size_t i = 0; i < r1.iteration_losses.size(); ++i) {
    CHECK(r1.iteration_losses[i].total == r2.iteration_losses[i].total);  // bit-identical curves
  }
}

TEST_CASE("training aborts with the batch index on non-finite loss", "[stage1]") {
  auto spec = spec_for(32, 24, 2);
  auto ds = synth::generate_dataset<float>(spec, 10);
  RunConfig cfg;
  cfg.height = 32;
  cfg.width = 24;
  cfg.learning_rate = 1e30f;  // guaranteed blow-up
  cfg.batch_size = 2;
  cfg.epochs = 4;
  Stage1Model<float> model(Stage1Config::for_size(32, 24));
  ParamStore<float> store;
  Rng rng(11);
  model.init(store, rng);
  try {
    train_stage1(ds.train, cfg, store, model, 8);
    // divergence may also surface as a non-finite op on the tape; either way
    // the loop must throw rather than keep training
    FAIL("expected training to abort");
  } catch (const error& e) {
    SUCCEED("aborted: " << e.what());
  }
}

TEST_CASE("stage-1 checkpoint roundtrips the trained model bitwise", "[stage1]") {
  auto spec = spec_for(32, 24, 2);
  auto ds = synth::generate_dataset<float>(spec, 12);
  RunConfig cfg;
  cfg.height = 32;
  cfg.width = 24;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 2;
  cfg.epochs = 1;
  Stage1Model<float> model(Stage1Config::for_size(32, 24));
  ParamStore<float> store;
  Rng rng(14);
  model.init(store, rng);
  train_stage1(ds.train, cfg, store, model, 2);

  const std::string path = "test_tmp/stage1.ckpt";
  save_checkpoint(store, path, cfg.hash());
  CheckpointInfo info;
  auto loaded = load_checkpoint<float>(path, &info);
  CHECK(info.config_hash == cfg.hash());
  REQUIRE(loaded.size() == store.size());
  for (const auto& name : store.names()) {
    CHECK(bitwise_equal(loaded.value(name), store.value(name)));
  }
  require_params(loaded, model.param_names(), "stage1");
}
