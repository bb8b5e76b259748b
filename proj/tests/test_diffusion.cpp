#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "graviton/core/grad_check.hpp"
#include "graviton/diffusion.hpp"

using namespace graviton;

namespace {

synth::GeneratorSpec small_spec(int n) {
  synth::GeneratorSpec spec;
  spec.height = 32;
  spec.width = 24;
  spec.train_count = n;
  spec.val_count = 1;
  spec.test_count = 1;
  spec.max_translation_px = 2.0;
  spec.max_rotation_deg = 5.0;
  return spec;
}

}  // namespace

TEST_CASE("noise schedule: identity at zero, monotone decreasing", "[diffusion]") {
  auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  CHECK(s.at(0) == 1.0);
  for (int t = 1; t <= 200; ++t) {
    CHECK(s.at(t) < s.at(t - 1));
    CHECK(s.at(t) > 0.0);
    CHECK(s.at(t) <= 1.0);
  }
  CHECK(s.at(200) < 0.2);  // strongly noised terminal state
  CHECK_THROWS_AS(s.at(201), error);
}

TEST_CASE("add_noise at t = 0 returns x0 bitwise", "[diffusion]") {
  Rng rng(1);
  Tensor<float> x0({4, 8, 6}), eps({4, 8, 6});
  rng.fill_normal(x0);
  rng.fill_normal(eps);
  auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  auto x = add_noise(x0, 0, eps, s);
  CHECK(bitwise_equal(x, x0));
  CHECK_THROWS_AS(add_noise(x0, 201, eps, s), error);
}

TEST_CASE("terminal variance approaches one for unit-variance inputs", "[diffusion]") {
  auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  Rng rng(2);
  double acc = 0, acc2 = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    Tensor<double> x0({1, 1, 1}), eps({1, 1, 1});
    x0[0] = rng.normal();
    eps[0] = rng.normal();
    const double v = add_noise(x0, 200, eps, s)[0];
    acc += v;
    acc2 += v * v;
  }
  const double var = acc2 / n - (acc / n) * (acc / n);
  CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("denoise update with the true noise recovers x0 at t_prev = 0", "[diffusion]") {
  Rng rng(3);
  Tensor<double> x0({4, 4, 3}), eps({4, 4, 3});
  rng.fill_normal(x0);
  rng.fill_normal(eps);
  auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  for (int t : {1, 57, 200}) {
    auto x_t = add_noise(x0, t, eps, s);
    auto rec = denoise_update(x_t, t, 0, eps, s);
    CHECK(max_abs_diff(rec, x0) < 1e-9);
  }
  CHECK_THROWS_AS(denoise_update(x0, 0, 0, eps, s), error);
}

TEST_CASE("autoencoder geometry and short pretraining progress", "[diffusion]") {
  auto ds = synth::generate_dataset<float>(small_spec(4), 5);
  Stage2Model<float> model(Stage2Config::for_size(32, 24));
  ParamStore<float> store;
  Rng rng(6);
  model.init(store, rng);

  auto z = model.ae.encode_plain(store, ds.train[0].person);
  CHECK(z.shape == std::vector<int>{4, 4, 3});
  auto rec = model.ae.decode_plain(store, z);
  CHECK(rec.shape == std::vector<int>{3, 32, 24});
  for (int64_t i = 0; i < rec.size(); ++i) {
    CHECK(rec[i] <= 1.0f);
    CHECK(rec[i] >= -1.0f);
  }

  Stage1Model<float> s1(Stage1Config::for_size(32, 24));
  ParamStore<float> s1_store;
  Rng s1_rng(7);
  s1.init(s1_store, s1_rng);
  RunConfig cfg;
  cfg.height = 32;
  cfg.width = 24;
  cfg.learning_rate = 2e-3;
  cfg.batch_size = 2;
  auto result = train_stage2(ds.train, s1_store, s1, store, model, cfg, 50, 10);
  CHECK(result.ae_losses.back() < result.ae_losses.front());
  CHECK(result.ae_recon_l1 > 0.0);
  CHECK(store.value("ae.latent_scale")[0] > 0.0f);
}

TEST_CASE("conditioning planes carry the fixed channel order", "[diffusion]") {
  auto ds = synth::generate_dataset<float>(small_spec(1), 8);
  const auto& s = ds.train[0];
  Stage2Model<float> model(Stage2Config::for_size(32, 24));
  ParamStore<float> store;
  Rng rng(9);
  model.init(store, rng);

  // a synthetic coarse tryon: use the person itself (non-degenerate)
  auto inputs = derive_stage2_inputs(s.person, s);
  for (const auto& v : inputs.coarse_mask.data) CHECK((v == 0.0f || v == 1.0f));

  auto cond = conditioning_planes(store, model.ae, inputs, s.gt_warp);
  CHECK(cond.shape == std::vector<int>{12, 4, 3});

  auto mask_lat = area_downsample(inputs.coarse_mask, 8);
  auto pose_lat = bilinear_resize(s.pose, 4, 3);
  auto e_warp = model.ae.encode_plain(store, s.gt_warp);
  auto e_agn = model.ae.encode_plain(store, s.agnostic);
  for (int p = 0; p < 12; ++p) {
    CHECK(cond[0 * 12 + p] == mask_lat[p]);
    for (int c = 0; c < 3; ++c) CHECK(cond[(1 + c) * 12 + p] == pose_lat[c * 12 + p]);
    for (int c = 0; c < 4; ++c) {
      CHECK(cond[(4 + c) * 12 + p] == e_warp[c * 12 + p]);
      CHECK(cond[(8 + c) * 12 + p] == e_agn[c * 12 + p]);
    }
  }

  // degenerate coarse tryon is refused
  Tensor<float> flat({3, 32, 24}, 0.0f);
  CHECK_THROWS_WITH(derive_stage2_inputs(flat, s),
                    Catch::Matchers::ContainsSubstring("degenerate"));
}

TEST_CASE("denoiser emits latent-shaped output and passes the gradient check", "[diffusion]") {
  Stage2Model<double> model(Stage2Config::for_size(16, 16));
  ParamStore<double> store;
  Rng rng(10);
  model.init(store, rng);
  // nonzero output head so gradients reach every branch
  Rng jitter(11);
  for (auto& v : store.value("dn.out.w").data) v += jitter.uniform(-0.05, 0.05);

  Rng data_rng(12);
  Tensor<double> x_t({4, 2, 2}), cond({12, 2, 2}), garment({3, 16, 16});
  data_rng.fill_normal(x_t);
  data_rng.fill_uniform(cond, -1.0, 1.0);
  data_rng.fill_uniform(garment, -1.0, 1.0);
  Tensor<double> w({4, 2, 2});
  data_rng.fill_uniform(w, 0.5, 1.5);

  {
    Tape<double> tape;
    TapeBinding<double> bind(tape, store);
    auto x_text = model.text.embed(bind, "solid short-sleeve top");
    auto g_tok = model.texture.embed(bind, ops::leaf(tape, garment));
    auto eps_hat = model.denoiser.forward(bind, ops::leaf(tape, x_t), ops::leaf(tape, cond), 57,
                                          x_text, g_tok);
    CHECK(eps_hat.val().shape == std::vector<int>{4, 2, 2});
    CHECK(eps_hat.val().all_finite());
  }

  auto f = [&](Tape<double>& t, TapeBinding<double>& bind) {
    auto x_text = model.text.embed(bind, "solid short-sleeve top");
    auto g_tok = model.texture.embed(bind, ops::leaf(t, garment));
    auto eps_hat = model.denoiser.forward(bind, ops::leaf(t, x_t), ops::leaf(t, cond), 57,
                                          x_text, g_tok);
    return ops::sum_all(ops::mul(eps_hat, ops::leaf(t, w)));
  };
  auto report = grad_check(f, store, 1e-5, 60);
  INFO("worst: " << report.worst_param);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("epsilon objective gradient check (stage-2 composite)", "[diffusion]") {
  Stage2Model<double> model(Stage2Config::for_size(16, 16));
  ParamStore<double> store;
  Rng rng(13);
  model.init(store, rng);
  Rng data_rng(14);
  Tensor<double> x_t({4, 2, 2}), cond({12, 2, 2}), garment({3, 16, 16}), eps({4, 2, 2});
  data_rng.fill_normal(x_t);
  data_rng.fill_uniform(cond, -1.0, 1.0);
  data_rng.fill_uniform(garment, -1.0, 1.0);
  data_rng.fill_normal(eps);

  auto f = [&](Tape<double>& t, TapeBinding<double>& bind) {
    auto x_text = model.text.embed(bind, "striped long-sleeve top");
    auto g_tok = model.texture.embed(bind, ops::leaf(t, garment));
    auto eps_hat = model.denoiser.forward(bind, ops::leaf(t, x_t), ops::leaf(t, cond), 100,
                                          x_text, g_tok);
    auto diff = ops::sub(eps_hat, ops::leaf(t, eps));
    return ops::mean_all(ops::mul(diff, diff));
  };
  auto report = grad_check(f, store, 1e-5, 50);
  INFO("worst: " << report.worst_param);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("short stage-2 training is deterministic and keeps frozen weights frozen",
          "[diffusion]") {
  auto ds = synth::generate_dataset<float>(small_spec(4), 15);
  RunConfig cfg;
  cfg.height = 32;
  cfg.width = 24;
  cfg.learning_rate = 2e-3;
  cfg.batch_size = 2;
  cfg.seed = 16;

  Stage1Model<float> s1(Stage1Config::for_size(32, 24));
  ParamStore<float> s1_store;
  Rng s1_rng(17);
  s1.init(s1_store, s1_rng);

  auto run = [&]() {
    Stage2Model<float> model(Stage2Config::for_size(32, 24));
    ParamStore<float> store;
    Rng rng(sub_seed(cfg.seed, "stage2-init"));
    model.init(store, rng);
    auto res = train_stage2(ds.train, s1_store, s1, store, model, cfg, 30, 25);
    return std::pair{std::move(store), std::move(res)};
  };
  auto [store1, res1] = run();
  auto [store2, res2] = run();
  REQUIRE(res1.eps_mse.size() == 25);
  for (size_t i = 0; i < res1.eps_mse.size(); ++i) CHECK(res1.eps_mse[i] == res2.eps_mse[i]);

  // frozen contract after training
  Stage2Model<float> fresh(Stage2Config::for_size(32, 24));
  ParamStore<float> init_store;
  Rng rng(sub_seed(cfg.seed, "stage2-init"));
  fresh.init(init_store, rng);
  for (int level = 0; level < 3; ++level) {
    const std::string p = "dn.dcaa" + std::to_string(level);
    CHECK(bitwise_equal(store1.value(p + ".w_alpha"), init_store.value(p + ".w_alpha")));
    CHECK(bitwise_equal(store1.value(p + ".w_beta"), init_store.value(p + ".w_beta")));
    CHECK(bitwise_equal(store1.value(p + ".w_gamma"), init_store.value(p + ".w_gamma")));
    CHECK_FALSE(bitwise_equal(store1.value(p + ".w_beta_p"), init_store.value(p + ".w_beta_p")));
    CHECK_FALSE(
        bitwise_equal(store1.value(p + ".w_gamma_p"), init_store.value(p + ".w_gamma_p")));
  }
}

TEST_CASE("deterministic sampling is bit-stable and preserves unmasked pixels", "[diffusion]") {
  auto ds = synth::generate_dataset<float>(small_spec(2), 18);
  const auto& s = ds.train[0];
  Stage2Model<float> model(Stage2Config::for_size(32, 24));
  ParamStore<float> store;
  Rng rng(19);
  model.init(store, rng);

  auto inputs = derive_stage2_inputs(s.person, s);
  auto a = sample_tryon(store, model, inputs, s.gt_warp, s.caption, s.garment, 10, 42);
  auto b = sample_tryon(store, model, inputs, s.gt_warp, s.caption, s.garment, 10, 42);
  CHECK(bitwise_equal(a, b));
  auto c = sample_tryon(store, model, inputs, s.gt_warp, s.caption, s.garment, 10, 43);
  CHECK_FALSE(bitwise_equal(a, c));

  CHECK(a.shape == std::vector<int>{3, 32, 24});
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] <= 1.0f);
    CHECK(a[i] >= -1.0f);
  }
  // pixels outside the coarse mask equal the agnostic exactly
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 24; ++x)
      if (inputs.coarse_mask.at(0, y, x) == 0.0f)
        for (int ch = 0; ch < 3; ++ch) CHECK(a.at(ch, y, x) == s.agnostic.at(ch, y, x));
}
