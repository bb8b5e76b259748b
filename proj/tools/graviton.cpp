// graviton: graph-guided garment warping + toy latent-diffusion try-on.
// Subcommands: generate-data, train-warp, train-diffusion, eval, warp,
// tryon, selftest. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "graviton/diffusion.hpp"
#include "graviton/io/ppm.hpp"
#include "graviton/metrics.hpp"
#include "graviton/stage1.hpp"
#include "graviton/testing/selftest.hpp"

namespace {

using namespace graviton;

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path);
  GRAVITON_REQUIRE(f.good(), "cannot write manifest: ", path);
  for (const auto& [k, v] : entries) f << k << "=" << v << "\n";
  GRAVITON_REQUIRE(f.good(), "failed writing manifest: ", path);
}

uint64_t effective_seed(CLI::Option* seed_opt, uint64_t flag_value, uint64_t fallback) {
  if (seed_opt != nullptr && seed_opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("GRAVITON_SEED")) return std::strtoull(env, nullptr, 10);
  return fallback;
}

std::string effective_out(CLI::Option* out_opt, const std::string& flag_value) {
  if (out_opt != nullptr && out_opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("GRAVITON_OUT")) return env;
  return flag_value;
}

RunConfig load_config(const std::string& path, CLI::Option* seed_opt, uint64_t seed_flag) {
  RunConfig cfg = RunConfig::load(path);
  cfg.seed = effective_seed(seed_opt, seed_flag, cfg.seed);
  cfg.validate();
  return cfg;
}

synth::TextureFamily parse_texture(const std::string& s) {
  if (s == "stripes") return synth::TextureFamily::stripes;
  if (s == "checker") return synth::TextureFamily::checker;
  if (s == "glyphs") return synth::TextureFamily::glyphs;
  if (s == "solid") return synth::TextureFamily::solid;
  if (s == "mixed") return synth::TextureFamily::mixed;
  throw error(msg("unknown texture family: ", s));
}

// ---------------------------------------------------------------------------
// generate-data
// ---------------------------------------------------------------------------

struct GenerateArgs {
  int count = 64;
  int val = 8;
  int test = 8;
  uint64_t seed = 0;
  std::string out;
  int height = 64;
  int width = 48;
  std::string texture = "mixed";
  std::string deform = "affine";
  std::string occluder = "arm-bar";
  double max_rotation = -1;     // degrees; negative = scale with canvas
  double max_translation = -1;  // pixels; negative = scale with canvas
  double scale_jitter = 0.08;
};

int run_generate(const GenerateArgs& a) {
  synth::GeneratorSpec spec;
  spec.train_count = a.count;
  spec.val_count = a.val;
  spec.test_count = a.test;
  spec.height = a.height;
  spec.width = a.width;
  // default deformation ranges track the canvas so the H/4 bound holds at
  // every supported resolution
  spec.max_rotation_deg = a.max_rotation >= 0 ? a.max_rotation : 8.0 * a.height / 64.0;
  spec.max_translation_px = a.max_translation >= 0 ? a.max_translation : 4.0 * a.height / 64.0;
  spec.scale_jitter = a.scale_jitter;
  spec.bend_amplitude_px = 4.0 * a.height / 64.0;
  spec.texture = parse_texture(a.texture);
  spec.deform = a.deform == "sine-bend" ? synth::DeformFamily::sine_bend
                                        : synth::DeformFamily::affine;
  spec.occluder = a.occluder == "none" ? synth::Occluder::none : synth::Occluder::arm_bar;

  auto ds = synth::generate_dataset<float>(spec, a.seed);
  std::string diag;
  for (const auto& s : ds.train) {
    GRAVITON_REQUIRE(synth::verify_sample(s, &diag), "generated sample failed verification: ",
                     diag);
  }
  synth::save_dataset(ds, a.out, a.seed);
  write_manifest(a.out + "/command_manifest.txt",
                 {{"command", "generate-data"},
                  {"seed", std::to_string(a.seed)},
                  {"train", std::to_string(a.count)},
                  {"val", std::to_string(a.val)},
                  {"test", std::to_string(a.test)},
                  {"height", std::to_string(a.height)},
                  {"width", std::to_string(a.width)},
                  {"texture", a.texture},
                  {"deform", a.deform},
                  {"occluder", a.occluder}});
  std::cout << "wrote " << ds.train.size() << "+" << ds.val.size() << "+" << ds.test.size()
            << " samples to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-warp
// ---------------------------------------------------------------------------

struct TrainWarpArgs {
  std::string data_dir;
  std::string config;
  std::string out_checkpoint;
  std::string log_path;
  int iterations = 0;
  uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

template <typename T>
int run_train_warp_typed(const TrainWarpArgs& a, const RunConfig& cfg) {
  auto ds = synth::load_dataset<T>(a.data_dir);
  Stage1Model<T> model(Stage1Config::for_size(cfg.height, cfg.width));
  ParamStore<T> store;
  Rng rng(sub_seed(cfg.seed, "stage1-init"));
  model.init(store, rng);

  std::ofstream log;
  if (!a.log_path.empty()) {
    log.open(a.log_path);
    GRAVITON_REQUIRE(log.good(), "cannot open log file: ", a.log_path);
  }
  std::ostream* log_stream = a.log_path.empty() ? &std::cout : &log;
  auto result = train_stage1(ds.train, cfg, store, model, a.iterations, log_stream);

  save_checkpoint(store, a.out_checkpoint, cfg.hash());
  write_manifest(a.out_checkpoint + ".manifest",
                 {{"command", "train-warp"},
                  {"seed", std::to_string(cfg.seed)},
                  {"config_hash", std::to_string(cfg.hash())},
                  {"data_dir", a.data_dir},
                  {"iterations", std::to_string(result.iteration_losses.size())}});
  std::cout << "final loss " << result.iteration_losses.back().total << ", checkpoint "
            << a.out_checkpoint << "\n";
  return 0;
}

int run_train_warp(const TrainWarpArgs& a) {
  RunConfig cfg = load_config(a.config, a.seed_opt, a.seed);
  if (cfg.precision == "f64") return run_train_warp_typed<double>(a, cfg);
  return run_train_warp_typed<float>(a, cfg);
}

// ---------------------------------------------------------------------------
// train-diffusion
// ---------------------------------------------------------------------------

struct TrainDiffusionArgs {
  std::string data_dir;
  std::string stage1_ckpt;
  std::string config;
  std::string out_checkpoint;
  std::string log_path;
  int ae_iterations = 500;
  int iterations = 0;
  uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

template <typename T>
int run_train_diffusion_typed(const TrainDiffusionArgs& a, const RunConfig& cfg) {
  auto ds = synth::load_dataset<T>(a.data_dir);
  CheckpointInfo info;
  auto stage1_store = load_checkpoint<T>(a.stage1_ckpt, &info);
  GRAVITON_REQUIRE(info.config_hash == cfg.hash(),
                   "stage-1 checkpoint was trained under a different config (hash mismatch)");
  Stage1Model<T> stage1(Stage1Config::for_size(cfg.height, cfg.width));
  require_params(stage1_store, stage1.param_names(), "train-diffusion");

  Stage2Model<T> model(Stage2Config::for_size(cfg.height, cfg.width));
  ParamStore<T> store;
  Rng rng(sub_seed(cfg.seed, "stage2-init"));
  model.init(store, rng);

  int iterations = a.iterations;
  if (iterations <= 0) {
    const int per_epoch =
        (static_cast<int>(ds.train.size()) + cfg.batch_size - 1) / cfg.batch_size;
    iterations = cfg.epochs * per_epoch;
  }

  std::ofstream log;
  if (!a.log_path.empty()) {
    log.open(a.log_path);
    GRAVITON_REQUIRE(log.good(), "cannot open log file: ", a.log_path);
  }
  std::ostream* log_stream = a.log_path.empty() ? &std::cout : &log;
  auto result = train_stage2(ds.train, stage1_store, stage1, store, model, cfg,
                             a.ae_iterations, iterations, log_stream);

  save_checkpoint(store, a.out_checkpoint, cfg.hash());
  write_manifest(a.out_checkpoint + ".manifest",
                 {{"command", "train-diffusion"},
                  {"seed", std::to_string(cfg.seed)},
                  {"config_hash", std::to_string(cfg.hash())},
                  {"data_dir", a.data_dir},
                  {"stage1_ckpt", a.stage1_ckpt},
                  {"ae_iterations", std::to_string(a.ae_iterations)},
                  {"iterations", std::to_string(iterations)}});
  std::cout << "ae recon L1 " << result.ae_recon_l1 << ", final eps-mse "
            << result.eps_mse.back() << ", checkpoint " << a.out_checkpoint << "\n";
  return 0;
}

int run_train_diffusion(const TrainDiffusionArgs& a) {
  RunConfig cfg = load_config(a.config, a.seed_opt, a.seed);
  if (cfg.precision == "f64") return run_train_diffusion_typed<double>(a, cfg);
  return run_train_diffusion_typed<float>(a, cfg);
}

// ---------------------------------------------------------------------------
// warp (single-sample stage-1 application)
// ---------------------------------------------------------------------------

struct WarpArgs {
  std::string checkpoint;
  std::string config;
  std::string sample_dir;
  std::string out;
  uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

template <typename T>
int run_warp_typed(const WarpArgs& a, const RunConfig& cfg) {
  CheckpointInfo info;
  auto store = load_checkpoint<T>(a.checkpoint, &info);
  GRAVITON_REQUIRE(info.config_hash == cfg.hash(),
                   "checkpoint was trained under a different config (hash mismatch)");
  Stage1Model<T> model(Stage1Config::for_size(cfg.height, cfg.width));
  require_params(store, model.param_names(), "warp");

  auto sample = synth::load_sample<T>(a.sample_dir);
  auto out = model.infer(store, sample.garment, sample.pose, sample.agnostic);

  std::filesystem::create_directories(a.out);
  io::write_pfm(out.warp_g, a.out + "/warp_g.pfm");
  io::write_pfm(out.tryon_c, a.out + "/tryon_c.pfm");
  io::write_ppm(out.warp_g, a.out + "/warp_g.ppm");
  io::write_ppm(out.tryon_c, a.out + "/tryon_c.ppm");
  io::write_ppm(io::flow_to_color(out.flow_src), a.out + "/flow_src.ppm");
  io::write_ppm(io::flow_to_color(out.flow_ref), a.out + "/flow_ref.ppm");
  io::write_ppm(out.attention, a.out + "/attention.ppm");
  write_manifest(a.out + "/manifest.txt", {{"command", "warp"},
                                           {"seed", std::to_string(cfg.seed)},
                                           {"config_hash", std::to_string(cfg.hash())},
                                           {"checkpoint", a.checkpoint},
                                           {"sample_dir", a.sample_dir}});
  std::cout << "wrote warp outputs to " << a.out << "\n";
  return 0;
}

int run_warp(const WarpArgs& a) {
  RunConfig cfg = load_config(a.config, a.seed_opt, a.seed);
  if (cfg.precision == "f64") return run_warp_typed<double>(a, cfg);
  return run_warp_typed<float>(a, cfg);
}

// ---------------------------------------------------------------------------
// tryon (single sample, both stages)
// ---------------------------------------------------------------------------

struct TryonArgs {
  std::string stage1_ckpt;
  std::string stage2_ckpt;
  std::string config;
  std::string garment_dir;
  std::string person_dir;
  int steps = 50;
  uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
};

template <typename T>
int run_tryon_typed(const TryonArgs& a, const RunConfig& cfg) {
  CheckpointInfo info1, info2;
  auto s1_store = load_checkpoint<T>(a.stage1_ckpt, &info1);
  auto s2_store = load_checkpoint<T>(a.stage2_ckpt, &info2);
  GRAVITON_REQUIRE(info1.config_hash == cfg.hash(), "stage-1 checkpoint hash mismatch");
  GRAVITON_REQUIRE(info2.config_hash == cfg.hash(), "stage-2 checkpoint hash mismatch");
  Stage1Model<T> stage1(Stage1Config::for_size(cfg.height, cfg.width));
  Stage2Model<T> stage2(Stage2Config::for_size(cfg.height, cfg.width));
  require_params(s1_store, stage1.param_names(), "tryon");
  require_params(s2_store, stage2.param_names(), "tryon");

  auto garment = io::read_pfm<T>(a.garment_dir + "/garment.pfm");
  std::ifstream capf(a.garment_dir + "/caption.txt");
  GRAVITON_REQUIRE(capf.good(), "caption file not found in ", a.garment_dir);
  std::string caption;
  std::getline(capf, caption);
  auto pose = io::read_pfm<T>(a.person_dir + "/pose.pfm");
  auto agnostic = io::read_pfm<T>(a.person_dir + "/agnostic.pfm");

  auto s1_out = stage1.infer(s1_store, garment, pose, agnostic);
  auto inputs = derive_stage2_inputs(s1_out.tryon_c, pose, agnostic);
  auto tryon = sample_tryon(s2_store, stage2, inputs, s1_out.warp_g, caption, garment, a.steps,
                            cfg.seed);

  std::filesystem::create_directories(a.out);
  io::write_pfm(tryon, a.out + "/tryon.pfm");
  io::write_ppm(tryon, a.out + "/tryon.ppm");
  io::write_pfm(s1_out.warp_g, a.out + "/warp_g.pfm");
  io::write_pfm(s1_out.tryon_c, a.out + "/tryon_c.pfm");
  write_manifest(a.out + "/manifest.txt", {{"command", "tryon"},
                                           {"seed", std::to_string(cfg.seed)},
                                           {"config_hash", std::to_string(cfg.hash())},
                                           {"garment", a.garment_dir},
                                           {"person_dir", a.person_dir},
                                           {"steps", std::to_string(a.steps)}});
  std::cout << "wrote tryon to " << a.out << "\n";
  return 0;
}

int run_tryon(const TryonArgs& a) {
  RunConfig cfg = load_config(a.config, a.seed_opt, a.seed);
  if (cfg.precision == "f64") return run_tryon_typed<double>(a, cfg);
  return run_tryon_typed<float>(a, cfg);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data_dir;
  std::string stage1_ckpt;
  std::string stage2_ckpt;
  std::string config;
  std::string out;
  std::string split = "test";
  int steps = 50;
  uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

template <typename T>
int run_eval_typed(const EvalArgs& a, const RunConfig& cfg) {
  auto ds = synth::load_dataset<T>(a.data_dir);
  const auto& split = a.split == "val" ? ds.val : (a.split == "train" ? ds.train : ds.test);
  GRAVITON_REQUIRE(split.size() >= 2, "eval needs at least two samples in split '", a.split, "'");

  CheckpointInfo info1, info2;
  auto s1_store = load_checkpoint<T>(a.stage1_ckpt, &info1);
  auto s2_store = load_checkpoint<T>(a.stage2_ckpt, &info2);
  GRAVITON_REQUIRE(info1.config_hash == cfg.hash(), "stage-1 checkpoint hash mismatch");
  GRAVITON_REQUIRE(info2.config_hash == cfg.hash(), "stage-2 checkpoint hash mismatch");
  Stage1Model<T> stage1(Stage1Config::for_size(cfg.height, cfg.width));
  Stage2Model<T> stage2(Stage2Config::for_size(cfg.height, cfg.width));
  require_params(s1_store, stage1.param_names(), "eval");
  require_params(s2_store, stage2.param_names(), "eval");

  FixedFeatureNet<T> ffn;
  const int n = static_cast<int>(split.size());
  const int d = ffn.embed_dim();
  Tensor<T> feats_real({n, d}), feats_paired({n, d}), feats_unpaired({n, d});
  double ssim_acc = 0, lpips_acc = 0;

  for (int i = 0; i < n; ++i) {
    const auto& s = split[static_cast<size_t>(i)];
    // paired: the person's own garment; unpaired: the next sample's garment
    auto s1_out = stage1.infer(s1_store, s.garment, s.pose, s.agnostic);
    auto inputs = derive_stage2_inputs(s1_out.tryon_c, s);
    auto tryon_p = sample_tryon(s2_store, stage2, inputs, s1_out.warp_g, s.caption, s.garment,
                                a.steps, sub_seed(cfg.seed, "eval-paired", i));
    const auto& other = split[static_cast<size_t>((i + 1) % n)];
    auto s1_out_u = stage1.infer(s1_store, other.garment, s.pose, s.agnostic);
    auto inputs_u = derive_stage2_inputs(s1_out_u.tryon_c, s);
    auto tryon_u = sample_tryon(s2_store, stage2, inputs_u, s1_out_u.warp_g, other.caption,
                                other.garment, a.steps, sub_seed(cfg.seed, "eval-unpaired", i));

    ssim_acc += metrics::ssim(tryon_p, s.person);
    lpips_acc += metrics::lpips_proxy(ffn, tryon_p, s.person);
    auto e_real = ffn.embed(s.person);
    auto e_p = ffn.embed(tryon_p);
    auto e_u = ffn.embed(tryon_u);
    for (int j = 0; j < d; ++j) {
      feats_real.at(i, j) = e_real[j];
      feats_paired.at(i, j) = e_p[j];
      feats_unpaired.at(i, j) = e_u[j];
    }
  }

  metrics::MetricReport report;
  report.ssim = ssim_acc / n;
  report.lpips_proxy = lpips_acc / n;
  report.fid_paired = metrics::fid(feats_paired, feats_real);
  report.kid_paired = metrics::kid(feats_paired, feats_real);
  report.fid_unpaired = metrics::fid(feats_unpaired, feats_real);
  report.kid_unpaired = metrics::kid(feats_unpaired, feats_real);
  report.samples = n;

  std::filesystem::create_directories(a.out);
  {
    std::ofstream f(a.out + "/metrics.txt");
    GRAVITON_REQUIRE(f.good(), "cannot write metrics: ", a.out, "/metrics.txt");
    f << report.to_kv();
    f << "config_hash=" << cfg.hash() << "\n";
    f << "seed=" << cfg.seed << "\n";
    f << "split=" << a.split << "\n";
  }
  write_manifest(a.out + "/manifest.txt", {{"command", "eval"},
                                           {"seed", std::to_string(cfg.seed)},
                                           {"config_hash", std::to_string(cfg.hash())},
                                           {"data_dir", a.data_dir},
                                           {"split", a.split},
                                           {"steps", std::to_string(a.steps)}});
  std::cout << report.to_table();
  return 0;
}

int run_eval(const EvalArgs& a) {
  RunConfig cfg = load_config(a.config, a.seed_opt, a.seed);
  if (cfg.precision == "f64") return run_eval_typed<double>(a, cfg);
  return run_eval_typed<float>(a, cfg);
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

int run_selftest() {
  auto results = testing::run_oracle_suite();
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "ok   " : "FAIL ") << r.name << " (max error " << r.max_error
              << ", tolerance " << r.tolerance << ")\n";
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    std::cerr << "selftest failed\n";
    return 2;
  }
  std::cout << "all oracles passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-guided garment warping with diffusion-based try-on"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate-data", "generate a synthetic try-on dataset");
  gen_cmd->add_option("--count", gen.count, "training sample count");
  gen_cmd->add_option("--val", gen.val, "validation sample count");
  gen_cmd->add_option("--test", gen.test, "test sample count");
  auto* gen_seed = gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--height", gen.height, "canvas height");
  gen_cmd->add_option("--width", gen.width, "canvas width");
  gen_cmd->add_option("--texture", gen.texture, "stripes|checker|glyphs|solid|mixed");
  gen_cmd->add_option("--deform", gen.deform, "affine|sine-bend");
  gen_cmd->add_option("--occluder", gen.occluder, "arm-bar|none");
  gen_cmd->add_option("--max-rotation", gen.max_rotation, "max rotation in degrees");
  gen_cmd->add_option("--max-translation", gen.max_translation, "max translation in pixels");
  gen_cmd->add_option("--scale-jitter", gen.scale_jitter, "scale jitter fraction");

  TrainWarpArgs tw;
  auto* tw_cmd = app.add_subcommand("train-warp", "train the stage-1 warping model");
  tw_cmd->add_option("--data-dir", tw.data_dir, "dataset directory")->required();
  tw_cmd->add_option("--config", tw.config, "run config file")->required();
  tw_cmd->add_option("--out-checkpoint", tw.out_checkpoint, "checkpoint path")->required();
  tw_cmd->add_option("--log", tw.log_path, "per-epoch loss log file");
  tw_cmd->add_option("--iterations", tw.iterations, "cap on optimizer steps (0 = all epochs)");
  tw.seed_opt = tw_cmd->add_option("--seed", tw.seed, "override the config seed");

  TrainDiffusionArgs td;
  auto* td_cmd = app.add_subcommand("train-diffusion", "train the stage-2 diffusion model");
  td_cmd->add_option("--data-dir", td.data_dir, "dataset directory")->required();
  td_cmd->add_option("--stage1-ckpt", td.stage1_ckpt, "stage-1 checkpoint")->required();
  td_cmd->add_option("--config", td.config, "run config file")->required();
  td_cmd->add_option("--out-checkpoint", td.out_checkpoint, "checkpoint path")->required();
  td_cmd->add_option("--log", td.log_path, "loss log file");
  td_cmd->add_option("--ae-iterations", td.ae_iterations, "autoencoder pretraining steps");
  td_cmd->add_option("--iterations", td.iterations, "denoiser steps (0 = from epochs)");
  td.seed_opt = td_cmd->add_option("--seed", td.seed, "override the config seed");

  WarpArgs wa;
  auto* wa_cmd = app.add_subcommand("warp", "apply a stage-1 checkpoint to one sample");
  wa_cmd->add_option("--checkpoint", wa.checkpoint, "stage-1 checkpoint")->required();
  wa_cmd->add_option("--config", wa.config, "run config file")->required();
  wa_cmd->add_option("--sample-dir", wa.sample_dir, "sample directory")->required();
  wa_cmd->add_option("--out", wa.out, "output directory")->required();
  wa.seed_opt = wa_cmd->add_option("--seed", wa.seed, "override the config seed");

  TryonArgs ty;
  auto* ty_cmd = app.add_subcommand("tryon", "full two-stage try-on for one sample");
  ty_cmd->add_option("--stage1-ckpt", ty.stage1_ckpt, "stage-1 checkpoint")->required();
  ty_cmd->add_option("--stage2-ckpt", ty.stage2_ckpt, "stage-2 checkpoint")->required();
  ty_cmd->add_option("--config", ty.config, "run config file")->required();
  ty_cmd->add_option("--garment", ty.garment_dir, "garment sample directory")->required();
  ty_cmd->add_option("--person-dir", ty.person_dir, "person sample directory")->required();
  ty_cmd->add_option("--steps", ty.steps, "sampling steps");
  ty.seed_opt = ty_cmd->add_option("--seed", ty.seed, "override the config seed");
  ty_cmd->add_option("--out", ty.out, "output directory")->required();

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "paired/unpaired metric evaluation");
  ev_cmd->add_option("--data-dir", ev.data_dir, "dataset directory")->required();
  ev_cmd->add_option("--stage1-ckpt", ev.stage1_ckpt, "stage-1 checkpoint")->required();
  ev_cmd->add_option("--stage2-ckpt", ev.stage2_ckpt, "stage-2 checkpoint")->required();
  ev_cmd->add_option("--config", ev.config, "run config file")->required();
  ev_cmd->add_option("--out", ev.out, "output directory")->required();
  ev_cmd->add_option("--split", ev.split, "train|val|test");
  ev_cmd->add_option("--steps", ev.steps, "sampling steps");
  ev.seed_opt = ev_cmd->add_option("--seed", ev.seed, "override the config seed");

  auto* st_cmd = app.add_subcommand("selftest", "run the oracle suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help();
    return 1;
  }

  try {
    if (gen_cmd->parsed()) {
      gen.seed = effective_seed(gen_seed, gen.seed, gen.seed);
      gen.out = effective_out(gen_cmd->get_option("--out"), gen.out);
      return run_generate(gen);
    }
    if (tw_cmd->parsed()) return run_train_warp(tw);
    if (td_cmd->parsed()) return run_train_diffusion(td);
    if (wa_cmd->parsed()) {
      wa.out = effective_out(wa_cmd->get_option("--out"), wa.out);
      return run_warp(wa);
    }
    if (ty_cmd->parsed()) {
      ty.out = effective_out(ty_cmd->get_option("--out"), ty.out);
      return run_tryon(ty);
    }
    if (ev_cmd->parsed()) {
      ev.out = effective_out(ev_cmd->get_option("--out"), ev.out);
      return run_eval(ev);
    }
    if (st_cmd->parsed()) return run_selftest();
  } catch (const graviton::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
