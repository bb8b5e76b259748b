#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "graviton/core/rng.hpp"
#include "graviton/io/flo.hpp"
#include "graviton/io/pfm.hpp"
#include "graviton/losses.hpp"
#include "graviton/warp.hpp"

namespace graviton::synth {

// Procedural try-on pairs with exact ground truth. Scene convention: mid-gray
// (0) background everywhere, fabric and body colors keep at least one channel
// above 0.2 in magnitude so foreground thresholding is unambiguous.

enum class TextureFamily { stripes, checker, glyphs, solid, mixed };
enum class DeformFamily { affine, sine_bend };
enum class Occluder { none, arm_bar };

inline const char* texture_word(TextureFamily f) {
  switch (f) {
    case TextureFamily::stripes: return "striped";
    case TextureFamily::checker: return "checkered";
    case TextureFamily::glyphs: return "glyphed";
    case TextureFamily::solid: return "solid";
    default: return "mixed";
  }
}

struct GeneratorSpec {
  TextureFamily texture = TextureFamily::mixed;
  DeformFamily deform = DeformFamily::affine;
  Occluder occluder = Occluder::arm_bar;
  int train_count = 64;
  int val_count = 8;
  int test_count = 8;
  int height = 64;
  int width = 48;
  // backward-map parameter ranges
  double max_rotation_deg = 8.0;
  double max_translation_px = 4.0;
  double scale_jitter = 0.08;
  double bend_amplitude_px = 4.0;
  double bend_period_px = 40.0;

  /// worst-case flow offset over the canvas must stay within H/4
  double flow_bound() const {
    const double r_max = 0.5 * std::hypot(static_cast<double>(height), static_cast<double>(width));
    if (deform == DeformFamily::affine) {
      const double theta = max_rotation_deg * 3.14159265358979323846 / 180.0;
      double worst = 0.0;
      for (double s : {1.0 - scale_jitter, 1.0 + scale_jitter}) {
        const double gain = std::sqrt(s * s - 2.0 * s * std::cos(theta) + 1.0);
        worst = std::max(worst, gain);
      }
      return worst * r_max + max_translation_px * std::sqrt(2.0);
    }
    return bend_amplitude_px + max_translation_px * std::sqrt(2.0);
  }

  void validate() const {
    GRAVITON_REQUIRE(train_count > 0 && val_count > 0 && test_count > 0,
                     "generator: split counts must be positive");
    GRAVITON_REQUIRE(height % 8 == 0 && width % 8 == 0,
                     "generator: canvas must be divisible by 8");
    GRAVITON_REQUIRE(flow_bound() <= height / 4.0,
                     "generator: deformation out of range, worst-case offset ", flow_bound(),
                     " exceeds H/4 = ", height / 4.0);
  }
};

/// explicit backward deformation of one sample
struct DeformParams {
  double rotation_rad = 0.0;
  double scale = 1.0;
  double tx = 0.0;  // sampling offsets in pixels (backward convention)
  double ty = 0.0;
  double bend_amp = 0.0;
  double bend_phase = 0.0;
  double bend_period = 40.0;
};

template <typename T>
struct TryonSample {
  Tensor<T> garment;      // 3 x H x W, in-shop garment on gray background
  Tensor<T> pose;         // 3 x H x W stick-figure render
  Tensor<T> agnostic;     // 3 x H x W person with garment region neutralized
  Tensor<T> gt_warp;      // 3 x H x W warped garment with occlusion holes burned in
  Tensor<T> gt_flow;      // 2 x H x W backward flow
  Tensor<T> mask;         // 1 x H x W, 1 = garment visible (0 on the occluder bar)
  Tensor<T> person;       // 3 x H x W ground-truth tryon
  Tensor<T> coarse_body;  // 1 x H x W person silhouette
  std::string caption;
};

template <typename T>
struct Dataset {
  std::vector<TryonSample<T>> train, val, test;
};

namespace detail {

struct Color {
  double r, g, b;
  const char* word;
};

inline const Color* palette() {
  static const Color p[] = {
      {0.9, -0.6, -0.6, "red"},      {-0.6, 0.8, -0.5, "green"}, {-0.5, -0.4, 0.9, "blue"},
      {0.9, 0.8, -0.5, "yellow"},    {0.8, -0.5, 0.8, "magenta"}, {-0.5, 0.8, 0.8, "cyan"},
      {0.9, 0.9, 0.9, "white"},
  };
  return p;
}
inline constexpr int kPaletteSize = 7;

template <typename T>
void put(Tensor<T>& img, int y, int x, const Color& c) {
  if (y < 0 || y >= img.dim(1) || x < 0 || x >= img.dim(2)) return;
  img.at(0, y, x) = static_cast<T>(c.r);
  img.at(1, y, x) = static_cast<T>(c.g);
  img.at(2, y, x) = static_cast<T>(c.b);
}

template <typename T>
void fill_rect(Tensor<T>& img, int y0, int y1, int x0, int x1, const Color& c) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) put(img, y, x, c);
}

template <typename T>
void fill_disc(Tensor<T>& img, double cy, double cx, double r, const Color& c) {
  for (int y = static_cast<int>(cy - r) - 1; y <= static_cast<int>(cy + r) + 1; ++y)
    for (int x = static_cast<int>(cx - r) - 1; x <= static_cast<int>(cx + r) + 1; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) put(img, y, x, c);
}

/// thick line segment rasterized by distance-to-segment
template <typename T>
void fill_bar(Tensor<T>& img, double y0, double x0, double y1, double x1, double half_width,
              const Color& c, Tensor<T>* stencil = nullptr) {
  const double dy = y1 - y0, dx = x1 - x0;
  const double len2 = dy * dy + dx * dx;
  const int ylo = static_cast<int>(std::min(y0, y1) - half_width) - 1;
  const int yhi = static_cast<int>(std::max(y0, y1) + half_width) + 1;
  const int xlo = static_cast<int>(std::min(x0, x1) - half_width) - 1;
  const int xhi = static_cast<int>(std::max(x0, x1) + half_width) + 1;
  for (int y = ylo; y <= yhi; ++y) {
    for (int x = xlo; x <= xhi; ++x) {
      double t = len2 > 0 ? ((y - y0) * dy + (x - x0) * dx) / len2 : 0.0;
      t = std::min(1.0, std::max(0.0, t));
      const double py = y0 + t * dy, px = x0 + t * dx;
      if ((y - py) * (y - py) + (x - px) * (x - px) <= half_width * half_width) {
        put(img, y, x, c);
        if (stencil != nullptr && y >= 0 && y < img.dim(1) && x >= 0 && x < img.dim(2)) {
          stencil->at(0, y, x) = T(1);
        }
      }
    }
  }
}

template <typename T>
Tensor<T> dilate3(const Tensor<T>& mask) {
  const int H = mask.dim(1), W = mask.dim(2);
  Tensor<T> out({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      T m = T(0);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < H && xx >= 0 && xx < W) m = std::max(m, mask.at(0, yy, xx));
        }
      out.at(0, y, x) = m;
    }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> make_flow(const DeformParams& p, DeformFamily family, int H, int W) {
  Tensor<T> flow({2, H, W});
  const double cy = 0.5 * (H - 1), cx = 0.5 * (W - 1);
  if (family == DeformFamily::affine) {
    const double cs = std::cos(p.rotation_rad) * p.scale;
    const double sn = std::sin(p.rotation_rad) * p.scale;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double ry = y - cy, rx = x - cx;
        const double sx = cx + cs * rx - sn * ry + p.tx;
        const double sy = cy + sn * rx + cs * ry + p.ty;
        flow.at(0, y, x) = static_cast<T>(sx - x);
        flow.at(1, y, x) = static_cast<T>(sy - y);
      }
  } else {
    for (int y = 0; y < H; ++y) {
      const double off =
          p.bend_amp * std::sin(2.0 * 3.14159265358979323846 * y / p.bend_period + p.bend_phase);
      for (int x = 0; x < W; ++x) {
        flow.at(0, y, x) = static_cast<T>(off + p.tx);
        flow.at(1, y, x) = static_cast<T>(p.ty);
      }
    }
  }
  return flow;
}

template <typename T>
struct GarmentDraw {
  Tensor<T> image;
  std::string caption;
};

template <typename T>
GarmentDraw<T> make_garment(Rng& rng, TextureFamily family, int H, int W) {
  using detail::palette;
  if (family == TextureFamily::mixed) {
    family = static_cast<TextureFamily>(rng.below(4));
  }
  const auto& c_a = palette()[rng.below(detail::kPaletteSize)];
  auto c_b = palette()[rng.below(detail::kPaletteSize)];
  const bool long_sleeve = rng.uniform() < 0.5;

  Tensor<T> img({3, H, W});
  Tensor<T> sil({1, H, W});
  auto mark = [&](int y0, int y1, int x0, int x1) {
    for (int y = std::max(0, y0); y < std::min(H, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(W, x1); ++x) sil.at(0, y, x) = T(1);
  };
  // torso block plus sleeves
  const int ty0 = static_cast<int>(0.30 * H), ty1 = static_cast<int>(0.68 * H);
  const int tx0 = static_cast<int>(0.30 * W), tx1 = static_cast<int>(0.70 * W);
  mark(ty0, ty1, tx0, tx1);
  const int sy1 = static_cast<int>(long_sleeve ? 0.62 * H : 0.45 * H);
  const int sw = static_cast<int>(long_sleeve ? 0.14 * W : 0.12 * W);
  mark(ty0 + 1, sy1, tx0 - sw, tx0);
  mark(ty0 + 1, sy1, tx1, tx1 + sw);

  const int band = 3 + static_cast<int>(rng.below(3));
  const int cell = 3 + static_cast<int>(rng.below(4));
  // glyph placement decided before painting so the texture is deterministic
  std::vector<std::array<int, 3>> glyphs;
  if (family == TextureFamily::glyphs) {
    const int count = 4 + static_cast<int>(rng.below(4));
    for (int i = 0; i < count; ++i) {
      glyphs.push_back({static_cast<int>(ty0 + 2 + rng.below(ty1 - ty0 - 4)),
                        static_cast<int>(tx0 + 2 + rng.below(tx1 - tx0 - 4)),
                        2 + static_cast<int>(rng.below(3))});
    }
  }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (sil.at(0, y, x) == T(0)) continue;
      bool use_b = false;
      switch (family) {
        case TextureFamily::stripes: use_b = (y / band) % 2 == 1; break;
        case TextureFamily::checker: use_b = ((y / cell) + (x / cell)) % 2 == 1; break;
        default: break;
      }
      detail::put(img, y, x, use_b ? c_b : c_a);
    }
  for (const auto& g : glyphs) detail::fill_disc(img, g[0], g[1], g[2], c_b);

  GarmentDraw<T> out;
  out.image = std::move(img);
  out.caption = std::string(c_a.word) + " " + texture_word(family) + " " +
                (long_sleeve ? "long" : "short") + "-sleeve top";
  return out;
}

template <typename T>
TryonSample<T> make_sample(const GeneratorSpec& spec, const DeformParams& params, Rng& rng) {
  const int H = spec.height, W = spec.width;
  static const detail::Color kSkin = {0.8, 0.35, 0.2, "skin"};
  static const detail::Color kPants = {-0.4, -0.4, 0.45, "pants"};
  static const detail::Color kBoneR = {0.9, -1.0, -1.0, "bone"};
  static const detail::Color kBoneG = {-1.0, 0.9, -1.0, "bone"};
  static const detail::Color kBoneB = {-1.0, -1.0, 0.9, "bone"};

  TryonSample<T> s;
  auto garment = make_garment<T>(rng, spec.texture, H, W);
  s.garment = std::move(garment.image);
  s.caption = std::move(garment.caption);
  s.gt_flow = make_flow<T>(params, spec.deform, H, W);

  Tensor<T> warp_full = backward_warp(s.garment, s.gt_flow);

  // person: legs, head, arms, then the warped garment, then the occluder
  s.person = Tensor<T>({3, H, W});
  detail::fill_rect(s.person, static_cast<int>(0.66 * H), static_cast<int>(0.95 * H),
                    static_cast<int>(0.33 * W), static_cast<int>(0.48 * W), kPants);
  detail::fill_rect(s.person, static_cast<int>(0.66 * H), static_cast<int>(0.95 * H),
                    static_cast<int>(0.52 * W), static_cast<int>(0.67 * W), kPants);
  detail::fill_rect(s.person, static_cast<int>(0.30 * H), static_cast<int>(0.67 * H),
                    static_cast<int>(0.33 * W), static_cast<int>(0.67 * W), kSkin);
  detail::fill_disc(s.person, 0.19 * H, 0.5 * W, 0.085 * H, kSkin);
  const double arm_drop = rng.uniform(0.18, 0.30);
  detail::fill_bar(s.person, 0.33 * H, 0.30 * W, (0.33 + arm_drop) * H, 0.14 * W, 0.022 * H,
                   kSkin);
  detail::fill_bar(s.person, 0.33 * H, 0.70 * W, (0.33 + arm_drop) * H, 0.86 * W, 0.022 * H,
                   kSkin);

  Tensor<T> warp_fg = foreground_mask(warp_full);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (warp_fg.at(0, y, x) == T(1))
        for (int c = 0; c < 3; ++c) s.person.at(c, y, x) = warp_full.at(c, y, x);

  // occluder: an arm bar crossing the torso, drawn over the garment
  Tensor<T> bar({1, H, W});
  if (spec.occluder == Occluder::arm_bar) {
    const double angle = rng.uniform(-0.9, 0.9);
    const double cyb = rng.uniform(0.40, 0.58) * H;
    const double cxb = 0.5 * W;
    const double len = 0.45 * W;
    detail::fill_bar(s.person, cyb - len * std::sin(angle), cxb - len * std::cos(angle),
                     cyb + len * std::sin(angle), cxb + len * std::cos(angle),
                     0.025 * H + rng.uniform(0.0, 0.012) * H, kSkin, &bar);
  }

  // occlusion mask and the holed ground-truth warp
  s.mask = Tensor<T>({1, H, W});
  for (int64_t i = 0; i < s.mask.size(); ++i) s.mask[i] = T(1) - bar[i];
  s.gt_warp = warp_full;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) s.gt_warp.at(c, y, x) *= s.mask.at(0, y, x);

  s.coarse_body = foreground_mask(s.person);

  // agnostic: garment region (slightly dilated) back to mid-gray
  s.agnostic = s.person;
  Tensor<T> erase = detail::dilate3(warp_fg);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (erase.at(0, y, x) == T(1))
        for (int c = 0; c < 3; ++c) s.agnostic.at(c, y, x) = T(0);

  // pose render: skeleton sticks in distinct channels
  s.pose = Tensor<T>({3, H, W});
  detail::fill_bar(s.pose, 0.19 * H, 0.5 * W, 0.66 * H, 0.5 * W, 0.012 * H, kBoneR);
  detail::fill_bar(s.pose, 0.33 * H, 0.30 * W, 0.33 * H, 0.70 * W, 0.012 * H, kBoneR);
  detail::fill_bar(s.pose, 0.33 * H, 0.30 * W, (0.33 + arm_drop) * H, 0.14 * W, 0.012 * H,
                   kBoneB);
  detail::fill_bar(s.pose, 0.33 * H, 0.70 * W, (0.33 + arm_drop) * H, 0.86 * W, 0.012 * H,
                   kBoneB);
  detail::fill_bar(s.pose, 0.66 * H, 0.40 * W, 0.93 * H, 0.40 * W, 0.012 * H, kBoneG);
  detail::fill_bar(s.pose, 0.66 * H, 0.60 * W, 0.93 * H, 0.60 * W, 0.012 * H, kBoneG);
  detail::fill_disc(s.pose, 0.19 * H, 0.5 * W, 0.03 * H, kBoneG);

  return s;
}

inline DeformParams draw_params(const GeneratorSpec& spec, Rng& rng) {
  DeformParams p;
  if (spec.deform == DeformFamily::affine) {
    p.rotation_rad = rng.uniform(-1.0, 1.0) * spec.max_rotation_deg * 3.14159265358979323846 / 180.0;
    p.scale = 1.0 + rng.uniform(-1.0, 1.0) * spec.scale_jitter;
  } else {
    p.bend_amp = rng.uniform(0.3, 1.0) * spec.bend_amplitude_px;
    p.bend_phase = rng.uniform(0.0, 6.28318530717958647692);
    p.bend_period = spec.bend_period_px;
  }
  p.tx = rng.uniform(-1.0, 1.0) * spec.max_translation_px;
  p.ty = rng.uniform(-1.0, 1.0) * spec.max_translation_px;
  return p;
}

template <typename T>
Dataset<T> generate_dataset(const GeneratorSpec& spec, uint64_t seed) {
  spec.validate();
  Dataset<T> ds;
  auto fill = [&](std::vector<TryonSample<T>>& out, const char* split, int count) {
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      Rng rng(sub_seed(seed, split, static_cast<uint64_t>(i)));
      auto params = draw_params(spec, rng);
      out.push_back(make_sample<T>(spec, params, rng));
    }
  };
  fill(ds.train, "train", spec.train_count);
  fill(ds.val, "val", spec.val_count);
  fill(ds.test, "test", spec.test_count);
  return ds;
}

/// Re-derives the holed warp from (garment, flow, mask) through warp_ops and
/// checks every invariant the generator promises.
template <typename T>
bool verify_sample(const TryonSample<T>& s, std::string* diagnostic = nullptr) {
  auto fail = [&](const std::string& why) {
    if (diagnostic != nullptr) *diagnostic = why;
    return false;
  };
  for (const auto* img : {&s.garment, &s.pose, &s.agnostic, &s.gt_warp, &s.person}) {
    for (int64_t i = 0; i < img->size(); ++i)
      if (std::abs(static_cast<double>((*img)[i])) > 1.0) return fail("image value out of range");
  }
  for (const auto* m : {&s.mask, &s.coarse_body}) {
    for (int64_t i = 0; i < m->size(); ++i)
      if ((*m)[i] != T(0) && (*m)[i] != T(1)) return fail("mask value not binary");
  }
  Tensor<T> rederived = backward_warp(s.garment, s.gt_flow);
  const int H = s.garment.dim(1), W = s.garment.dim(2);
  double worst = 0;
  int wc = 0, wy = 0, wx = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double expect =
            static_cast<double>(rederived.at(c, y, x)) * static_cast<double>(s.mask.at(0, y, x));
        const double got = static_cast<double>(s.gt_warp.at(c, y, x));
        const double err = std::abs(expect - got);
        if (err > worst) {
          worst = err;
          wc = c;
          wy = y;
          wx = x;
        }
      }
  if (worst >= 1e-6) {
    return fail(msg("gt warp mismatch, max error ", worst, " at (c=", wc, ", y=", wy,
                    ", x=", wx, ")"));
  }
  return true;
}

// ---------------------------------------------------------------------------
// directory persistence
// ---------------------------------------------------------------------------

template <typename T>
void save_sample(const TryonSample<T>& s, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  io::write_pfm(s.garment, dir + "/garment.pfm");
  io::write_pfm(s.pose, dir + "/pose.pfm");
  io::write_pfm(s.agnostic, dir + "/agnostic.pfm");
  io::write_pfm(s.gt_warp, dir + "/gt_warp.pfm");
  io::write_pfm(s.person, dir + "/person.pfm");
  io::write_pfm(s.mask, dir + "/mask.pfm");
  io::write_pfm(s.coarse_body, dir + "/coarse_body.pfm");
  io::write_flo(s.gt_flow, dir + "/flow.flo");
  std::ofstream cap(dir + "/caption.txt");
  cap << s.caption << "\n";
  GRAVITON_REQUIRE(cap.good(), "failed writing caption in ", dir);
}

template <typename T>
TryonSample<T> load_sample(const std::string& dir) {
  TryonSample<T> s;
  s.garment = io::read_pfm<T>(dir + "/garment.pfm");
  s.pose = io::read_pfm<T>(dir + "/pose.pfm");
  s.agnostic = io::read_pfm<T>(dir + "/agnostic.pfm");
  s.gt_warp = io::read_pfm<T>(dir + "/gt_warp.pfm");
  s.person = io::read_pfm<T>(dir + "/person.pfm");
  s.mask = io::read_pfm<T>(dir + "/mask.pfm");
  s.coarse_body = io::read_pfm<T>(dir + "/coarse_body.pfm");
  s.gt_flow = io::read_flo<T>(dir + "/flow.flo");
  std::ifstream cap(dir + "/caption.txt");
  GRAVITON_REQUIRE(cap.good(), "caption file not found in ", dir);
  std::getline(cap, s.caption);
  return s;
}

template <typename T>
void save_dataset(const Dataset<T>& ds, const std::string& dir, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.txt");
  GRAVITON_REQUIRE(manifest.good(), "cannot write manifest in ", dir);
  manifest << "format=graviton-dataset-v1\n";
  manifest << "seed=" << seed << "\n";
  manifest << "train=" << ds.train.size() << " val=" << ds.val.size()
           << " test=" << ds.test.size() << "\n";
  auto dump = [&](const std::vector<TryonSample<T>>& split, const char* name) {
    for (size_t i = 0; i < split.size(); ++i) {
      char sub[64];
      std::snprintf(sub, sizeof(sub), "%s/sample_%04zu", name, i);
      save_sample(split[i], dir + "/" + sub);
      manifest << sub << " " << split[i].caption << "\n";
    }
  };
  dump(ds.train, "train");
  dump(ds.val, "val");
  dump(ds.test, "test");
  GRAVITON_REQUIRE(manifest.good(), "failed writing manifest in ", dir);
}

template <typename T>
Dataset<T> load_dataset(const std::string& dir) {
  std::ifstream manifest(dir + "/manifest.txt");
  GRAVITON_REQUIRE(manifest.good(), "dataset manifest not found: ", dir, "/manifest.txt");
  std::string line;
  std::getline(manifest, line);
  GRAVITON_REQUIRE(line == "format=graviton-dataset-v1", "unknown dataset format in ", dir);
  Dataset<T> ds;
  while (std::getline(manifest, line)) {
    if (line.rfind("train/", 0) == 0)
      ds.train.push_back(load_sample<T>(dir + "/" + line.substr(0, line.find(' '))));
    else if (line.rfind("val/", 0) == 0)
      ds.val.push_back(load_sample<T>(dir + "/" + line.substr(0, line.find(' '))));
    else if (line.rfind("test/", 0) == 0)
      ds.test.push_back(load_sample<T>(dir + "/" + line.substr(0, line.find(' '))));
  }
  GRAVITON_REQUIRE(!ds.train.empty(), "dataset has no training samples: ", dir);
  return ds;
}

}  // namespace graviton::synth
