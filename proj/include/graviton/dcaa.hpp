#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "graviton/core/nn.hpp"

namespace graviton {

// Conditioning pathway: captions and garment textures are mapped into a
// shared d-wide token space, then injected into the denoiser through
// decoupled cross-attention (separate key/value projections for text and
// image tokens, one shared query, outputs summed).

/// fixed caption vocabulary shared by the generator and the text embedder
inline const std::vector<std::string>& caption_vocab() {
  static const std::vector<std::string> words = {
      "red",  "green",    "blue",    "yellow", "magenta", "cyan", "white",
      "striped", "checkered", "glyphed", "solid", "short",  "long", "sleeve", "top"};
  return words;
}

/// whitespace- and hyphen-splitting tokenizer over the fixed vocabulary
struct Tokenizer {
  /// token ids are 1-based; 0 is the learned null token
  static std::vector<int> encode(const std::string& caption) {
    std::vector<int> ids;
    std::string token;
    auto flush = [&]() {
      if (token.empty()) return;
      const auto& vocab = caption_vocab();
      for (size_t i = 0; i < vocab.size(); ++i) {
        if (vocab[i] == token) {
          ids.push_back(static_cast<int>(i) + 1);
          token.clear();
          return;
        }
      }
      throw error(msg("unknown caption token: '", token, "'"));
    };
    for (char c : caption) {
      if (c == ' ' || c == '-' || c == '\t') {
        flush();
      } else {
        token.push_back(c);
      }
    }
    flush();
    return ids;
  }
};

/// learned lookup table plus one mixing layer; row 0 is the null token that
/// every embedding sequence starts with
template <typename T>
struct TextEmbedder {
  std::string prefix;
  int width = 64;

  void init(ParamStore<T>& store, Rng& rng) const {
    const int vocab = static_cast<int>(caption_vocab().size()) + 1;
    Tensor<T> table({vocab, width});
    rng.fill_normal(table, 0.3);
    store.add(prefix + ".table", std::move(table));
    nn::init_linear(store, rng, prefix + ".mix", width, width);
  }

  /// (n_tokens + 1) x d embeddings, null token first
  Var<T> embed(TapeBinding<T>& bind, const std::string& caption) const {
    auto ids = Tokenizer::encode(caption);
    const int vocab = static_cast<int>(caption_vocab().size()) + 1;
    const int n = static_cast<int>(ids.size()) + 1;
    Tensor<T> onehot({n, vocab});
    onehot.at(0, 0) = T(1);
    for (size_t i = 0; i < ids.size(); ++i) onehot.at(static_cast<int>(i) + 1, ids[i]) = T(1);
    auto rows = ops::matmul(ops::leaf(bind.tape(), onehot), bind(prefix + ".table"));
    return nn::leaky(nn::linear(bind, prefix + ".mix", rows));
  }

  std::vector<std::string> param_names() const {
    return {prefix + ".table", prefix + ".mix.w", prefix + ".mix.b"};
  }
};

/// conv patch encoder over the garment image followed by one self-attention
/// mixing layer; emits (H/8 * W/8) texture tokens of width d
template <typename T>
struct TextureEmbedder {
  std::string prefix;
  int width = 64;

  void init(ParamStore<T>& store, Rng& rng) const {
    nn::init_conv(store, rng, prefix + ".c0", 3, 16, 3);
    nn::init_conv(store, rng, prefix + ".c1", 16, 32, 3);
    nn::init_conv(store, rng, prefix + ".c2", 32, width, 3);
    nn::init_linear(store, rng, prefix + ".proj", width, width);
    nn::init_linear(store, rng, prefix + ".q", width, width);
    nn::init_linear(store, rng, prefix + ".k", width, width);
    nn::init_linear(store, rng, prefix + ".v", width, width);
    nn::init_linear(store, rng, prefix + ".o", width, width);
  }

  Var<T> embed(TapeBinding<T>& bind, Var<T> garment) const {
    GRAVITON_REQUIRE(garment.val().ndim() == 3 && garment.val().dim(0) == 3,
                     prefix, ": expected a 3-channel garment image");
    GRAVITON_REQUIRE(garment.val().dim(1) % 8 == 0 && garment.val().dim(2) % 8 == 0,
                     prefix, ": image size must be divisible by 8");
    auto x = nn::leaky(nn::conv(bind, prefix + ".c0", garment, 2, 1));
    x = nn::leaky(nn::conv(bind, prefix + ".c1", x, 2, 1));
    x = nn::leaky(nn::conv(bind, prefix + ".c2", x, 2, 1));
    auto tokens = nn::linear(bind, prefix + ".proj", ops::tokens_from_chw(x));
    // one self-attention mixing layer with residual
    auto q = nn::linear(bind, prefix + ".q", tokens);
    auto k = nn::linear(bind, prefix + ".k", tokens);
    auto v = nn::linear(bind, prefix + ".v", tokens);
    auto scores = ops::mul_scalar(ops::matmul(q, ops::transpose(k)),
                                  static_cast<T>(1.0 / std::sqrt(static_cast<double>(width))));
    auto mixed = ops::matmul(ops::softmax_rows(scores), v);
    return ops::add(tokens, nn::linear(bind, prefix + ".o", mixed));
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    nn::conv_names(out, prefix + ".c0");
    nn::conv_names(out, prefix + ".c1");
    nn::conv_names(out, prefix + ".c2");
    for (const char* n : {".proj", ".q", ".k", ".v", ".o"}) {
      out.push_back(prefix + n + ".w");
      out.push_back(prefix + n + ".b");
    }
    return out;
  }
};

/// Decoupled cross-attention: the query is computed once from the latent
/// tokens and shared by both branches; the text projections are frozen, the
/// image-branch projections start as their exact copies and train.
template <typename T>
struct DcaaBlock {
  std::string prefix;
  int query_dim = 64;  // width of the incoming latent tokens
  int width = 64;      // attention width d

  void init(ParamStore<T>& store, Rng& rng) const {
    Tensor<T> w_alpha({query_dim, width});
    rng.fill_normal(w_alpha, std::sqrt(1.0 / query_dim));
    Tensor<T> w_beta({width, width});
    rng.fill_normal(w_beta, std::sqrt(1.0 / width));
    Tensor<T> w_gamma({width, width});
    rng.fill_normal(w_gamma, std::sqrt(1.0 / width));
    store.add(prefix + ".w_alpha", std::move(w_alpha), /*trainable=*/false);
    Tensor<T> w_beta_p = w_beta;    // initialized from the frozen text weights
    Tensor<T> w_gamma_p = w_gamma;
    store.add(prefix + ".w_beta", std::move(w_beta), /*trainable=*/false);
    store.add(prefix + ".w_gamma", std::move(w_gamma), /*trainable=*/false);
    store.add(prefix + ".w_beta_p", std::move(w_beta_p), /*trainable=*/true);
    store.add(prefix + ".w_gamma_p", std::move(w_gamma_p), /*trainable=*/true);
  }

  struct Detail {
    Var<T> z_text;     // text-branch output z'
    Var<T> z_image;    // image-branch output z''
    Var<T> z_new;      // sum
    Var<T> attn_text;  // softmax rows, text branch
    Var<T> attn_image;
  };

  Detail attend_detail(TapeBinding<T>& bind, Var<T> z, Var<T> x_t, Var<T> g_i) const {
    GRAVITON_REQUIRE(z.val().ndim() == 2 && z.val().dim(1) == query_dim,
                     prefix, ": query width mismatch: got ", z.val().dim(1), ", expected ",
                     query_dim);
    GRAVITON_REQUIRE(x_t.val().ndim() == 2 && x_t.val().dim(1) == width,
                     prefix, ": text token width mismatch");
    GRAVITON_REQUIRE(g_i.val().ndim() == 2 && g_i.val().dim(1) == width,
                     prefix, ": image token width mismatch");
    const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(width)));
    // one shared query for both branches
    auto alpha = ops::matmul(z, bind(prefix + ".w_alpha"));
    auto beta = ops::matmul(x_t, bind(prefix + ".w_beta"));
    auto gamma = ops::matmul(x_t, bind(prefix + ".w_gamma"));
    auto beta_p = ops::matmul(g_i, bind(prefix + ".w_beta_p"));
    auto gamma_p = ops::matmul(g_i, bind(prefix + ".w_gamma_p"));
    auto attn_text =
        ops::softmax_rows(ops::mul_scalar(ops::matmul(alpha, ops::transpose(beta)), inv_sqrt_d));
    auto attn_image = ops::softmax_rows(
        ops::mul_scalar(ops::matmul(alpha, ops::transpose(beta_p)), inv_sqrt_d));
    auto z_text = ops::matmul(attn_text, gamma);
    auto z_image = ops::matmul(attn_image, gamma_p);
    auto z_new = ops::add(z_text, z_image);
    return {z_text, z_image, z_new, attn_text, attn_image};
  }

  Var<T> attend(TapeBinding<T>& bind, Var<T> z, Var<T> x_t, Var<T> g_i) const {
    return attend_detail(bind, z, x_t, g_i).z_new;
  }

  std::vector<std::string> param_names() const {
    return {prefix + ".w_alpha", prefix + ".w_beta", prefix + ".w_gamma", prefix + ".w_beta_p",
            prefix + ".w_gamma_p"};
  }
};

}  // namespace graviton
