#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <iomanip>

#include "graviton/backbone.hpp"
#include "graviton/core/grad_check.hpp"

using namespace graviton;

namespace {

template <typename T>
double weighted_checksum(const Tensor<T>& t) {
  double acc = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) acc += static_cast<double>(t[i]) * std::cos(0.01 * i);
  return acc;
}

}  // namespace

TEST_CASE("encoder maps 64x48 to 8x6 with the configured channel width", "[backbone]") {
  ParamStore<double> store;
  Rng rng(0);
  Encoder<double> enc{"enc", 3, {}};
  enc.init(store, rng);

  Tape<double> tape;
  TapeBinding<double> bind(tape, store);
  Tensor<double> img({3, 64, 48});
  Rng data_rng(5);
  data_rng.fill_uniform(img, -1.0, 1.0);
  auto out = enc.forward(bind, ops::leaf(tape, img));
  CHECK(out.val().shape == std::vector<int>{96, 8, 6});
}

TEST_CASE("encoder rejects indivisible sizes before any compute", "[backbone]") {
  ParamStore<double> store;
  Rng rng(0);
  Encoder<double> enc{"enc", 3, {}};
  enc.init(store, rng);
  Tape<double> tape;
  TapeBinding<double> bind(tape, store);
  Tensor<double> img({3, 60, 48});  // 60 not divisible by 8
  CHECK_THROWS_WITH(enc.forward(bind, ops::leaf(tape, img)),
                    Catch::Matchers::ContainsSubstring("not divisible"));
}

TEST_CASE("zero input with zero biases stays zero through the encoder", "[backbone]") {
  ParamStore<double> store;
  Rng rng(2);
  Encoder<double> enc{"enc", 3, {}};
  enc.init(store, rng);  // biases are zero-initialized
  Tape<double> tape;
  TapeBinding<double> bind(tape, store);
  auto out = enc.forward(bind, ops::leaf(tape, Tensor<double>({3, 32, 24})));
  for (int64_t i = 0; i < out.val().size(); ++i) CHECK(out.val()[i] == 0.0);
}

TEST_CASE("encoder output is reproducible and matches the recorded golden", "[backbone]") {
  auto run = []() {
    ParamStore<double> store;
    Rng rng(1234);
    Encoder<double> enc{"enc", 3, {}};
    enc.init(store, rng);
    Tensor<double> img({3, 64, 48});
    Rng data_rng(4321);
    data_rng.fill_uniform(img, -1.0, 1.0);
    Tape<double> tape;
    TapeBinding<double> bind(tape, store);
    auto out = enc.forward(bind, ops::leaf(tape, img));
    return weighted_checksum(out.val());
  };
  const double first = run();
  const double second = run();
  CHECK(first == second);  // bit-stable across runs
  // golden recorded on the first verified run of this configuration
  const double golden = -64.656088999976177;
  CHECK(first == Catch::Approx(golden).epsilon(1e-9));
}

TEST_CASE("decoder restores full resolution and stays bounded", "[backbone]") {
  ParamStore<double> store;
  Rng rng(7);
  Decoder<double> dec{"dec", 96, {}};
  dec.init(store, rng);
  Tape<double> tape;
  TapeBinding<double> bind(tape, store);
  Tensor<double> feat({96, 8, 6});
  Rng data_rng(8);
  data_rng.fill_normal(feat, 2.0);
  auto img = dec.forward(bind, ops::leaf(tape, feat));
  CHECK(img.val().shape == std::vector<int>{3, 64, 48});
  for (int64_t i = 0; i < img.val().size(); ++i) {
    CHECK(img.val()[i] <= 1.0);
    CHECK(img.val()[i] >= -1.0);
  }
  // geometry mismatch is refused
  Tensor<double> bad({64, 8, 6});
  CHECK_THROWS_AS(dec.forward(bind, ops::leaf(tape, bad)), error);
}

TEST_CASE("shape contract holds for several divisible sizes", "[backbone]") {
  for (auto [h, w] : {std::pair{16, 8}, std::pair{32, 24}, std::pair{64, 48}}) {
    ParamStore<double> store;
    Rng rng(3);
    Encoder<double> enc{"enc", 3, {}};
    Decoder<double> dec{"dec", 96, {}};
    enc.init(store, rng);
    dec.init(store, rng);
    Tape<double> tape;
    TapeBinding<double> bind(tape, store);
    Tensor<double> img({3, h, w});
    auto feat = enc.forward(bind, ops::leaf(tape, img));
    CHECK(feat.val().shape == std::vector<int>{96, h / 8, w / 8});
    auto rec = dec.forward(bind, feat);
    CHECK(rec.val().shape == std::vector<int>{3, h, w});
  }
}

TEST_CASE("refine_1x1 is the identity at initialization and keeps shape", "[backbone]") {
  ParamStore<double> store;
  Refine1x1<double> refine{"ref"};
  refine.init(store);
  Tape<double> tape;
  TapeBinding<double> bind(tape, store);
  Tensor<double> img({3, 10, 8});
  Rng rng(6);
  rng.fill_uniform(img, -0.9, 0.9);
  auto out = refine.forward(bind, ops::leaf(tape, img));
  CHECK(out.val().shape == img.shape);
  CHECK(max_abs_diff(out.val(), img) == 0.0);
}

TEST_CASE("backbone passes gradient checks", "[backbone]") {
  ParamStore<double> store;
  Rng rng(21);
  Encoder<double> enc{"enc", 3, {}};
  Decoder<double> dec{"dec", 96, {}};
  Refine1x1<double> refine{"ref"};
  enc.init(store, rng);
  dec.init(store, rng);
  refine.init(store);

  Tensor<double> img({3, 16, 8});
  rng.fill_uniform(img, -1.0, 1.0);
  Tensor<double> weights({3, 16, 8});
  rng.fill_uniform(weights, 0.5, 1.5);

  auto f = [&](Tape<double>& tape, TapeBinding<double>& bind) {
    auto feat = enc.forward(bind, ops::leaf(tape, img));
    auto rec = dec.forward(bind, feat);
    auto refined = refine.forward(bind, rec);
    return ops::sum_all(ops::mul(refined, ops::leaf(tape, weights)));
  };
  auto report = grad_check(f, store, 1e-5, 60);
  CHECK(report.max_rel_error < 1e-4);
}
