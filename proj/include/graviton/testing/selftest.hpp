#pragma once

// The oracle suite behind the CLI `selftest` command and the first acceptance
// criteria: every core computation is replayed against its brute-force
// reference on randomized small instances.

#include <string>
#include <vector>

#include "graviton/dcaa.hpp"
#include "graviton/gfw.hpp"
#include "graviton/losses.hpp"
#include "graviton/metrics.hpp"
#include "graviton/testing/oracles.hpp"
#include "graviton/warp.hpp"

namespace graviton::testing {

struct OracleResult {
  std::string name;
  double max_error = 0;
  double tolerance = 0;
  bool pass = false;
};

inline OracleResult correlation_oracle(int trials = 16) {
  OracleResult r{"correlation-volume", 0, 1e-6, false};
  Rng rng(0x00c0ffee);
  for (int trial = 0; trial < trials; ++trial) {
    Tensor<double> fs({8, 3, 3}), fr({8, 3, 3});
    rng.fill_uniform(fs, -1.0, 1.0);
    rng.fill_uniform(fr, -1.0, 1.0);
    Tape<double> tape;
    auto corr = build_correlation(ops::leaf(tape, fs), ops::leaf(tape, fr));
    r.max_error = std::max(r.max_error,
                           static_cast<double>(max_abs_diff(corr.val(), oracle_correlation(fs, fr))));
  }
  r.pass = r.max_error < r.tolerance;
  return r;
}

inline OracleResult graph_conv_oracle(int trials = 16) {
  OracleResult r{"graph-convolution", 0, 1e-6, false};
  Rng rng(0x9a4);
  for (int trial = 0; trial < trials; ++trial) {
    ParamStore<double> store;
    Rng prng(200 + static_cast<uint64_t>(trial));
    GraphReasoner<double> reasoner{"g", 4};
    reasoner.init(store, prng);
    Tensor<double> u_c({5, 4}), u_s({5, 4});
    rng.fill_uniform(u_c, -1.0, 1.0);
    rng.fill_uniform(u_s, -1.0, 1.0);
    Tape<double> tape;
    TapeBinding<double> bind(tape, store);
    auto res = reasoner.forward(bind, ops::leaf(tape, u_c), ops::leaf(tape, u_s), 1);
    auto ref = oracle_graph_conv(u_c, store.value("g.wg.w"));
    r.max_error =
        std::max(r.max_error, static_cast<double>(max_abs_diff(res.u_c.val(), ref)));
  }
  r.pass = r.max_error < r.tolerance;
  return r;
}

inline OracleResult dcaa_oracle(int trials = 16) {
  OracleResult r{"dcaa-attention", 0, 1e-6, false};
  Rng rng(0xdca);
  for (int trial = 0; trial < trials; ++trial) {
    ParamStore<double> store;
    Rng prng(300 + static_cast<uint64_t>(trial));
    DcaaBlock<double> block{"d", 4, 4};
    block.init(store, prng);
    prng.fill_normal(store.value("d.w_beta_p"), 0.5);
    prng.fill_normal(store.value("d.w_gamma_p"), 0.5);
    Tensor<double> z({2, 4}), x_t({2, 4}), g_i({3, 4});
    rng.fill_uniform(z, -1.0, 1.0);
    rng.fill_uniform(x_t, -1.0, 1.0);
    rng.fill_uniform(g_i, -1.0, 1.0);
    Tape<double> tape;
    TapeBinding<double> bind(tape, store);
    auto out = block.attend(bind, ops::leaf(tape, z), ops::leaf(tape, x_t),
                            ops::leaf(tape, g_i));
    auto ref = oracle_dcaa(z, x_t, g_i, store.value("d.w_alpha"), store.value("d.w_beta"),
                           store.value("d.w_gamma"), store.value("d.w_beta_p"),
                           store.value("d.w_gamma_p"));
    r.max_error = std::max(r.max_error, static_cast<double>(max_abs_diff(out.val(), ref)));
  }
  r.pass = r.max_error < r.tolerance;
  return r;
}

inline OracleResult warp_oracle(int trials = 16) {
  OracleResult r{"backward-warp", 0, 1e-6, false};
  Rng rng(0x3a9);
  for (int trial = 0; trial < trials; ++trial) {
    Tensor<double> src({2, 5, 5}), flow({2, 5, 5});
    rng.fill_uniform(src, -1.0, 1.0);
    rng.fill_uniform(flow, -3.0, 3.0);
    r.max_error = std::max(
        r.max_error,
        static_cast<double>(max_abs_diff(backward_warp(src, flow), oracle_backward_warp(src, flow))));
  }
  r.pass = r.max_error < r.tolerance;
  return r;
}

inline OracleResult ssim_oracle(int trials = 16) {
  OracleResult r{"ssim", 0, 1e-6, false};
  Rng rng(0x551);
  for (int trial = 0; trial < trials; ++trial) {
    Tensor<double> a({1, 9, 9}), b({1, 9, 9});
    rng.fill_uniform(a, -1.0, 1.0);
    rng.fill_uniform(b, -1.0, 1.0);
    r.max_error = std::max(
        r.max_error, std::abs(metrics::ssim(a, b) - oracle_ssim(a, b, 7, 0.01, 0.03, 2.0)));
  }
  r.pass = r.max_error < r.tolerance;
  return r;
}

inline OracleResult style_gram_oracle(int trials = 16) {
  OracleResult r{"style-gram", 0, 1e-6, false};
  Rng rng(0x97a);
  for (int trial = 0; trial < trials; ++trial) {
    Tensor<double> tap({5, 6, 6});
    rng.fill_uniform(tap, -1.0, 1.0);
    Tape<double> tape;
    auto g = gram_matrix(ops::leaf(tape, tap));
    r.max_error =
        std::max(r.max_error, static_cast<double>(max_abs_diff(g.val(), oracle_gram(tap))));
  }
  r.pass = r.max_error < r.tolerance;
  return r;
}

inline OracleResult owl_contract_oracle() {
  OracleResult r{"owl-contract", 0, 1e-9, false};
  // hand case from the loss definition
  Tensor<double> gt({3, 4, 8}), pred({3, 4, 8});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 8; ++x) {
        gt.at(c, y, x) = x < 4 ? 0.5 : 0.0;
        pred.at(c, y, x) = x < 4 ? 0.7 : 1.0;
      }
  Tape<double> tape;
  auto loss = owl_loss(tape, ops::leaf(tape, pred), gt);
  r.max_error = std::abs(loss.val()[0] - 0.2);
  r.pass = r.max_error < r.tolerance;
  return r;
}

inline OracleResult average_flow_oracle() {
  OracleResult r{"average-flow", 0, 0.0, false};
  Rng rng(0xaf1);
  Tensor<double> f({2, 3, 3});
  rng.fill_uniform(f, -4.0, 4.0);
  std::vector<Tensor<double>> flows(6, f);
  r.pass = bitwise_equal(average_flow(flows), f);
  // and the arithmetic case
  const double xs[6] = {1, 3, 2, 2, 0, 4}, ys[6] = {0, 0, 2, -2, 1, -1};
  std::vector<Tensor<double>> mixed;
  for (int k = 0; k < 6; ++k) {
    Tensor<double> g({2, 1, 1});
    g.at(0, 0, 0) = xs[k];
    g.at(1, 0, 0) = ys[k];
    mixed.push_back(g);
  }
  auto mean = average_flow(mixed);
  r.max_error = std::max(std::abs(mean.at(0, 0, 0) - 2.0), std::abs(mean.at(1, 0, 0) - 0.0));
  r.pass = r.pass && r.max_error < 1e-12;
  return r;
}

inline std::vector<OracleResult> run_oracle_suite() {
  return {correlation_oracle(), graph_conv_oracle(), dcaa_oracle(),     warp_oracle(),
          ssim_oracle(),        style_gram_oracle(), owl_contract_oracle(), average_flow_oracle()};
}

}  // namespace graviton::testing
