#include <cmath>
#include <cstring>

#include "bft/tape.hpp"
#include "doctest.h"
#include "layer_oracles.hpp"

using namespace bft;
using oracle::TapeFixture;
using oracle::channel_oracle;
using oracle::spatial_oracle;

TEST_CASE("channel, spatial and encode match loop oracles on random instances") {
  Rng rng(21);
  double worst_c = 0, worst_s = 0, worst_e = 0;
  for (int trial = 0; trial < 60; ++trial) {
    TapeConfig cfg;
    cfg.ratio = rng.range(1, 4);
    cfg.kernel = 2 * rng.range(0, 3) + 1;
    cfg.multiplicative = trial % 3 == 2;
    const int d = cfg.ratio * rng.range(1, 4), h = rng.range(1, 9), w = rng.range(1, 9);
    TapeFixture fx(d, cfg, rng, rng.uniform(-2, 2));
    const auto f = oracle::random_tensor<double>({d, h, w}, rng, 2.0);
    Graph<double> g(&fx.store);
    auto fv = g.constant(f);
    const auto wc = channel_weights(g, fx.t, fv);
    const auto ws = spatial_weights(g, fx.t, fv);
    const auto enc = encode(g, fx.t, fv);
    const auto wc_ref = channel_oracle(fx, f);
    const auto ws_ref = spatial_oracle(fx, f);
    REQUIRE(wc.shape() == Shape{d, 1, 1});
    REQUIRE(ws.shape() == Shape{1, h, w});
    const double alpha = fx.store[fx.t.alpha].value[0];
    for (int c = 0; c < d; ++c) {
      worst_c = std::max(worst_c, std::abs(wc.value()[c] - wc_ref[c]));
      for (int i = 0; i < h * w; ++i) {
        const double m = wc_ref[c] * ws_ref[i];
        const double x = f[c * h * w + i];
        const double ref = x + alpha * (cfg.multiplicative ? x * m : m);
        worst_e = std::max(worst_e, std::abs(enc.value()[c * h * w + i] - ref));
      }
    }
    worst_s = std::max(worst_s, oracle::max_abs_diff(ws.value(), ws_ref));
  }
  CHECK(worst_c <= 1e-6);
  CHECK(worst_s <= 1e-6);
  CHECK(worst_e <= 1e-6);
}

TEST_CASE("alpha = 0 makes encode the bit-exact identity in 32-bit") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore<float> store;
    ParamBuilder<float> pb(store, &rng);
    const TapeLayout t = declare_tape(pb, "tape", 8, TapeConfig{});
    CHECK(store[t.alpha].value[0] == 0.0f);
    auto f = oracle::random_tensor<float>({8, 5, 6}, rng, 10.0);
    f[0] = -0.0f;
    f[1] = 1e-38f;
    Graph<float> g(&store);
    auto out = encode(g, t, g.constant(f));
    CHECK(std::memcmp(out.value().ptr(), f.ptr(), f.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("zero parameters give channel and spatial weights of exactly 0.5") {
  ParamStore<float> store;
  Rng rng(23);
  ParamBuilder<float> pb(store, &rng);
  const TapeLayout t = declare_tape(pb, "tape", 16, TapeConfig{});
  for (auto& e : store) e.value.fill(0.0f);
  Graph<float> g(&store);
  auto f = g.constant(oracle::random_tensor<float>({16, 7, 9}, rng, 5.0));
  for (float v : channel_weights(g, t, f).value().data()) CHECK(v == 0.5f);
  for (float v : spatial_weights(g, t, f).value().data()) CHECK(v == 0.5f);

  SUBCASE("alpha = 1 then adds exactly 0.25") {
    store[t.alpha].value[0] = 1.0f;
    Graph<float> g2(&store);
    auto x = oracle::random_tensor<float>({16, 7, 9}, rng);
    auto out = encode(g2, t, g2.constant(x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.value()[i] == x[i] + 0.25f);
  }
}

TEST_CASE("pooling identities") {
  ParamStore<double> store;
  Rng rng(24);
  ParamBuilder<double> pb(store, &rng);
  TapeConfig cfg;
  cfg.ratio = 1;
  const TapeLayout t1 = declare_tape(pb, "one", 1, cfg);
  Graph<double> g(&store);
  // a single channel: both channel pools equal the plane, so both conv inputs match
  auto plane = oracle::random_tensor<double>({1, 4, 4}, rng);
  auto ws = spatial_weights(g, t1, g.constant(plane));
  Tensor<double> doubled({2, 4, 4});
  for (int i = 0; i < 16; ++i) doubled[i] = doubled[16 + i] = plane[i];
  auto ref = oracle::conv2d(doubled, store[t1.conv.weight].value, {store[*t1.conv.bias].value[0]}, 1, cfg.kernel / 2);
  for (int i = 0; i < 16; ++i) CHECK(ws.value()[i] == doctest::Approx(oracle::sigmoid(ref[i])).epsilon(1e-12));

  // constant map: maxpool == avgpool, MLP input 2c
  const TapeLayout t4 = declare_tape(pb, "four", 4, cfg);
  auto wc = channel_weights(g, t4, g.constant(Tensor<double>({4, 3, 3}, 0.75)));
  std::vector<double> input(4, 1.5);
  const auto& w1 = store[t4.mlp1.weight].value.data();
  const auto& b1 = store[*t4.mlp1.bias].value.data();
  auto h = oracle::dense({w1.begin(), w1.end()}, {b1.begin(), b1.end()}, input);
  for (auto& v : h) v = std::max(v, 0.0);
  const auto& w2 = store[t4.mlp2.weight].value.data();
  const auto& b2 = store[*t4.mlp2.bias].value.data();
  auto o = oracle::dense({w2.begin(), w2.end()}, {b2.begin(), b2.end()}, h);
  for (int c = 0; c < 4; ++c) CHECK(wc.value()[c] == doctest::Approx(oracle::sigmoid(o[c])).epsilon(1e-12));
}

TEST_CASE("weights stay in (0,1) and the additive residual is bounded by |alpha|") {
  Rng rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    TapeConfig cfg;
    cfg.kernel = 3;
    const double alpha = rng.uniform(-3, 3);
    TapeFixture fx(8, cfg, rng, alpha);
    const auto f = oracle::random_tensor<double>({8, 5, 5}, rng, 3.0);
    Graph<double> g(&fx.store);
    auto fv = g.constant(f);
    for (double v : channel_weights(g, fx.t, fv).value().data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    for (double v : spatial_weights(g, fx.t, fv).value().data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    auto out = encode(g, fx.t, fv);
    double worst = 0;
    for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(out.value()[i] - f[i]));
    CHECK(worst <= std::abs(alpha));
  }
}

TEST_CASE("tape config validation") {
  TapeConfig cfg;
  cfg.kernel = 4;
  CHECK_THROWS_AS(cfg.validate(8), DimensionError);
  cfg = TapeConfig{};
  cfg.ratio = 16;
  CHECK_THROWS_AS(cfg.validate(8), DimensionError);
  cfg.ratio = 8;
  CHECK_NOTHROW(cfg.validate(8));
}

TEST_CASE("encode rejects non-map inputs") {
  ParamStore<double> store;
  Rng rng(26);
  ParamBuilder<double> pb(store, &rng);
  const TapeLayout t = declare_tape(pb, "tape", 4, TapeConfig{});
  Graph<double> g(&store);
  CHECK_THROWS_AS(encode(g, t, g.constant(Tensor<double>({4, 9}, 1.0))), DimensionError);
}
