#include <cmath>
#include <numeric>

#include "bft/fusion.hpp"
#include "bft/model.hpp"
#include "doctest.h"
#include "layer_oracles.hpp"

using namespace bft;
using oracle::attention_oracle;
using oracle::randomize;

namespace {

double max_diff(const Tensor<double>& a, const Tensor<double>& b) { return oracle::max_abs_diff(a, b); }

Tensor<double> permute_columns(const Tensor<double>& m, const std::vector<int>& perm) {
  Tensor<double> out(m.shape());
  for (int i = 0; i < m.dim(0); ++i)
    for (int j = 0; j < m.dim(1); ++j) out.at(i, j) = m.at(i, perm[j]);
  return out;
}

}  // namespace

TEST_CASE("self and cross attention match the per-token loop oracle") {
  Rng rng(31);
  double worst = 0, worst_w = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int d = rng.range(1, 6), n = trial == 0 ? 4 : rng.range(1, 12);
    ParamStore<double> store;
    ParamBuilder<double> pb(store, &rng);
    const AttentionLayout a = declare_attention(pb, "att", d, rng.range(1, 3));
    randomize(store, rng, 0.8);
    const auto x = oracle::random_tensor<double>({d, n}, rng);
    const auto v = oracle::random_tensor<double>({d, n}, rng);
    Graph<double> g(&store);
    const auto self = linear_self_attention(g, a, g.constant(x));
    const auto ref_self = attention_oracle(store, a, x, x);
    const auto cross = linear_cross_attention(g, a, g.constant(x), g.constant(v));
    const auto ref_cross = attention_oracle(store, a, x, v);
    worst = std::max({worst, max_diff(self.out.value(), ref_self.out), max_diff(cross.out.value(), ref_cross.out)});
    for (int j = 0; j < n; ++j) worst_w = std::max(worst_w, std::abs(cross.weights.value()[j] - ref_cross.weights[j]));
  }
  CHECK(worst <= 1e-5);
  CHECK(worst_w <= 1e-5);
}

TEST_CASE("cross attention with TAPE matches the oracle on encoded keys") {
  Rng rng(32);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 4, h = rng.range(1, 5), w = rng.range(1, 5);
    ParamStore<double> store;
    ParamBuilder<double> pb(store, &rng);
    const AttentionLayout a = declare_attention(pb, "att", d, 2);
    TapeConfig cfg;
    cfg.kernel = 3;
    cfg.ratio = 2;
    const TapeLayout t = declare_tape(pb, "tape", d, cfg);
    randomize(store, rng, 0.8);
    const auto q = oracle::random_tensor<double>({d, h * w}, rng);
    const auto v = oracle::random_tensor<double>({d, h * w}, rng);
    Graph<double> g(&store);
    const auto got = linear_cross_attention(g, a, g.constant(q), g.constant(v), &t, h, w);
    const Tensor<double> keys = encode(g, t, g.constant(q.reshaped({d, h, w}))).value().reshaped({d, h * w});
    worst = std::max(worst, max_diff(got.out.value(), attention_oracle(store, a, keys, v).out));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("attention examples") {
  Rng rng(33);
  ParamStore<double> store;
  ParamBuilder<double> pb(store, &rng);
  const AttentionLayout a = declare_attention(pb, "att", 3, 2);

  Graph<double> g(&store);
  SUBCASE("zero-initialized output and ffn layers make the block the identity on vsrc") {
    const auto q = oracle::random_tensor<double>({3, 5}, rng);
    const auto v = oracle::random_tensor<double>({3, 5}, rng);
    const auto out = linear_cross_attention(g, a, g.constant(q), g.constant(v));
    CHECK(out.out.value().storage() == v.storage());
  }
  randomize(store, rng, 1.0);
  SUBCASE("a single token gets weight exactly 1") {
    const auto out = linear_self_attention(g, a, g.constant(oracle::random_tensor<double>({3, 1}, rng)));
    CHECK(out.weights.value()[0] == 1.0);
  }
  SUBCASE("identical tokens get weight 1/n") {
    Tensor<double> same({3, 6});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 6; ++j) same.at(i, j) = 0.3 * (i + 1);
    const auto out = linear_self_attention(g, a, g.constant(same));
    for (double w : out.weights.value().data()) CHECK(w == doctest::Approx(1.0 / 6).epsilon(1e-14));
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(linear_cross_attention(g, a, g.constant(Tensor<double>({3, 4})), g.constant(Tensor<double>({3, 5}))),
                    DimensionError);
  }
}

TEST_CASE("self attention is token-permutation equivariant") {
  Rng rng(34);
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, &rng);
    const AttentionLayout a = declare_attention(pb, "att", 4, 2);
    randomize(store, rng, 0.8);
    const int n = 9;
    const auto x = oracle::random_tensor<double>({4, n}, rng);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Graph<double> g(&store);
    const auto base = linear_self_attention(g, a, g.constant(x)).out.value();
    const auto permuted = linear_self_attention(g, a, g.constant(permute_columns(x, perm))).out.value();
    CHECK(max_diff(permuted, permute_columns(base, perm)) <= 1e-12);
  }
}

TEST_CASE("TAPE breaks token-permutation equivariance") {
  Rng rng(35);
  ParamStore<double> store;
  ParamBuilder<double> pb(store, &rng);
  const AttentionLayout a = declare_attention(pb, "att", 4, 2);
  TapeConfig cfg;
  cfg.kernel = 3;
  cfg.ratio = 2;
  const TapeLayout t = declare_tape(pb, "tape", 4, cfg);
  randomize(store, rng, 1.0);
  store[t.alpha].value[0] = 2.0;
  const int h = 3, w = 3, n = h * w;
  const auto q = oracle::random_tensor<double>({4, n}, rng);
  const auto v = oracle::random_tensor<double>({4, n}, rng);
  Graph<double> g(&store);
  const auto base = linear_cross_attention(g, a, g.constant(q), g.constant(v), &t, h, w).out.value();
  double biggest = 0;
  for (int shift = 1; shift < n; ++shift) {
    std::vector<int> perm(n);
    for (int j = 0; j < n; ++j) perm[j] = (j + shift) % n;
    const auto got = linear_cross_attention(g, a, g.constant(permute_columns(q, perm)),
                                            g.constant(permute_columns(v, perm)), &t, h, w).out.value();
    biggest = std::max(biggest, max_diff(got, permute_columns(base, perm)));
  }
  CHECK(biggest > 1e-4);
}

TEST_CASE("fuse keeps shapes and normalizes every context-weight vector") {
  Rng rng(36);
  const ModelConfig desk = ModelConfig::desk();
  int passes = 0;
  double worst = 0;
  for (const auto& [fwd, bwd] : {std::pair{true, true}, std::pair{true, false}, std::pair{false, true}}) {
    ParamStore<float> store;
    ParamBuilder<float> pb(store, &rng);
    FusionLayout f = declare_fusion(pb, desk.backbone.d, desk.fusion, fwd, bwd, &desk.tape);
    for (auto& e : store)
      for (auto& val : e.value.data()) val += static_cast<float>(0.2 * rng.normal());
    for (int pass = 0; pass < 34; ++pass, ++passes) {
      const int h = rng.range(1, 9), w = rng.range(1, 9);
      Graph<float> g(&store);
      auto m3 = g.constant(oracle::random_tensor<float>({32, h, w}, rng, 3.0));
      auto m4 = g.constant(oracle::random_tensor<float>({32, h, w}, rng, 3.0));
      const auto out = fuse(g, f, m3, m4);
      CHECK(out.m3.shape() == Shape{32, h, w});
      CHECK(out.m4.shape() == Shape{32, h, w});
      CHECK(out.context_weights.size() == static_cast<std::size_t>(2 * (fwd + bwd)));
      for (const auto& cw : out.context_weights) {
        double s = 0;
        for (float x : cw.value().data()) s += x;
        worst = std::max(worst, std::abs(s - 1.0));
      }
      if (!fwd) CHECK(out.m4.value().storage() == m4.value().storage());
      if (!bwd) CHECK(out.m3.value().storage() == m3.value().storage());
    }
  }
  CHECK(passes >= 100);
  CHECK(worst <= 1e-6);
}

TEST_CASE("fuse of all-zero inputs with zero biases is all zero") {
  Rng rng(37);
  const ModelConfig desk = ModelConfig::desk();
  ParamStore<float> store;
  ParamBuilder<float> pb(store, &rng);
  FusionLayout f = declare_fusion(pb, 32, desk.fusion, true, true, &desk.tape);
  for (auto& e : store)
    if (e.kind == ParamKind::kBias) e.value.fill(0.0f);
  Graph<float> g(&store);
  const auto out = fuse(g, f, g.constant(Tensor<float>({32, 8, 8})), g.constant(Tensor<float>({32, 8, 8})));
  for (float v : out.m3.value().data()) CHECK(v == 0.0f);
  for (float v : out.m4.value().data()) CHECK(v == 0.0f);
}

TEST_CASE("sharing flags reuse parameters") {
  Rng rng(38);
  auto count = [&](FusionConfig cfg) {
    ParamStore<float> store;
    ParamBuilder<float> pb(store, &rng);
    declare_fusion(pb, 8, cfg, true, true, nullptr);
    return store.size();
  };
  FusionConfig base;
  FusionConfig self_shared = base;
  self_shared.share_self = true;
  FusionConfig all_shared = base;
  all_shared.share_streams = true;
  CHECK(count(self_shared) < count(base));
  CHECK(count(all_shared) < count(self_shared));
  FusionConfig deeper = base;
  deeper.depth = 2;
  CHECK(count(deeper) > count(base));
}

TEST_CASE("fuse rejects mismatched maps") {
  Rng rng(39);
  ParamStore<float> store;
  ParamBuilder<float> pb(store, &rng);
  FusionLayout f = declare_fusion(pb, 4, FusionConfig{}, true, true, nullptr);
  Graph<float> g(&store);
  CHECK_THROWS_AS(fuse(g, f, g.constant(Tensor<float>({4, 3, 3})), g.constant(Tensor<float>({4, 3, 4}))),
                  DimensionError);
}
