#pragma once

// Per-token and per-channel loop evaluations of the attention block and TAPE,
// built only on the naive helpers in oracles.hpp.

#include <algorithm>
#include <cmath>
#include <vector>

#include "bft/fusion.hpp"
#include "bft/tape.hpp"
#include "oracles.hpp"

namespace oracle {

using namespace bft;

struct TapeFixture {
  ParamStore<double> store;
  TapeLayout t;

  TapeFixture(int d, TapeConfig cfg, Rng& rng, double alpha) {
    ParamBuilder<double> pb(store, &rng);
    t = declare_tape(pb, "tape", d, cfg);
    // random biases so the oracle sees every term
    for (auto& e : store)
      if (e.kind == ParamKind::kBias) e.value = random_tensor<double>(e.value.shape(), rng, 0.5);
    store[t.alpha].value[0] = alpha;
  }
  std::vector<double> values(const std::optional<std::size_t>& i) const {
    const auto& d = store[*i].value.data();
    return {d.begin(), d.end()};
  }
  std::vector<double> values(std::size_t i) const { return values(std::optional<std::size_t>(i)); }
};

// loop oracle: sigmoid(W2 relu(W1 (maxpool + avgpool) + b1) + b2)
inline std::vector<double> channel_oracle(const TapeFixture& fx, const Tensor<double>& f) {
  const int d = f.dim(0), plane = f.dim(1) * f.dim(2);
  std::vector<double> pooled(d);
  for (int c = 0; c < d; ++c) {
    double mx = f[c * plane], s = 0;
    for (int i = 0; i < plane; ++i) {
      mx = std::max(mx, f[c * plane + i]);
      s += f[c * plane + i];
    }
    pooled[c] = mx + s / plane;
  }
  auto h = dense(fx.values(fx.t.mlp1.weight), fx.values(fx.t.mlp1.bias), pooled);
  for (auto& v : h) v = std::max(v, 0.0);
  auto o = dense(fx.values(fx.t.mlp2.weight), fx.values(fx.t.mlp2.bias), h);
  for (auto& v : o) v = sigmoid(v);
  return o;
}

inline Tensor<double> spatial_oracle(const TapeFixture& fx, const Tensor<double>& f) {
  const int d = f.dim(0), h = f.dim(1), w = f.dim(2);
  Tensor<double> pooled({2, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double mx = f.at(0, i, j), s = 0;
      for (int c = 0; c < d; ++c) {
        mx = std::max(mx, f.at(c, i, j));
        s += f.at(c, i, j);
      }
      pooled.at(0, i, j) = mx;
      pooled.at(1, i, j) = s / d;
    }
  const int k = fx.t.cfg.kernel;
  Tensor<double> out = conv2d(pooled, fx.store[fx.t.conv.weight].value, fx.values(fx.t.conv.bias), 1, k / 2);
  for (auto& v : out.data()) v = sigmoid(v);
  return out;
}

using Vec = std::vector<double>;

inline void randomize(ParamStore<double>& store, Rng& rng, double scale) {
  for (auto& e : store) e.value = random_tensor<double>(e.value.shape(), rng, scale);
}

struct Dense {
  Vec w, b;
  Vec operator()(const Vec& x) const { return dense(w, b, x); }
};

inline Dense dense_of(const ParamStore<double>& store, const LinearSpec& l) {
  const auto& w = store[l.weight].value.data();
  const auto& b = store[*l.bias].value.data();
  return {{w.begin(), w.end()}, {b.begin(), b.end()}};
}

inline Vec column(const Tensor<double>& m, int j) {
  Vec v(m.dim(0));
  for (int i = 0; i < m.dim(0); ++i) v[i] = m.at(i, j);
  return v;
}

struct OracleResult {
  Tensor<double> out;
  Vec weights;
};

// per-token loop evaluation of the separable attention block
inline OracleResult attention_oracle(const ParamStore<double>& store, const AttentionLayout& a,
                              const Tensor<double>& keys, const Tensor<double>& vsrc) {
  const int d = keys.dim(0), n = keys.dim(1);
  const Dense q = dense_of(store, a.query), k = dense_of(store, a.key), v = dense_of(store, a.value),
              o = dense_of(store, a.out), f1 = dense_of(store, a.ffn1), f2 = dense_of(store, a.ffn2);
  Vec scores(n);
  for (int j = 0; j < n; ++j) scores[j] = q(column(keys, j))[0];
  const double mx = *std::max_element(scores.begin(), scores.end());
  double total = 0;
  for (auto& s : scores) total += (s = std::exp(s - mx));
  for (auto& s : scores) s /= total;
  Vec context(d, 0.0);
  for (int j = 0; j < n; ++j) {
    const Vec kj = k(column(keys, j));
    for (int i = 0; i < d; ++i) context[i] += scores[j] * kj[i];
  }
  Tensor<double> out({d, n});
  for (int j = 0; j < n; ++j) {
    Vec vj = v(column(vsrc, j));
    for (int i = 0; i < d; ++i) vj[i] = std::max(vj[i], 0.0) * context[i];
    const Vec oj = o(vj);
    Vec y(d);
    for (int i = 0; i < d; ++i) y[i] = vsrc.at(i, j) + oj[i];
    Vec hidden = f1(y);
    for (auto& h : hidden) h = std::max(h, 0.0);
    const Vec ff = f2(hidden);
    for (int i = 0; i < d; ++i) out.at(i, j) = y[i] + ff[i];
  }
  return {out, scores};
}

}  // namespace oracle
