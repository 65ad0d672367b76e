#include "bft/checks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bft/model.hpp"

namespace bft {

namespace {

// balances truncation against 64-bit roundoff for O(1) losses
constexpr double kScopeEps = 3e-4;

template <typename T>
Tensor<T> random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(scale * rng.normal());
  return t;
}

void randomize(ParamStore<double>& store, Rng& rng, double scale) {
  for (auto& e : store)
    for (auto& v : e.value.data()) v = scale * rng.normal();
}

// random projection with unit-scale result, keeping the loss O(1)
Var<double> project(Graph<double>& g, Var<double> x, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.value().size()));
  return sum(mul(x, g.constant(random_tensor<double>(x.shape(), rng, scale))));
}

GradcheckOptions options_for(std::uint64_t seed, double tol, std::size_t per_param) {
  GradcheckOptions o;
  o.eps = kScopeEps;
  o.seed = seed;
  o.tol = tol;
  o.max_entries_per_param = per_param;
  return o;
}

GradcheckReport check_tensor(std::uint64_t seed, double tol) {
  Rng rng(seed);
  ParamStore<double> store;
  store.add("x", random_tensor<double>({2, 6, 6}, rng));
  store.add("w", random_tensor<double>({3, 2, 3, 3}, rng, 0.5));
  store.add("b", random_tensor<double>({3}, rng));
  store.add("z", random_tensor<double>({3, 3, 3}, rng, 0.5));
  store.add("lw", random_tensor<double>({4, 3}, rng));
  store.add("lb", random_tensor<double>({4}, rng));
  store.add("s", random_tensor<double>({1}, rng));
  const std::uint64_t proj_seed = rng();
  LossBuilder loss = [proj_seed](Graph<double>& g) {
    Rng r(proj_seed);
    Var<double> c = sigmoid(conv2d(g.param("x"), g.param("w"), g.param("b"), 2, 1));  // [3,3,3]
    Var<double> corr = xcorr_depthwise(c, g.param("z"));
    Var<double> pooled = add(global_pool(corr, Pool::kAvg), global_pool(corr, Pool::kMax));
    Var<double> dense = linear(g.param("lw"), reshape(pooled, {3, 1}), g.param("lb"));
    Var<double> attn = softmax(reshape(dense, {1, 4}), 1);
    Var<double> sp = concat(channel_pool(corr, Pool::kMax), channel_pool(corr, Pool::kAvg), 0);
    Var<double> mod = channel_spatial_product(reshape(slice(dense, 0, 0, 2), {2, 1, 1}), sigmoid(slice(sp, 0, 0, 1)));
    Var<double> mixed = scale_by(g.param("s"), add(mod, mod));
    Var<double> l = add(project(g, attn, r), project(g, mixed, r));
    l = add(l, project(g, log(add_scalar(square(corr), 1.0)), r));
    return l;
  };
  return gradcheck(loss, store, options_for(seed, tol, 0));
}

GradcheckReport check_tape(std::uint64_t seed, double tol) {
  GradcheckReport worst;
  worst.passed = true;
  for (bool multiplicative : {false, true}) {
    Rng rng(seed + (multiplicative ? 101 : 0));
    ParamStore<double> store;
    ParamBuilder<double> pb(store, &rng);
    TapeConfig cfg;
    cfg.kernel = 3;
    cfg.ratio = 2;
    cfg.multiplicative = multiplicative;
    TapeLayout t = declare_tape(pb, "tape", 8, cfg);
    randomize(store, rng, 0.5);
    store.add("f", random_tensor<double>({8, 4, 5}, rng));
    const std::uint64_t proj_seed = rng();
    LossBuilder loss = [t, proj_seed](Graph<double>& g) {
      Rng r(proj_seed);
      return project(g, encode(g, t, g.param("f")), r);
    };
    GradcheckReport rep = gradcheck(loss, store, options_for(seed, tol, 0));
    if (!rep.passed || rep.max_rel_err >= worst.max_rel_err) {
      const bool failed = !rep.passed;
      worst = rep;
      if (failed) return worst;
    }
  }
  return worst;
}

GradcheckReport check_fusion(std::uint64_t seed, double tol) {
  Rng rng(seed);
  ParamStore<double> store;
  ParamBuilder<double> pb(store, &rng);
  const ModelConfig desk = ModelConfig::desk();
  const int d = desk.backbone.d, s = desk.grid();
  FusionLayout f = declare_fusion(pb, d, desk.fusion, true, true, &desk.tape);
  for (auto& e : store)
    for (auto& v : e.value.data()) v += 0.1 * rng.normal();
  store.add("m3", random_tensor<double>({d, s, s}, rng));
  store.add("m4", random_tensor<double>({d, s, s}, rng));
  const std::uint64_t proj_seed = rng();
  LossBuilder loss = [f, proj_seed](Graph<double>& g) {
    Rng r(proj_seed);
    FusedPair<double> out = fuse(g, f, g.param("m3"), g.param("m4"));
    return add(project(g, out.m3, r), project(g, out.m4, r));
  };
  return gradcheck(loss, store, options_for(seed, tol, 12));
}

GradcheckReport check_heads(std::uint64_t seed, double tol) {
  Rng rng(seed);
  ParamStore<double> store;
  ParamBuilder<double> pb(store, &rng);
  HeadsConfig cfg;
  cfg.hidden = 4;
  HeadsLayout h = declare_heads(pb, 6, cfg);
  randomize(store, rng, 0.4);
  store.add("m3", random_tensor<double>({6, 4, 4}, rng));
  store.add("m4", random_tensor<double>({6, 4, 4}, rng));
  const TrainTarget target = make_target(BBox{9.0, 13.0, 11.0, 7.0}, 32, 8);
  LossBuilder loss = [h, target](Graph<double>& g) {
    Prediction<double> p = predict(g, h, g.param("m3"), g.param("m4"));
    return total_loss(g, p, target, LossConfig{}).total;
  };
  return gradcheck(loss, store, options_for(seed, tol, 12));
}

GradcheckReport check_model(std::uint64_t seed, double tol) {
  Rng rng(seed);
  ModelConfig cfg = ModelConfig::gradcheck_tiny();
  ParamStore<double> store;
  ParamBuilder<double> pb(store, &rng);
  ModelLayout m = declare_model(pb, cfg);
  // training init plus noise, so zero-initialized layers carry gradient
  for (auto& e : store)
    for (auto& v : e.value.data()) v += 0.1 * rng.normal();
  auto z = random_tensor<double>({3, 16, 16}, rng);
  auto x = random_tensor<double>({3, 32, 32}, rng);
  for (auto& v : z.data()) v = 0.5 + 0.25 * v;
  for (auto& v : x.data()) v = 0.5 + 0.25 * v;
  const TrainTarget target = make_target(BBox{11.0, 9.0, 10.0, 12.0}, 32, cfg.stride());
  LossBuilder loss = [m, z, x, target](Graph<double>& g) {
    ModelOutput<double> out = forward(g, m, g.constant(z), g.constant(x));
    return total_loss(g, out.pred, target, m.cfg.loss).total;
  };
  return gradcheck(loss, store, options_for(seed, tol, 6));
}

}  // namespace

const std::vector<std::string>& gradcheck_scopes() {
  static const std::vector<std::string> s = {"tensor", "tape", "fusion", "heads", "model", "all"};
  return s;
}

GradcheckReport gradcheck_scope(const std::string& scope, std::uint64_t seed, double tol) {
  if (scope == "tensor") return check_tensor(seed, tol);
  if (scope == "tape") return check_tape(seed, tol);
  if (scope == "fusion") return check_fusion(seed, tol);
  if (scope == "heads") return check_heads(seed, tol);
  if (scope == "model") return check_model(seed, tol);
  if (scope != "all") throw std::invalid_argument("unknown gradcheck scope '" + scope + "'");
  GradcheckReport worst;
  worst.passed = true;
  for (const auto& s : gradcheck_scopes()) {
    if (s == "all") continue;
    GradcheckReport r = gradcheck_scope(s, seed, tol);
    if (!r.failure.empty()) r.failure = s + ": " + r.failure;
    r.worst_param = s + ":" + r.worst_param;
    const std::size_t checked = worst.checked + r.checked, frozen = worst.frozen + r.frozen;
    if (!r.passed) return r;
    if (r.max_rel_err >= worst.max_rel_err) worst = r;
    worst.checked = checked;
    worst.frozen = frozen;
  }
  return worst;
}

}  // namespace bft
