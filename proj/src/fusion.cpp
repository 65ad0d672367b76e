#include "bft/fusion.hpp"

namespace bft {

void FusionConfig::validate() const {
  if (depth < 1) throw DimensionError("fusion: depth must be at least 1");
  if (ffn_expansion < 1) throw DimensionError("fusion: ffn_expansion must be at least 1");
}

template <typename T>
AttentionLayout declare_attention(ParamBuilder<T>& pb, const std::string& name, int d,
                                  int ffn_expansion) {
  AttentionLayout a;
  a.query = declare_linear(pb, name + ".q", d, 1);
  a.key = declare_linear(pb, name + ".k", d, d);
  a.value = declare_linear(pb, name + ".v", d, d, Init::kHeNormal);
  a.out = declare_linear(pb, name + ".o", d, d, Init::kZero);
  a.ffn1 = declare_linear(pb, name + ".ffn1", d, d * ffn_expansion, Init::kHeNormal);
  a.ffn2 = declare_linear(pb, name + ".ffn2", d * ffn_expansion, d, Init::kZero);
  return a;
}

namespace {

template <typename T>
AttentionOutput<T> attend(Graph<T>& g, const AttentionLayout& a, Var<T> keys_src, Var<T> vsrc) {
  if (keys_src.value().rank() != 2 || keys_src.shape() != vsrc.shape()) {
    throw DimensionError("attention: token maps differ " + shape_str(keys_src.shape()) + " vs " +
                         shape_str(vsrc.shape()));
  }
  const int n = keys_src.dim(1);
  if (n < 1) throw DimensionError("attention: no tokens");
  Var<T> weights = softmax(apply(g, a.query, keys_src), 1);
  Var<T> context = matmul(apply(g, a.key, keys_src), reshape(weights, {n, 1}));
  Var<T> gated = scale_rows(relu(apply(g, a.value, vsrc)), context);
  Var<T> y = add(vsrc, apply(g, a.out, gated));
  Var<T> z = add(y, apply(g, a.ffn2, relu(apply(g, a.ffn1, y))));
  return {z, weights};
}

template <typename T>
Var<T> as_map(Var<T> tokens, int h, int w) {
  return reshape(tokens, {tokens.dim(0), h, w});
}

}  // namespace

template <typename T>
AttentionOutput<T> linear_self_attention(Graph<T>& g, const AttentionLayout& a, Var<T> mc) {
  return attend(g, a, mc, mc);
}

template <typename T>
AttentionOutput<T> linear_cross_attention(Graph<T>& g, const AttentionLayout& a, Var<T> qsrc,
                                          Var<T> vsrc, const TapeLayout* tape, int h, int w) {
  if (qsrc.shape() != vsrc.shape()) {
    throw DimensionError("cross attention: token count mismatch " + shape_str(qsrc.shape()) +
                         " vs " + shape_str(vsrc.shape()));
  }
  Var<T> keys = qsrc;
  if (tape != nullptr) {
    if (h * w != qsrc.dim(1)) throw DimensionError("cross attention: map extents do not match tokens");
    const int d = qsrc.dim(0);
    keys = reshape(encode(g, *tape, as_map(qsrc, h, w)), {d, h * w});
  }
  return attend(g, a, keys, vsrc);
}

namespace {

template <typename T>
StreamLayout declare_stream(ParamBuilder<T>& pb, const std::string& name, int d,
                            const FusionConfig& cfg, const TapeConfig* tape,
                            const StreamLayout* trunk = nullptr) {
  StreamLayout s;
  if (trunk != nullptr) {
    s.tune3 = trunk->tune3;
    s.tune4 = trunk->tune4;
    s.self = trunk->self;
    s.self_tape = trunk->self_tape;
  } else {
    s.tune3 = declare_conv(pb, name + ".tune3", d, d, 1, 1, Init::kXavierNormal);
    s.tune4 = declare_conv(pb, name + ".tune4", d, d, 1, 1, Init::kXavierNormal);
    for (int i = 0; i < cfg.depth; ++i) {
      s.self.push_back(declare_attention(pb, name + ".self" + std::to_string(i), d, cfg.ffn_expansion));
    }
  }
  for (int i = 0; i < cfg.depth; ++i) {
    s.cross.push_back(
        declare_attention(pb, name + ".cross" + std::to_string(i), d, cfg.ffn_expansion));
  }
  if (tape != nullptr) {
    s.tape = declare_tape(pb, name + ".tape", d, *tape);
    if (tape->in_self && trunk == nullptr) s.self_tape = declare_tape(pb, name + ".self_tape", d, *tape);
  }
  return s;
}

template <typename T>
std::pair<Var<T>, Var<T>> self_stage(Graph<T>& g, const StreamLayout& s, Var<T> m3, Var<T> m4,
                                     std::vector<Var<T>>& weights) {
  const int d = m3.dim(0), h = m3.dim(1), w = m3.dim(2);
  const int n = h * w;
  Var<T> mc = concat(reshape(apply(g, s.tune3, m3), {d, n}), reshape(apply(g, s.tune4, m4), {d, n}), 1);
  for (const auto& block : s.self) {
    AttentionOutput<T> r;
    if (s.self_tape) {
      // joint tokens read as the two maps stacked vertically
      Var<T> keys = reshape(encode(g, *s.self_tape, as_map(mc, 2 * h, w)), {d, 2 * n});
      r = attend(g, block, keys, mc);
    } else {
      r = linear_self_attention(g, block, mc);
    }
    weights.push_back(r.weights);
    mc = r.out;
  }
  return split(mc, 1, n);
}

template <typename T>
Var<T> cross_stage(Graph<T>& g, const StreamLayout& s, Var<T> q, Var<T> v, int h, int w,
                   std::vector<Var<T>>& weights) {
  const TapeLayout* tape = s.tape ? &*s.tape : nullptr;
  for (const auto& block : s.cross) {
    auto r = linear_cross_attention(g, block, q, v, tape, h, w);
    weights.push_back(r.weights);
    v = r.out;
  }
  return v;
}

}  // namespace

template <typename T>
FusionLayout declare_fusion(ParamBuilder<T>& pb, int d, const FusionConfig& cfg, bool forward,
                            bool backward, const TapeConfig* tape) {
  cfg.validate();
  FusionLayout f;
  f.cfg = cfg;
  f.forward = forward;
  f.backward = backward;
  if (forward) f.fwd = declare_stream(pb, "fusion.fwd", d, cfg, tape);
  if (backward) {
    if (forward && cfg.share_streams) {
      f.bwd = f.fwd;
    } else {
      const bool share = forward && cfg.share_self;
      f.bwd = declare_stream(pb, "fusion.bwd", d, cfg, tape, share ? &f.fwd : nullptr);
    }
  }
  return f;
}

template <typename T>
FusedPair<T> fuse(Graph<T>& g, const FusionLayout& f, Var<T> m3, Var<T> m4) {
  if (m3.value().rank() != 3 || m3.shape() != m4.shape()) {
    throw DimensionError("fuse: maps differ " + shape_str(m3.shape()) + " vs " + shape_str(m4.shape()));
  }
  const int d = m3.dim(0), h = m3.dim(1), w = m3.dim(2);
  const bool shared_trunk =
      f.forward && f.backward && (f.cfg.share_streams || f.cfg.share_self);
  FusedPair<T> out{m3, m4, {}};
  std::pair<Var<T>, Var<T>> fwd_tokens, bwd_tokens;
  if (f.forward) fwd_tokens = self_stage(g, f.fwd, m3, m4, out.context_weights);
  if (f.backward) {
    bwd_tokens = shared_trunk ? fwd_tokens : self_stage(g, f.bwd, m3, m4, out.context_weights);
  }
  if (f.forward) {
    Var<T> v = cross_stage(g, f.fwd, fwd_tokens.first, fwd_tokens.second, h, w, out.context_weights);
    out.m4 = reshape(v, {d, h, w});
  }
  if (f.backward) {
    Var<T> v = cross_stage(g, f.bwd, bwd_tokens.second, bwd_tokens.first, h, w, out.context_weights);
    out.m3 = reshape(v, {d, h, w});
  }
  return out;
}

#define BFT_INSTANTIATE_FUSION(T)                                                                 \
  template AttentionLayout declare_attention<T>(ParamBuilder<T>&, const std::string&, int, int); \
  template AttentionOutput<T> linear_self_attention<T>(Graph<T>&, const AttentionLayout&, Var<T>); \
  template AttentionOutput<T> linear_cross_attention<T>(Graph<T>&, const AttentionLayout&,        \
                                                        Var<T>, Var<T>, const TapeLayout*, int,   \
                                                        int);                                     \
  template FusionLayout declare_fusion<T>(ParamBuilder<T>&, int, const FusionConfig&, bool, bool, \
                                          const TapeConfig*);                                     \
  template FusedPair<T> fuse<T>(Graph<T>&, const FusionLayout&, Var<T>, Var<T>);

BFT_INSTANTIATE_FUSION(float)
BFT_INSTANTIATE_FUSION(double)

}  // namespace bft
