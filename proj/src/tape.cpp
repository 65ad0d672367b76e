#include "bft/tape.hpp"

namespace bft {

void TapeConfig::validate(int d) const {
  if (ratio <= 0 || d / ratio < 1) {
    throw DimensionError("tape: hidden width d/ratio must be at least 1");
  }
  if (kernel <= 0 || kernel % 2 == 0) throw DimensionError("tape: kernel must be odd");
}

template <typename T>
TapeLayout declare_tape(ParamBuilder<T>& pb, const std::string& name, int d, const TapeConfig& cfg) {
  cfg.validate(d);
  TapeLayout t;
  t.cfg = cfg;
  const int hidden = d / cfg.ratio;
  t.mlp1 = declare_linear(pb, name + ".mlp1", d, hidden, Init::kHeNormal);
  t.mlp2 = declare_linear(pb, name + ".mlp2", hidden, d, Init::kXavierNormal);
  t.conv = declare_conv(pb, name + ".conv", 2, 1, cfg.kernel, 1, Init::kXavierNormal);
  t.alpha = pb.require(name + ".alpha", Shape{1}, Init::kConstant, ParamKind::kGain, cfg.alpha_init);
  return t;
}

template <typename T>
Var<T> channel_weights(Graph<T>& g, const TapeLayout& t, Var<T> f) {
  const int d = f.dim(0);
  Var<T> pooled = add(global_pool(f, Pool::kMax), global_pool(f, Pool::kAvg));
  Var<T> h = relu(apply(g, t.mlp1, reshape(pooled, {d, 1})));
  return reshape(sigmoid(apply(g, t.mlp2, h)), {d, 1, 1});
}

template <typename T>
Var<T> spatial_weights(Graph<T>& g, const TapeLayout& t, Var<T> f) {
  Var<T> pooled = concat(channel_pool(f, Pool::kMax), channel_pool(f, Pool::kAvg), 0);
  return sigmoid(apply(g, t.conv, pooled));
}

template <typename T>
Var<T> encode(Graph<T>& g, const TapeLayout& t, Var<T> f) {
  if (f.value().rank() != 3) throw DimensionError("tape: expected [d,h,w], got " + shape_str(f.shape()));
  Var<T> m = channel_spatial_product(channel_weights(g, t, f), spatial_weights(g, t, f));
  if (t.cfg.multiplicative) m = mul(f, m);
  return add_scaled(f, g.param(t.alpha), m);
}

#define BFT_INSTANTIATE_TAPE(T)                                                                   \
  template TapeLayout declare_tape<T>(ParamBuilder<T>&, const std::string&, int,                  \
                                      const TapeConfig&);                                         \
  template Var<T> channel_weights<T>(Graph<T>&, const TapeLayout&, Var<T>);                       \
  template Var<T> spatial_weights<T>(Graph<T>&, const TapeLayout&, Var<T>);                       \
  template Var<T> encode<T>(Graph<T>&, const TapeLayout&, Var<T>);

BFT_INSTANTIATE_TAPE(float)
BFT_INSTANTIATE_TAPE(double)

}  // namespace bft
