#include "bft/layers.hpp"

namespace bft {

template <typename T>
ConvSpec declare_conv(ParamBuilder<T>& pb, const std::string& name, int in, int out, int kernel,
                      int stride, Init init, bool bias, double bias_value) {
  if (kernel % 2 == 0) throw DimensionError(name + ": kernel must be odd");
  ConvSpec c;
  c.weight = pb.require(name + ".w", Shape{out, in, kernel, kernel}, init);
  if (bias) {
    c.bias = pb.require(name + ".b", Shape{out}, bias_value == 0.0 ? Init::kZero : Init::kConstant,
                        ParamKind::kBias, bias_value);
  }
  c.stride = stride;
  c.pad = kernel / 2;
  return c;
}

template <typename T>
LinearSpec declare_linear(ParamBuilder<T>& pb, const std::string& name, int in, int out, Init init,
                          bool bias) {
  LinearSpec l;
  l.weight = pb.require(name + ".w", Shape{out, in}, init);
  if (bias) l.bias = pb.require(name + ".b", Shape{out}, Init::kZero, ParamKind::kBias);
  return l;
}

template <typename T>
Var<T> apply(Graph<T>& g, const ConvSpec& c, Var<T> x) {
  std::optional<Var<T>> b;
  if (c.bias) b = g.param(*c.bias);
  return conv2d(x, g.param(c.weight), b, c.stride, c.pad);
}

template <typename T>
Var<T> apply(Graph<T>& g, const LinearSpec& l, Var<T> x) {
  std::optional<Var<T>> b;
  if (l.bias) b = g.param(*l.bias);
  return linear(g.param(l.weight), x, b);
}

#define BFT_INSTANTIATE_LAYERS(T)                                                              \
  template ConvSpec declare_conv<T>(ParamBuilder<T>&, const std::string&, int, int, int, int, \
                                    Init, bool, double);                                      \
  template LinearSpec declare_linear<T>(ParamBuilder<T>&, const std::string&, int, int, Init, \
                                        bool);                                                \
  template Var<T> apply<T>(Graph<T>&, const ConvSpec&, Var<T>);                               \
  template Var<T> apply<T>(Graph<T>&, const LinearSpec&, Var<T>);

BFT_INSTANTIATE_LAYERS(float)
BFT_INSTANTIATE_LAYERS(double)

}  // namespace bft
