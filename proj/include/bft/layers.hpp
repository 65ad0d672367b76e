#pragma once

#include <optional>
#include <string>

#include "bft/ops.hpp"
#include "bft/params.hpp"

namespace bft {

/// Parameter indices of a conv layer (weight [O,C,k,k], bias [O]).
struct ConvSpec {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;
  int stride = 1;
  int pad = 0;
};

/// Parameter indices of a dense layer acting on token matrices [in,n].
struct LinearSpec {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;
};

template <typename T>
ConvSpec declare_conv(ParamBuilder<T>& pb, const std::string& name, int in, int out, int kernel,
                      int stride, Init init = Init::kHeNormal, bool bias = true,
                      double bias_value = 0.0);

template <typename T>
LinearSpec declare_linear(ParamBuilder<T>& pb, const std::string& name, int in, int out,
                          Init init = Init::kXavierNormal, bool bias = true);

template <typename T>
Var<T> apply(Graph<T>& g, const ConvSpec& c, Var<T> x);

template <typename T>
Var<T> apply(Graph<T>& g, const LinearSpec& l, Var<T> x);

}  // namespace bft
