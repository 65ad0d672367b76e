#pragma once

// Target-aware positional encoding:
//   W_c = sigmoid(MLP(maxpool_hw(F) + avgpool_hw(F)))          [d,1,1]
//   W_s = sigmoid(Conv(concat(maxpool_c(F), avgpool_c(F))))    [1,h,w]
//   F'  = F + alpha * (W_c (x) W_s)
// The multiplicative form F' = F + alpha * F * (W_c (x) W_s) is selectable.

#include <string>

#include "bft/layers.hpp"

namespace bft {

struct TapeConfig {
  bool enabled = true;
  int ratio = 4;
  int kernel = 7;
  bool multiplicative = false;
  double alpha_init = 0.0;
  bool in_self = false;  // also encode keys inside the self-attention block

  void validate(int d) const;
};

struct TapeLayout {
  TapeConfig cfg;
  LinearSpec mlp1, mlp2;
  ConvSpec conv;
  std::size_t alpha = 0;
};

template <typename T>
TapeLayout declare_tape(ParamBuilder<T>& pb, const std::string& name, int d, const TapeConfig& cfg);

template <typename T>
Var<T> channel_weights(Graph<T>& g, const TapeLayout& t, Var<T> f);

template <typename T>
Var<T> spatial_weights(Graph<T>& g, const TapeLayout& t, Var<T> f);

template <typename T>
Var<T> encode(Graph<T>& g, const TapeLayout& t, Var<T> f);

}  // namespace bft
