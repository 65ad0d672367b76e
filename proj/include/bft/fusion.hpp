#pragma once

// Bidirectional fusion. Each stream fine-tunes M3 and M4 with 1x1 convs,
// joins them along the token axis, runs separable self-attention, splits
// back into M3', M4' and applies one cross-attention block:
//   forward stream:  queries/keys from M3', values from M4' -> M4''
//   backward stream: queries/keys from M4', values from M3' -> M3''
//
// Separable attention on tokens X [d,n]:
//   a = softmax_n(W_q X)              context weights [1,n]
//   c = (W_k X + b_k) a^T             context vector  [d,1]
//   o = W_o (relu(W_v X + b_v) * c) + b_o
//   y = X + o;  z = y + W_2 relu(W_1 y + b_1) + b_2

#include <optional>
#include <string>
#include <vector>

#include "bft/tape.hpp"

namespace bft {

struct FusionConfig {
  int depth = 1;
  int ffn_expansion = 2;
  bool share_streams = false;
  bool share_self = false;

  void validate() const;
};

struct AttentionLayout {
  LinearSpec query, key, value, out, ffn1, ffn2;
};

template <typename T>
struct AttentionOutput {
  Var<T> out;      // [d,n]
  Var<T> weights;  // [1,n]
};

template <typename T>
AttentionLayout declare_attention(ParamBuilder<T>& pb, const std::string& name, int d,
                                  int ffn_expansion);

template <typename T>
AttentionOutput<T> linear_self_attention(Graph<T>& g, const AttentionLayout& a, Var<T> mc);

/// `qsrc` supplies scores and keys, `vsrc` values and the residual. When
/// `tape` is given the key source is encoded first, with tokens laid out as
/// an (h, w) map.
template <typename T>
AttentionOutput<T> linear_cross_attention(Graph<T>& g, const AttentionLayout& a, Var<T> qsrc,
                                          Var<T> vsrc, const TapeLayout* tape = nullptr,
                                          int h = 0, int w = 0);

struct StreamLayout {
  ConvSpec tune3, tune4;
  std::vector<AttentionLayout> self;
  std::vector<AttentionLayout> cross;
  std::optional<TapeLayout> tape;
  std::optional<TapeLayout> self_tape;
};

struct FusionLayout {
  FusionConfig cfg;
  bool forward = true;   // emits M4''
  bool backward = true;  // emits M3''
  StreamLayout fwd, bwd;
};

template <typename T>
struct FusedPair {
  Var<T> m3;  // M3''
  Var<T> m4;  // M4''
  std::vector<Var<T>> context_weights;
};

/// Declares the streams that are enabled; `tape` may be null.
template <typename T>
FusionLayout declare_fusion(ParamBuilder<T>& pb, int d, const FusionConfig& cfg, bool forward,
                            bool backward, const TapeConfig* tape);

/// Streams that are disabled pass their input map through unchanged.
template <typename T>
FusedPair<T> fuse(Graph<T>& g, const FusionLayout& f, Var<T> m3, Var<T> m4);

}  // namespace bft
