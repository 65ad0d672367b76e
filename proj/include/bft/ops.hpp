#pragma once

// Differentiable operation vocabulary. Every op validates shapes, computes
// its output eagerly, and records a backward transform on the input's Graph.
// Broadcasting is never implicit: the only mixed-shape ops are the named
// ones below (scale_by, scale_rows, channel_spatial_product, linear bias).

#include <optional>
#include <type_traits>
#include <utility>

#include "bft/graph.hpp"

namespace bft {

enum class Pool { kMax, kAvg };

/// Optional operand that does not take part in template argument deduction.
template <typename T>
using OptVar = std::type_identity_t<std::optional<Var<T>>>;

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// w[out,in] * x[in,n] + b[out] (bias broadcast over columns).
template <typename T>
Var<T> linear(Var<T> w, Var<T> x, OptVar<T> b);
/// Cross-correlation (no kernel flip). x[C,H,W], w[O,C,kh,kw], b[O].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, OptVar<T> b, int stride, int pad);
/// Depth-wise sliding inner product of template z[C,hz,wz] over x[C,H,W]
/// with zero "same" padding: out[c,i,j] = sum_uv z[c,u,v] x[c,i+u-hz/2,j+v-wz/2].
template <typename T>
Var<T> xcorr_depthwise(Var<T> x, Var<T> z);
/// Sums consecutive channel groups: [C,H,W] -> [groups,H,W].
template <typename T>
Var<T> group_sum(Var<T> x, int groups);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> div(Var<T> a, Var<T> b);
template <typename T>
Var<T> minimum(Var<T> a, Var<T> b);
template <typename T>
Var<T> maximum(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, double c);
template <typename T>
Var<T> add_scalar(Var<T> x, double c);
/// s has one element; returns s * x.
template <typename T>
Var<T> scale_by(Var<T> s, Var<T> x);
/// f + s * m; returns f's values unchanged when s is exactly zero.
template <typename T>
Var<T> add_scaled(Var<T> f, Var<T> s, Var<T> m);
/// x[d,n] with row i multiplied by c[i] (c is [d,1] or [d]).
template <typename T>
Var<T> scale_rows(Var<T> x, Var<T> c);
/// Outer broadcast of cw[C,1,1] and sw[1,H,W] into [C,H,W].
template <typename T>
Var<T> channel_spatial_product(Var<T> cw, Var<T> sw);

template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> log(Var<T> x);
template <typename T>
Var<T> abs(Var<T> x);
template <typename T>
Var<T> square(Var<T> x);
template <typename T>
Var<T> clamp(Var<T> x, double lo, double hi);

template <typename T>
Var<T> softmax(Var<T> x, int axis);
/// [C,H,W] -> [C,1,1]
template <typename T>
Var<T> global_pool(Var<T> x, Pool kind);
/// [C,H,W] -> [1,H,W]
template <typename T>
Var<T> channel_pool(Var<T> x, Pool kind);

template <typename T>
Var<T> concat(Var<T> a, Var<T> b, int axis);
template <typename T>
Var<T> slice(Var<T> x, int axis, int begin, int end);
template <typename T>
std::pair<Var<T>, Var<T>> split(Var<T> x, int axis, int at);
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
/// Channel vector at spatial cell (row, col) of x[C,H,W] -> [C].
template <typename T>
Var<T> cell(Var<T> x, int row, int col);

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

}  // namespace bft
