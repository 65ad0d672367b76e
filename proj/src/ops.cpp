#include "bft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "bft/kernels.hpp"

namespace bft {
namespace {

template <typename T>
Graph<T>& graph_of(Var<T> a, Var<T> b, const char* op) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw ContractError(std::string(op) + ": operands belong to different graphs");
  }
  return *a.graph;
}

template <typename T>
void require_same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(Var<T> x, int rank, const char* op) {
  if (x.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

// fwd(x, y) -> z; bwd(x, y, z) -> {dz/dx, dz/dy}
template <typename T, typename Fwd, typename Bwd>
Var<T> elementwise2(const char* op, Var<T> a, Var<T> b, Fwd fwd, Bwd bwd) {
  Graph<T>& g = graph_of(a, b, op);
  require_same_shape(a, b, op);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const std::size_t out_id = g.size();
  return g.record(op, std::move(out), {a, b}, [a, b, out_id, bwd](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& x = gr.value(a);
    const Tensor<T>& y = gr.value(b);
    const Tensor<T>& z = gr.value(Var<T>{&gr, out_id});
    Tensor<T>* ga = gr.needs_grad(a) ? &gr.grad(a) : nullptr;
    Tensor<T>* gb = gr.needs_grad(b) ? &gr.grad(b) : nullptr;
    for (std::size_t i = 0; i < go.size(); ++i) {
      const auto [dx, dy] = bwd(x[i], y[i], z[i]);
      if (ga) (*ga)[i] += go[i] * dx;
      if (gb) (*gb)[i] += go[i] * dy;
    }
  });
}

// fwd(x) -> y; bwd(x, y) -> dy/dx
template <typename T, typename Fwd, typename Bwd>
Var<T> elementwise1(const char* op, Var<T> a, Fwd fwd, Bwd bwd) {
  Graph<T>& g = *a.graph;
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t out_id = g.size();
  return g.record(op, std::move(out), {a}, [a, out_id, bwd](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& x = gr.value(a);
    const Tensor<T>& y = gr.value(Var<T>{&gr, out_id});
    Tensor<T>& ga = gr.grad(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bwd(x[i], y[i]);
  });
}

// pick(x) -> branch; fwd(x, branch) -> y; bwd(x, branch) -> dy/dx
template <typename T, typename Pick, typename Fwd, typename Bwd>
Var<T> piecewise1(const char* op, Var<T> a, Pick pick, Fwd fwd, Bwd bwd) {
  Graph<T>& g = *a.graph;
  const Tensor<T>& av = a.value();
  auto branches = std::make_shared<std::vector<std::uint8_t>>(av.size());
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto b = static_cast<std::uint8_t>(g.branch(pick(av[i])));
    (*branches)[i] = b;
    out[i] = fwd(av[i], b);
  }
  return g.record(op, std::move(out), {a}, [a, branches, bwd](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& x = gr.value(a);
    Tensor<T>& ga = gr.grad(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bwd(x[i], (*branches)[i]);
  });
}

// pick(x, y) -> branch 0 (take x) or 1 (take y)
template <typename T, typename Pick>
Var<T> select2(const char* op, Var<T> a, Var<T> b, Pick pick) {
  Graph<T>& g = graph_of(a, b, op);
  require_same_shape(a, b, op);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  auto branches = std::make_shared<std::vector<std::uint8_t>>(av.size());
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto k = static_cast<std::uint8_t>(g.branch(pick(av[i], bv[i])));
    (*branches)[i] = k;
    out[i] = k == 0 ? av[i] : bv[i];
  }
  return g.record(op, std::move(out), {a, b}, [a, b, branches](Graph<T>& gr, const Tensor<T>& go) {
    Tensor<T>* ga = gr.needs_grad(a) ? &gr.grad(a) : nullptr;
    Tensor<T>* gb = gr.needs_grad(b) ? &gr.grad(b) : nullptr;
    for (std::size_t i = 0; i < go.size(); ++i) {
      if ((*branches)[i] == 0) {
        if (ga) (*ga)[i] += go[i];
      } else if (gb) {
        (*gb)[i] += go[i];
      }
    }
  });
}

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError(std::string(op) + ": invalid axis " + std::to_string(axis) +
                         " for rank " + std::to_string(rank));
  }
  return axis;
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// cols[(c*kh+ki)*kw+kj, oy*wo+ox] = x[c, oy*stride-pad+ki, ox*stride-pad+kj]
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo,
            T* cols) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = cols + (static_cast<std::size_t>(ch * kh + ki) * kw + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int c, int h, int w, int kh, int kw, int stride, int pad, int ho,
                int wo, T* x) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = cols + (static_cast<std::size_t>(ch * kh + ki) * kw + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* dst = x + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b, "matmul");
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor<T> out(Shape{m, n});
  kernels::gemm(false, false, m, n, k, a.value().ptr(), k, b.value().ptr(), n, T(0), out.ptr(), n);
  return g.record("matmul", std::move(out), {a, b}, [a, b, m, n, k](Graph<T>& gr, const Tensor<T>& go) {
    if (gr.needs_grad(a)) {
      // dA = dC * B^T
      kernels::gemm(false, true, m, k, n, go.ptr(), n, gr.value(b).ptr(), n, T(1),
                    gr.grad(a).ptr(), k);
    }
    if (gr.needs_grad(b)) {
      // dB = A^T * dC
      kernels::gemm(true, false, k, n, m, gr.value(a).ptr(), k, go.ptr(), n, T(1),
                    gr.grad(b).ptr(), n);
    }
  });
}

template <typename T>
Var<T> linear(Var<T> w, Var<T> x, OptVar<T> b) {
  Graph<T>& g = graph_of(w, x, "linear");
  require_rank(w, 2, "linear");
  require_rank(x, 2, "linear");
  const int out_f = w.dim(0), in_f = w.dim(1), n = x.dim(1);
  if (x.dim(0) != in_f) {
    throw DimensionError("linear: weight " + shape_str(w.shape()) + " cannot act on " +
                         shape_str(x.shape()));
  }
  if (b && (b->graph != &g || b->value().size() != static_cast<std::size_t>(out_f))) {
    throw DimensionError("linear: bias must have " + std::to_string(out_f) + " values");
  }
  Tensor<T> out(Shape{out_f, n});
  if (b) {
    const Tensor<T>& bv = b->value();
    for (int i = 0; i < out_f; ++i) std::fill_n(out.ptr() + static_cast<std::size_t>(i) * n, n, bv[i]);
  }
  kernels::gemm(false, false, out_f, n, in_f, w.value().ptr(), in_f, x.value().ptr(), n,
                b ? T(1) : T(0), out.ptr(), n);
  const Var<T> bias = b.value_or(w);
  const bool has_bias = b.has_value();
  auto bwd = [w, x, bias, has_bias, out_f, in_f, n](Graph<T>& gr, const Tensor<T>& go) {
    if (gr.needs_grad(w)) {
      kernels::gemm(false, true, out_f, in_f, n, go.ptr(), n, gr.value(x).ptr(), n, T(1),
                    gr.grad(w).ptr(), in_f);
    }
    if (gr.needs_grad(x)) {
      kernels::gemm(true, false, in_f, n, out_f, gr.value(w).ptr(), in_f, go.ptr(), n, T(1),
                    gr.grad(x).ptr(), n);
    }
    if (has_bias && gr.needs_grad(bias)) {
      Tensor<T>& gb = gr.grad(bias);
      for (int i = 0; i < out_f; ++i) {
        T s = 0;
        for (int j = 0; j < n; ++j) s += go[static_cast<std::size_t>(i) * n + j];
        gb[i] += s;
      }
    }
  };
  if (has_bias) return g.record("linear", std::move(out), {w, x, bias}, bwd);
  return g.record("linear", std::move(out), {w, x}, bwd);
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, OptVar<T> b, int stride, int pad) {
  Graph<T>& g = graph_of(x, w, "conv2d");
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != c) {
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) + " expects " +
                         std::to_string(w.dim(1)) + " input channels, got " + std::to_string(c));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd");
  if (stride < 1 || pad < 0) throw DimensionError("conv2d: stride must be >= 1 and pad >= 0");
  const int ho_num = h + 2 * pad - kh, wo_num = wd + 2 * pad - kw;
  if (ho_num < 0 || wo_num < 0) {
    throw DimensionError("conv2d: non-positive output extent for input " + shape_str(x.shape()));
  }
  const int ho = ho_num / stride + 1, wo = wo_num / stride + 1;
  if (b && (b->graph != &g || b->value().size() != static_cast<std::size_t>(o))) {
    throw DimensionError("conv2d: bias must have " + std::to_string(o) + " values");
  }
  const int kdim = c * kh * kw;
  const int p = ho * wo;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;

  std::shared_ptr<std::vector<T>> cols;
  const T* col_ptr = x.value().ptr();
  if (!pointwise) {
    cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(kdim) * p);
    im2col(x.value().ptr(), c, h, wd, kh, kw, stride, pad, ho, wo, cols->data());
    col_ptr = cols->data();
  }
  Tensor<T> out(Shape{o, ho, wo});
  if (b) {
    const Tensor<T>& bv = b->value();
    for (int i = 0; i < o; ++i) std::fill_n(out.ptr() + static_cast<std::size_t>(i) * p, p, bv[i]);
  }
  kernels::gemm(false, false, o, p, kdim, w.value().ptr(), kdim, col_ptr, p, b ? T(1) : T(0),
                out.ptr(), p);

  const Var<T> bias = b.value_or(w);
  const bool has_bias = b.has_value();
  auto bwd = [=](Graph<T>& gr, const Tensor<T>& go) {
    const T* cp = pointwise ? gr.value(x).ptr() : cols->data();
    if (gr.needs_grad(w)) {
      kernels::gemm(false, true, o, kdim, p, go.ptr(), p, cp, p, T(1), gr.grad(w).ptr(), kdim);
    }
    if (gr.needs_grad(x)) {
      if (pointwise) {
        kernels::gemm(true, false, kdim, p, o, gr.value(w).ptr(), kdim, go.ptr(), p, T(1),
                      gr.grad(x).ptr(), p);
      } else {
        std::vector<T> dcols(static_cast<std::size_t>(kdim) * p);
        kernels::gemm(true, false, kdim, p, o, gr.value(w).ptr(), kdim, go.ptr(), p, T(0),
                      dcols.data(), p);
        col2im_add(dcols.data(), c, h, wd, kh, kw, stride, pad, ho, wo, gr.grad(x).ptr());
      }
    }
    if (has_bias && gr.needs_grad(bias)) {
      Tensor<T>& gb = gr.grad(bias);
      for (int i = 0; i < o; ++i) {
        T s = 0;
        for (int j = 0; j < p; ++j) s += go[static_cast<std::size_t>(i) * p + j];
        gb[i] += s;
      }
    }
  };
  if (has_bias) return g.record("conv2d", std::move(out), {x, w, bias}, bwd);
  return g.record("conv2d", std::move(out), {x, w}, bwd);
}

template <typename T>
Var<T> xcorr_depthwise(Var<T> x, Var<T> z) {
  Graph<T>& g = graph_of(x, z, "xcorr_depthwise");
  require_rank(x, 3, "xcorr_depthwise");
  require_rank(z, 3, "xcorr_depthwise");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int hz = z.dim(1), wz = z.dim(2);
  if (z.dim(0) != c) {
    throw DimensionError("xcorr_depthwise: channel mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(z.shape()));
  }
  if (hz > h || wz > w) throw DimensionError("xcorr_depthwise: template larger than search map");
  const int top = hz / 2, left = wz / 2;
  const int hp = h + hz - 1, wp = w + wz - 1;
  // Zero-padded copy of x so that xp[c, i+u, j+v] = x[c, i+u-top, j+v-left].
  auto xp = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c) * hp * wp, T(0));
  const Tensor<T>& xv = x.value();
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < h; ++i) {
      std::copy_n(xv.ptr() + (static_cast<std::size_t>(ch) * h + i) * w, w,
                  xp->data() + (static_cast<std::size_t>(ch) * hp + i + top) * wp + left);
    }
  }
  const Tensor<T>& zv = z.value();
  Tensor<T> out(Shape{c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < h; ++i) {
      T* orow = out.ptr() + (static_cast<std::size_t>(ch) * h + i) * w;
      for (int u = 0; u < hz; ++u) {
        const T* xrow = xp->data() + (static_cast<std::size_t>(ch) * hp + i + u) * wp;
        for (int v = 0; v < wz; ++v) {
          kernels::axpy(w, zv.at(ch, u, v), xrow + v, orow);
        }
      }
    }
  }
  return g.record("xcorr_depthwise", std::move(out), {x, z},
                  [=](Graph<T>& gr, const Tensor<T>& go) {
                    const bool need_x = gr.needs_grad(x);
                    const bool need_z = gr.needs_grad(z);
                    const Tensor<T>& zt = gr.value(z);
                    std::vector<T> dxp;
                    if (need_x) dxp.assign(xp->size(), T(0));
                    Tensor<T>* gz = need_z ? &gr.grad(z) : nullptr;
                    for (int ch = 0; ch < c; ++ch) {
                      for (int i = 0; i < h; ++i) {
                        const T* grow = go.ptr() + (static_cast<std::size_t>(ch) * h + i) * w;
                        for (int u = 0; u < hz; ++u) {
                          const std::size_t base = (static_cast<std::size_t>(ch) * hp + i + u) * wp;
                          for (int v = 0; v < wz; ++v) {
                            if (need_x) kernels::axpy(w, zt.at(ch, u, v), grow, dxp.data() + base + v);
                            if (gz) gz->at(ch, u, v) += kernels::dot(grow, xp->data() + base + v, w);
                          }
                        }
                      }
                    }
                    if (need_x) {
                      Tensor<T>& gx = gr.grad(x);
                      for (int ch = 0; ch < c; ++ch) {
                        for (int i = 0; i < h; ++i) {
                          const T* src = dxp.data() + (static_cast<std::size_t>(ch) * hp + i + top) * wp + left;
                          T* dst = gx.ptr() + (static_cast<std::size_t>(ch) * h + i) * w;
                          for (int j = 0; j < w; ++j) dst[j] += src[j];
                        }
                      }
                    }
                  });
}

template <typename T>
Var<T> group_sum(Var<T> x, int groups) {
  require_rank(x, 3, "group_sum");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (groups < 1 || c % groups != 0) {
    throw DimensionError("group_sum: " + std::to_string(c) + " channels not divisible into " +
                         std::to_string(groups) + " groups");
  }
  const int per = c / groups;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out(Shape{groups, h, w});
  const Tensor<T>& xv = x.value();
  for (int ch = 0; ch < c; ++ch) {
    const T* src = xv.ptr() + ch * plane;
    T* dst = out.ptr() + (ch / per) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
  }
  return x.graph->record("group_sum", std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& go) {
    Tensor<T>& gx = gr.grad(x);
    for (int ch = 0; ch < c; ++ch) {
      const T* src = go.ptr() + (ch / per) * plane;
      T* dst = gx.ptr() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return elementwise2<T>("add", a, b, [](T x, T y) { return x + y; },
                         [](T, T, T) { return std::pair<T, T>{T(1), T(1)}; });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return elementwise2<T>("sub", a, b, [](T x, T y) { return x - y; },
                         [](T, T, T) { return std::pair<T, T>{T(1), T(-1)}; });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return elementwise2<T>("mul", a, b, [](T x, T y) { return x * y; },
                         [](T x, T y, T) { return std::pair<T, T>{y, x}; });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  return elementwise2<T>("div", a, b, [](T x, T y) { return x / y; },
                         [](T, T y, T z) { return std::pair<T, T>{T(1) / y, -z / y}; });
}

template <typename T>
Var<T> minimum(Var<T> a, Var<T> b) {
  // ties take the first operand
  return select2<T>("minimum", a, b, [](T x, T y) { return x <= y ? 0u : 1u; });
}

template <typename T>
Var<T> maximum(Var<T> a, Var<T> b) {
  return select2<T>("maximum", a, b, [](T x, T y) { return x >= y ? 0u : 1u; });
}

template <typename T>
Var<T> scale(Var<T> x, double c) {
  const T k = static_cast<T>(c);
  return elementwise1<T>("scale", x, [k](T v) { return k * v; }, [k](T, T) { return k; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, double c) {
  const T k = static_cast<T>(c);
  return elementwise1<T>("add_scalar", x, [k](T v) { return v + k; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> scale_by(Var<T> s, Var<T> x) {
  Graph<T>& g = graph_of(s, x, "scale_by");
  if (s.value().size() != 1) throw DimensionError("scale_by: scale must hold one value");
  const T k = s.value()[0];
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * xv[i];
  return g.record("scale_by", std::move(out), {s, x}, [s, x](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& xt = gr.value(x);
    if (gr.needs_grad(s)) {
      T acc = 0;
      for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * xt[i];
      gr.grad(s)[0] += acc;
    }
    if (gr.needs_grad(x)) {
      const T kk = gr.value(s)[0];
      Tensor<T>& gx = gr.grad(x);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += kk * go[i];
    }
  });
}

template <typename T>
Var<T> add_scaled(Var<T> f, Var<T> s, Var<T> m) {
  Graph<T>& g = graph_of(f, s, "add_scaled");
  graph_of(f, m, "add_scaled");
  if (s.value().size() != 1) throw DimensionError("add_scaled: scale must hold one value");
  require_same_shape(f, m, "add_scaled");
  const T k = s.value()[0];
  Tensor<T> out = f.value();
  if (k != T(0)) {
    const Tensor<T>& mv = m.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += k * mv[i];
  }
  return g.record("add_scaled", std::move(out), {f, s, m}, [f, s, m](Graph<T>& gr, const Tensor<T>& go) {
    if (gr.needs_grad(f)) {
      Tensor<T>& gf = gr.grad(f);
      for (std::size_t i = 0; i < go.size(); ++i) gf[i] += go[i];
    }
    if (gr.needs_grad(s)) {
      const Tensor<T>& mt = gr.value(m);
      T acc = 0;
      for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * mt[i];
      gr.grad(s)[0] += acc;
    }
    if (gr.needs_grad(m)) {
      const T kk = gr.value(s)[0];
      Tensor<T>& gm = gr.grad(m);
      for (std::size_t i = 0; i < go.size(); ++i) gm[i] += kk * go[i];
    }
  });
}

template <typename T>
Var<T> scale_rows(Var<T> x, Var<T> c) {
  Graph<T>& g = graph_of(x, c, "scale_rows");
  require_rank(x, 2, "scale_rows");
  const int d = x.dim(0), n = x.dim(1);
  if (c.value().size() != static_cast<std::size_t>(d)) {
    throw DimensionError("scale_rows: need " + std::to_string(d) + " row scales, got " +
                         shape_str(c.shape()));
  }
  const Tensor<T>& xv = x.value();
  const Tensor<T>& cv = c.value();
  Tensor<T> out(xv.shape());
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < n; ++j) out.at(i, j) = xv.at(i, j) * cv[i];
  }
  return g.record("scale_rows", std::move(out), {x, c}, [=](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& xt = gr.value(x);
    const Tensor<T>& ct = gr.value(c);
    Tensor<T>* gx = gr.needs_grad(x) ? &gr.grad(x) : nullptr;
    Tensor<T>* gc = gr.needs_grad(c) ? &gr.grad(c) : nullptr;
    for (int i = 0; i < d; ++i) {
      T acc = 0;
      for (int j = 0; j < n; ++j) {
        const T gv = go.at(i, j);
        if (gx) gx->at(i, j) += gv * ct[i];
        acc += gv * xt.at(i, j);
      }
      if (gc) (*gc)[i] += acc;
    }
  });
}

template <typename T>
Var<T> channel_spatial_product(Var<T> cw, Var<T> sw) {
  Graph<T>& g = graph_of(cw, sw, "channel_spatial_product");
  require_rank(cw, 3, "channel_spatial_product");
  require_rank(sw, 3, "channel_spatial_product");
  if (cw.dim(1) != 1 || cw.dim(2) != 1 || sw.dim(0) != 1) {
    throw DimensionError("channel_spatial_product: expects [C,1,1] and [1,H,W], got " +
                         shape_str(cw.shape()) + " and " + shape_str(sw.shape()));
  }
  const int c = cw.dim(0), h = sw.dim(1), w = sw.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out(Shape{c, h, w});
  const Tensor<T>& cv = cw.value();
  const Tensor<T>& sv = sw.value();
  for (int ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = cv[ch] * sv[i];
  }
  return g.record("channel_spatial_product", std::move(out), {cw, sw},
                  [=](Graph<T>& gr, const Tensor<T>& go) {
                    const Tensor<T>& ct = gr.value(cw);
                    const Tensor<T>& st = gr.value(sw);
                    Tensor<T>* gc = gr.needs_grad(cw) ? &gr.grad(cw) : nullptr;
                    Tensor<T>* gs = gr.needs_grad(sw) ? &gr.grad(sw) : nullptr;
                    for (int ch = 0; ch < c; ++ch) {
                      T acc = 0;
                      for (std::size_t i = 0; i < plane; ++i) {
                        const T gv = go[ch * plane + i];
                        acc += gv * st[i];
                        if (gs) (*gs)[i] += gv * ct[ch];
                      }
                      if (gc) (*gc)[ch] += acc;
                    }
                  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return piecewise1<T>(
      "relu", x, [](T v) { return v > T(0) ? 1u : 0u; },
      [](T v, std::uint8_t b) { return b ? v : T(0); }, [](T, std::uint8_t b) { return b ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return elementwise1<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> log(Var<T> x) {
  return elementwise1<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> abs(Var<T> x) {
  // branches: 0 negative, 1 zero, 2 positive
  return piecewise1<T>(
      "abs", x, [](T v) { return v > T(0) ? 2u : (v < T(0) ? 0u : 1u); },
      [](T v, std::uint8_t b) { return b == 2 ? v : (b == 0 ? -v : T(0)); },
      [](T, std::uint8_t b) { return b == 2 ? T(1) : (b == 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> square(Var<T> x) {
  return elementwise1<T>("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Var<T> clamp(Var<T> x, double lo, double hi) {
  const T l = static_cast<T>(lo), h = static_cast<T>(hi);
  // branches: 0 below, 1 inside (bounds included), 2 above
  return piecewise1<T>(
      "clamp", x, [l, h](T v) { return v < l ? 0u : (v > h ? 2u : 1u); },
      [l, h](T v, std::uint8_t b) { return b == 1 ? v : (b == 0 ? l : h); },
      [](T, std::uint8_t b) { return b == 1 ? T(1) : T(0); });
}

template <typename T>
Var<T> softmax(Var<T> x, int axis) {
  const Tensor<T>& xv = x.value();
  axis = normalize_axis(axis, xv.rank(), "softmax");
  const AxisSplit s = split_at_axis(xv.shape(), axis);
  Tensor<T> out(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = xv[base];
      for (std::size_t k = 1; k < s.len; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double total = 0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const T e = std::exp(xv[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) {
        T& v = out[base + k * s.inner];
        v = static_cast<T>(v / total);
      }
    }
  }
  const std::size_t out_id = x.graph->size();
  return x.graph->record("softmax", std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& y = gr.value(Var<T>{&gr, out_id});
    Tensor<T>& gx = gr.grad(x);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        T dotp = 0;
        for (std::size_t k = 0; k < s.len; ++k) dotp += go[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t idx = base + k * s.inner;
          gx[idx] += y[idx] * (go[idx] - dotp);
        }
      }
    }
  });
}

template <typename T>
Var<T> global_pool(Var<T> x, Pool kind) {
  require_rank(x, 3, "global_pool");
  const int c = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{c, 1, 1});
  std::vector<std::size_t> arg(c, 0);
  for (int ch = 0; ch < c; ++ch) {
    const T* p = xv.ptr() + ch * plane;
    if (kind == Pool::kMax) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < plane; ++i) {
        if (p[i] > p[best]) best = i;
      }
      best = x.graph->branch(static_cast<std::uint32_t>(best));
      arg[ch] = best;
      out[ch] = p[best];
    } else {
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out[ch] = s / static_cast<T>(plane);
    }
  }
  return x.graph->record(kind == Pool::kMax ? "global_max_pool" : "global_avg_pool", std::move(out),
                         {x}, [=](Graph<T>& gr, const Tensor<T>& go) {
                           Tensor<T>& gx = gr.grad(x);
                           for (int ch = 0; ch < c; ++ch) {
                             if (kind == Pool::kMax) {
                               gx[ch * plane + arg[ch]] += go[ch];
                             } else {
                               const T share = go[ch] / static_cast<T>(plane);
                               for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += share;
                             }
                           }
                         });
}

template <typename T>
Var<T> channel_pool(Var<T> x, Pool kind) {
  require_rank(x, 3, "channel_pool");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{1, h, w});
  std::vector<int> arg(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    if (kind == Pool::kMax) {
      int best = 0;
      for (int ch = 1; ch < c; ++ch) {
        if (xv[ch * plane + i] > xv[best * plane + i]) best = ch;
      }
      best = static_cast<int>(x.graph->branch(static_cast<std::uint32_t>(best)));
      arg[i] = best;
      out[i] = xv[best * plane + i];
    } else {
      T s = 0;
      for (int ch = 0; ch < c; ++ch) s += xv[ch * plane + i];
      out[i] = s / static_cast<T>(c);
    }
  }
  return x.graph->record(kind == Pool::kMax ? "channel_max_pool" : "channel_avg_pool",
                         std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& go) {
                           Tensor<T>& gx = gr.grad(x);
                           for (std::size_t i = 0; i < plane; ++i) {
                             if (kind == Pool::kMax) {
                               gx[arg[i] * plane + i] += go[i];
                             } else {
                               const T share = go[i] / static_cast<T>(c);
                               for (int ch = 0; ch < c; ++ch) gx[ch * plane + i] += share;
                             }
                           }
                         });
}

template <typename T>
Var<T> concat(Var<T> a, Var<T> b, int axis) {
  Graph<T>& g = graph_of(a, b, "concat");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size()) throw DimensionError("concat: rank mismatch");
  axis = normalize_axis(axis, static_cast<int>(sa.size()), "concat");
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (static_cast<int>(i) != axis && sa[i] != sb[i]) {
      throw DimensionError("concat: shapes " + shape_str(sa) + " and " + shape_str(sb) +
                           " differ off the concat axis");
    }
  }
  Shape so = sa;
  so[axis] += sb[axis];
  const AxisSplit pa = split_at_axis(sa, axis);
  const AxisSplit pb = split_at_axis(sb, axis);
  const std::size_t ca = pa.len * pa.inner, cb = pb.len * pb.inner;
  Tensor<T> out(so);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t o = 0; o < pa.outer; ++o) {
    std::copy_n(av.ptr() + o * ca, ca, out.ptr() + o * (ca + cb));
    std::copy_n(bv.ptr() + o * cb, cb, out.ptr() + o * (ca + cb) + ca);
  }
  return g.record("concat", std::move(out), {a, b}, [=](Graph<T>& gr, const Tensor<T>& go) {
    Tensor<T>* ga = gr.needs_grad(a) ? &gr.grad(a) : nullptr;
    Tensor<T>* gb = gr.needs_grad(b) ? &gr.grad(b) : nullptr;
    for (std::size_t o = 0; o < pa.outer; ++o) {
      const T* src = go.ptr() + o * (ca + cb);
      if (ga) {
        for (std::size_t i = 0; i < ca; ++i) (*ga)[o * ca + i] += src[i];
      }
      if (gb) {
        for (std::size_t i = 0; i < cb; ++i) (*gb)[o * cb + i] += src[ca + i];
      }
    }
  });
}

template <typename T>
Var<T> slice(Var<T> x, int axis, int begin, int end) {
  const Shape& sx = x.shape();
  axis = normalize_axis(axis, static_cast<int>(sx.size()), "slice");
  if (begin < 0 || end > sx[axis] || begin >= end) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for extent " + std::to_string(sx[axis]));
  }
  Shape so = sx;
  so[axis] = end - begin;
  const AxisSplit p = split_at_axis(sx, axis);
  const std::size_t chunk = static_cast<std::size_t>(end - begin) * p.inner;
  const std::size_t offset = static_cast<std::size_t>(begin) * p.inner;
  const std::size_t row = p.len * p.inner;
  Tensor<T> out(so);
  const Tensor<T>& xv = x.value();
  for (std::size_t o = 0; o < p.outer; ++o) std::copy_n(xv.ptr() + o * row + offset, chunk, out.ptr() + o * chunk);
  return x.graph->record("slice", std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& go) {
    Tensor<T>& gx = gr.grad(x);
    for (std::size_t o = 0; o < p.outer; ++o) {
      for (std::size_t i = 0; i < chunk; ++i) gx[o * row + offset + i] += go[o * chunk + i];
    }
  });
}

template <typename T>
std::pair<Var<T>, Var<T>> split(Var<T> x, int axis, int at) {
  axis = normalize_axis(axis, x.value().rank(), "split");
  return {slice(x, axis, 0, at), slice(x, axis, at, x.dim(axis))};
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.graph->record("reshape", std::move(out), {x}, [x](Graph<T>& gr, const Tensor<T>& go) {
    Tensor<T>& gx = gr.grad(x);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
}

template <typename T>
Var<T> cell(Var<T> x, int row, int col) {
  require_rank(x, 3, "cell");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (row < 0 || row >= h || col < 0 || col >= w) throw DimensionError("cell: index out of range");
  Tensor<T> out(Shape{c});
  for (int ch = 0; ch < c; ++ch) out[ch] = x.value().at(ch, row, col);
  return x.graph->record("cell", std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& go) {
    Tensor<T>& gx = gr.grad(x);
    for (int ch = 0; ch < c; ++ch) gx.at(ch, row, col) += go[ch];
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().data()) s += v;
  return x.graph->record("sum", Tensor<T>::scalar(s), {x}, [x](Graph<T>& gr, const Tensor<T>& go) {
    Tensor<T>& gx = gr.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[0];
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  T s = 0;
  for (T v : x.value().data()) s += v;
  return x.graph->record("mean", Tensor<T>::scalar(s / static_cast<T>(n)), {x},
                         [x, n](Graph<T>& gr, const Tensor<T>& go) {
                           Tensor<T>& gx = gr.grad(x);
                           const T share = go[0] / static_cast<T>(n);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += share;
                         });
}

#define BFT_INSTANTIATE_OPS(T)                                                  \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                    \
  template Var<T> linear<T>(Var<T>, Var<T>, OptVar<T>);             \
  template Var<T> conv2d<T>(Var<T>, Var<T>, OptVar<T>, int, int);   \
  template Var<T> xcorr_depthwise<T>(Var<T>, Var<T>);                           \
  template Var<T> group_sum<T>(Var<T>, int);                                    \
  template Var<T> add<T>(Var<T>, Var<T>);                                       \
  template Var<T> sub<T>(Var<T>, Var<T>);                                       \
  template Var<T> mul<T>(Var<T>, Var<T>);                                       \
  template Var<T> div<T>(Var<T>, Var<T>);                                       \
  template Var<T> minimum<T>(Var<T>, Var<T>);                                   \
  template Var<T> maximum<T>(Var<T>, Var<T>);                                   \
  template Var<T> scale<T>(Var<T>, double);                                     \
  template Var<T> add_scalar<T>(Var<T>, double);                                \
  template Var<T> scale_by<T>(Var<T>, Var<T>);                                  \
  template Var<T> add_scaled<T>(Var<T>, Var<T>, Var<T>);                        \
  template Var<T> scale_rows<T>(Var<T>, Var<T>);                                \
  template Var<T> channel_spatial_product<T>(Var<T>, Var<T>);                   \
  template Var<T> relu<T>(Var<T>);                                              \
  template Var<T> sigmoid<T>(Var<T>);                                           \
  template Var<T> log<T>(Var<T>);                                               \
  template Var<T> abs<T>(Var<T>);                                               \
  template Var<T> square<T>(Var<T>);                                            \
  template Var<T> clamp<T>(Var<T>, double, double);                             \
  template Var<T> softmax<T>(Var<T>, int);                                      \
  template Var<T> global_pool<T>(Var<T>, Pool);                                 \
  template Var<T> channel_pool<T>(Var<T>, Pool);                                \
  template Var<T> concat<T>(Var<T>, Var<T>, int);                               \
  template Var<T> slice<T>(Var<T>, int, int, int);                              \
  template std::pair<Var<T>, Var<T>> split<T>(Var<T>, int, int);                \
  template Var<T> reshape<T>(Var<T>, Shape);                                    \
  template Var<T> cell<T>(Var<T>, int, int);                                    \
  template Var<T> sum<T>(Var<T>);                                               \
  template Var<T> mean<T>(Var<T>);

BFT_INSTANTIATE_OPS(float)
BFT_INSTANTIATE_OPS(double)

}  // namespace bft
