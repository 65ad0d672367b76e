#include "bft/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bft {

namespace {
constexpr double kProbClamp = 1e-6;
constexpr double kAreaFloor = 1e-9;
constexpr double kClsPrior = -2.19;  // sigmoid^-1(0.1)
}  // namespace

void HeadsConfig::validate() const {
  if (depth < 1 || hidden < 1) throw DimensionError("heads: depth and hidden must be positive");
  if (window_gamma < 0.0 || window_gamma > 1.0) {
    throw DimensionError("heads: window_gamma must lie in [0,1]");
  }
}

template <typename T>
PredictionValues values_of(const Prediction<T>& p) {
  return {p.cls.value().template cast<float>(), p.offset.value().template cast<float>(),
          p.size.value().template cast<float>()};
}

TrainTarget make_target(const BBox& box, int search_size, int stride) {
  if (search_size % stride != 0) throw DimensionError("target: search size not a multiple of stride");
  const int g = search_size / stride;
  TrainTarget t;
  t.heatmap = Tensor<float>(Shape{1, g, g});
  t.offset = Tensor<float>(Shape{2, g, g});
  t.size = Tensor<float>(Shape{2, g, g});
  t.mask = Tensor<float>(Shape{1, g, g});
  const double cx = box.cx(), cy = box.cy();
  t.col = std::clamp(static_cast<int>(std::floor(cx / stride)), 0, g - 1);
  t.row = std::clamp(static_cast<int>(std::floor(cy / stride)), 0, g - 1);
  const int radius =
      std::max(1, static_cast<int>(std::lround(std::min(box.w, box.h) / (2.0 * stride))));
  const double sigma = (2.0 * radius + 1.0) / 6.0;
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const double d2 = (i - t.row) * (i - t.row) + (j - t.col) * (j - t.col);
      t.heatmap.at(0, i, j) = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
    }
  }
  t.heatmap.at(0, t.row, t.col) = 1.0f;
  t.mask.at(0, t.row, t.col) = 1.0f;
  t.offset.at(0, t.row, t.col) = static_cast<float>(cx / search_size - (t.col + 0.5) / g);
  t.offset.at(1, t.row, t.col) = static_cast<float>(cy / search_size - (t.row + 0.5) / g);
  t.size.at(0, t.row, t.col) = static_cast<float>(box.w / search_size);
  t.size.at(1, t.row, t.col) = static_cast<float>(box.h / search_size);
  return t;
}

template <typename T>
HeadsLayout declare_heads(ParamBuilder<T>& pb, int d, const HeadsConfig& cfg) {
  cfg.validate();
  HeadsLayout h;
  h.cfg = cfg;
  auto stack = [&](const std::string& name, std::vector<ConvSpec>& convs) {
    int in = d;
    for (int i = 0; i < cfg.depth; ++i) {
      convs.push_back(declare_conv(pb, "heads." + name + std::to_string(i), in, cfg.hidden, 3, 1));
      in = cfg.hidden;
    }
  };
  stack("cls", h.cls);
  stack("offset", h.offset);
  stack("size", h.size);
  h.cls_out = declare_conv(pb, "heads.cls_out", cfg.hidden, 1, 1, 1, Init::kZero, true, kClsPrior);
  h.offset_out = declare_conv(pb, "heads.offset_out", cfg.hidden, 2, 1, 1, Init::kZero);
  h.size_out = declare_conv(pb, "heads.size_out", cfg.hidden, 2, 1, 1, Init::kZero);
  return h;
}

template <typename T>
Prediction<T> predict(Graph<T>& g, const HeadsLayout& h, Var<T> m3, Var<T> m4) {
  if (m3.shape() != m4.shape()) {
    throw DimensionError("predict: maps differ " + shape_str(m3.shape()) + " vs " +
                         shape_str(m4.shape()));
  }
  auto run = [&](const std::vector<ConvSpec>& convs, const ConvSpec& out, Var<T> x) {
    for (const auto& c : convs) x = relu(apply(g, c, x));
    return apply(g, out, x);
  };
  return {run(h.cls, h.cls_out, m4), run(h.offset, h.offset_out, m3), run(h.size, h.size_out, m3)};
}

Tensor<float> cosine_window(int h, int w) {
  Tensor<float> win(Shape{h, w});
  auto profile = [](int i, int n) {
    const double half = 0.5 * n;
    return 0.5 + 0.5 * std::cos(std::numbers::pi * (i - std::floor(half)) / half);
  };
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) win.at(i, j) = static_cast<float>(profile(i, h) * profile(j, w));
  return win;
}

BBox decode(const PredictionValues& pred, int search_size, int stride, const Tensor<float>* window,
            double gamma) {
  const int h = pred.cls.dim(1), w = pred.cls.dim(2);
  if (h * stride != search_size || w * stride != search_size) {
    throw DimensionError("decode: grid " + shape_str(pred.cls.shape()) + " does not cover search " +
                         std::to_string(search_size) + " at stride " + std::to_string(stride));
  }
  if (window && (window->dim(0) != h || window->dim(1) != w)) {
    throw DimensionError("decode: window shape mismatch");
  }
  int best_i = 0, best_j = 0;
  double best = -1.0;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double s = 1.0 / (1.0 + std::exp(-static_cast<double>(pred.cls.at(0, i, j))));
      if (window) s = (1.0 - gamma) * s + gamma * window->at(i, j);
      if (s > best) {
        best = s;
        best_i = i;
        best_j = j;
      }
    }
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double cx = ((best_j + 0.5) / w + pred.offset.at(0, best_i, best_j)) * search_size;
  const double cy = ((best_i + 0.5) / h + pred.offset.at(1, best_i, best_j)) * search_size;
  const double bw = sig(pred.size.at(0, best_i, best_j)) * search_size;
  const double bh = sig(pred.size.at(1, best_i, best_j)) * search_size;
  return BBox::from_center(cx, cy, bw, bh);
}

namespace {

template <typename T>
Var<T> constant_of(Graph<T>& g, const Tensor<float>& t) {
  return g.constant(t.template cast<T>());
}

template <typename T>
Var<T> constant_vec(Graph<T>& g, std::vector<double> v) {
  Tensor<T> t(Shape{static_cast<int>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v[i]);
  return g.constant(std::move(t));
}

template <typename T>
Var<T> one_minus(Var<T> x) {
  return add_scalar(scale(x, -1.0), 1.0);
}

template <typename T>
Var<T> product_of_pair(Var<T> v) {
  auto [a, b] = split(v, 0, 1);
  return mul(a, b);
}

void require_positive(const TrainTarget& t) {
  double n = 0;
  for (float m : t.mask.data()) n += m;
  if (n <= 0) throw ContractError("loss: target has no positive cell");
}

}  // namespace

template <typename T>
Var<T> focal_loss(Graph<T>& g, Var<T> cls_logits, const TrainTarget& target) {
  require_positive(target);
  if (cls_logits.shape() != target.heatmap.shape()) {
    throw DimensionError("focal: logits " + shape_str(cls_logits.shape()) + " vs target " +
                         shape_str(target.heatmap.shape()));
  }
  Tensor<float> neg_w(target.heatmap.shape());
  double npos = 0;
  for (std::size_t i = 0; i < neg_w.size(); ++i) {
    npos += target.mask[i];
    neg_w[i] = target.mask[i] > 0 ? 0.0f : static_cast<float>(std::pow(1.0 - target.heatmap[i], 4));
  }
  Var<T> p = clamp(sigmoid(cls_logits), kProbClamp, 1.0 - kProbClamp);
  Var<T> pos = mul(constant_of(g, target.mask), mul(square(one_minus(p)), log(p)));
  Var<T> neg = mul(constant_of(g, neg_w), mul(square(p), log(one_minus(p))));
  return scale(sum(add(pos, neg)), -1.0 / npos);
}

template <typename T>
Var<T> l1_loss(Graph<T>& g, const Prediction<T>& pred, const TrainTarget& target) {
  require_positive(target);
  const int r = target.row, c = target.col;
  Var<T> off = cell(pred.offset, r, c);
  Var<T> size = sigmoid(cell(pred.size, r, c));
  Var<T> off_gt = constant_vec<T>(g, {target.offset.at(0, r, c), target.offset.at(1, r, c)});
  Var<T> size_gt = constant_vec<T>(g, {target.size.at(0, r, c), target.size.at(1, r, c)});
  return scale(add(sum(abs(sub(off, off_gt))), sum(abs(sub(size, size_gt)))), 0.25);
}

template <typename T>
Var<T> giou_loss(Graph<T>& g, const Prediction<T>& pred, const TrainTarget& target) {
  require_positive(target);
  const int r = target.row, c = target.col;
  const int h = pred.cls.dim(1), w = pred.cls.dim(2);
  Var<T> anchor = constant_vec<T>(g, {(c + 0.5) / w, (r + 0.5) / h});
  Var<T> center = add(cell(pred.offset, r, c), anchor);
  Var<T> size = sigmoid(cell(pred.size, r, c));
  Var<T> half = scale(size, 0.5);
  Var<T> lo = sub(center, half), hi = add(center, half);

  const double gcx = (c + 0.5) / w + target.offset.at(0, r, c);
  const double gcy = (r + 0.5) / h + target.offset.at(1, r, c);
  const double gw = target.size.at(0, r, c), gh = target.size.at(1, r, c);
  Var<T> lo_gt = constant_vec<T>(g, {gcx - 0.5 * gw, gcy - 0.5 * gh});
  Var<T> hi_gt = constant_vec<T>(g, {gcx + 0.5 * gw, gcy + 0.5 * gh});

  Var<T> inter = product_of_pair(relu(sub(minimum(hi, hi_gt), maximum(lo, lo_gt))));
  Var<T> area_p = clamp(product_of_pair(size), kAreaFloor, 1e30);
  const double area_g = std::max(gw * gh, kAreaFloor);
  Var<T> uni = clamp(sub(add_scalar(area_p, area_g), inter), kAreaFloor, 1e30);
  Var<T> enclosing =
      clamp(product_of_pair(sub(maximum(hi, hi_gt), minimum(lo, lo_gt))), kAreaFloor, 1e30);
  Var<T> giou = sub(div(inter, uni), div(sub(enclosing, uni), enclosing));
  return one_minus(giou);
}

double combine_losses(double focal, double l1, double giou, const LossConfig& cfg) {
  return focal + cfg.lambda1 * l1 + cfg.lambda2 * giou;
}

template <typename T>
LossTerms<T> total_loss(Graph<T>& g, const Prediction<T>& pred, const TrainTarget& target,
                        const LossConfig& cfg) {
  LossTerms<T> t;
  t.focal = focal_loss(g, pred.cls, target);
  t.l1 = l1_loss(g, pred, target);
  t.giou = giou_loss(g, pred, target);
  t.total = add(add(t.focal, scale(t.l1, cfg.lambda1)), scale(t.giou, cfg.lambda2));
  return t;
}

#define BFT_INSTANTIATE_HEADS(T)                                                                \
  template PredictionValues values_of<T>(const Prediction<T>&);                                 \
  template HeadsLayout declare_heads<T>(ParamBuilder<T>&, int, const HeadsConfig&);             \
  template Prediction<T> predict<T>(Graph<T>&, const HeadsLayout&, Var<T>, Var<T>);             \
  template Var<T> focal_loss<T>(Graph<T>&, Var<T>, const TrainTarget&);                         \
  template Var<T> l1_loss<T>(Graph<T>&, const Prediction<T>&, const TrainTarget&);              \
  template Var<T> giou_loss<T>(Graph<T>&, const Prediction<T>&, const TrainTarget&);            \
  template LossTerms<T> total_loss<T>(Graph<T>&, const Prediction<T>&, const TrainTarget&,      \
                                      const LossConfig&);

BFT_INSTANTIATE_HEADS(float)
BFT_INSTANTIATE_HEADS(double)

}  // namespace bft
