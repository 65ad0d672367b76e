#pragma once

// Anchor-free state prediction on a (h, w) response grid over a square
// search crop of side S. Cell (i, j) predicts
//   center = ((j + 0.5)/w + offset_x, (i + 0.5)/h + offset_y) * S
//   extent = sigmoid(size) * S
// Training: L = L_focal + lambda1 * L_l1 + lambda2 * L_giou at the single
// positive cell.

#include <vector>

#include "bft/bbox.hpp"
#include "bft/layers.hpp"

namespace bft {

struct HeadsConfig {
  int depth = 3;
  int hidden = 16;
  double window_gamma = 0.3;

  void validate() const;
};

struct LossConfig {
  double lambda1 = 2.0;
  double lambda2 = 5.0;
};

struct HeadsLayout {
  HeadsConfig cfg;
  std::vector<ConvSpec> cls, offset, size;
  ConvSpec cls_out, offset_out, size_out;
};

template <typename T>
struct Prediction {
  Var<T> cls;     // [1,h,w] logits
  Var<T> offset;  // [2,h,w]
  Var<T> size;    // [2,h,w] logits
};

struct PredictionValues {
  Tensor<float> cls, offset, size;
};

template <typename T>
PredictionValues values_of(const Prediction<T>& p);

struct TrainTarget {
  Tensor<float> heatmap;  // [1,h,w], exactly 1 at the positive cell
  Tensor<float> offset;   // [2,h,w], nonzero only at the positive cell
  Tensor<float> size;     // [2,h,w]
  Tensor<float> mask;     // [1,h,w]
  int row = 0;
  int col = 0;
};

/// Target for a box given in search-crop pixels.
TrainTarget make_target(const BBox& box, int search_size, int stride);

template <typename T>
HeadsLayout declare_heads(ParamBuilder<T>& pb, int d, const HeadsConfig& cfg);

/// cls reads the deep map, offset and size read the shallow map.
template <typename T>
Prediction<T> predict(Graph<T>& g, const HeadsLayout& h, Var<T> m3, Var<T> m4);

/// Raised-cosine window of shape [h,w] peaking at cell (h/2, w/2).
Tensor<float> cosine_window(int h, int w);

/// Box in search-crop pixels. With a window, scores are blended as
/// (1 - gamma) * sigmoid(cls) + gamma * window. Ties go to the smallest
/// row-major index.
BBox decode(const PredictionValues& pred, int search_size, int stride,
            const Tensor<float>* window = nullptr, double gamma = 0.0);

template <typename T>
Var<T> focal_loss(Graph<T>& g, Var<T> cls_logits, const TrainTarget& target);
template <typename T>
Var<T> l1_loss(Graph<T>& g, const Prediction<T>& pred, const TrainTarget& target);
template <typename T>
Var<T> giou_loss(Graph<T>& g, const Prediction<T>& pred, const TrainTarget& target);

template <typename T>
struct LossTerms {
  Var<T> total, focal, l1, giou;
};

double combine_losses(double focal, double l1, double giou, const LossConfig& cfg);

template <typename T>
LossTerms<T> total_loss(Graph<T>& g, const Prediction<T>& pred, const TrainTarget& target,
                        const LossConfig& cfg);

}  // namespace bft
