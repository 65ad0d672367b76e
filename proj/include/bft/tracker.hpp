#pragma once

#include <filesystem>
#include <vector>

#include "bft/dataset.hpp"
#include "bft/model.hpp"

namespace bft {

struct TrackerOptions {
  bool use_window = true;
  double window_gamma = 0.3;
  /// Blend factor for extent updates; 1 takes the decoded extents as-is.
  double size_lr = 0.05;
};

/// One-pass tracker. Template features are computed once in init().
class Tracker {
 public:
  Tracker(const ModelLayout& model, const ParamStore<float>& params, TrackerOptions options);

  void init(const Image& frame, const BBox& box);
  BBox update(const Image& frame);

  const BBox& box() const { return box_; }
  /// Template-crop side s_z of the current box.
  double crop_scale() const { return template_side(box_); }
  /// Side of the search crop taken around the current box.
  double search_side() const;

 private:
  const ModelLayout& model_;
  const ParamStore<float>& params_;
  TrackerOptions options_;
  Tensor<float> z3_, z4_;
  Tensor<float> window_;
  BBox box_;
  bool ready_ = false;
};

/// Runs the tracker over `frames` from the first ground-truth box; the first
/// output echoes it.
std::vector<BBox> track_frames(const ModelLayout& model, const ParamStore<float>& params,
                               const std::vector<Image>& frames, const BBox& init,
                               const TrackerOptions& options);
std::vector<BBox> track_sequence(const ModelLayout& model, const ParamStore<float>& params,
                                 const SequenceDataset& seq, const TrackerOptions& options);

}  // namespace bft
