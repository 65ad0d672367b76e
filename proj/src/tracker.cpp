#include "bft/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bft {

Tracker::Tracker(const ModelLayout& model, const ParamStore<float>& params, TrackerOptions options)
    : model_(model), params_(params), options_(options) {
  const int g = model.cfg.grid();
  window_ = cosine_window(g, g);
}

double Tracker::search_side() const {
  const auto& b = model_.cfg.backbone;
  return crop_scale() * b.search_size / b.template_size;
}

void Tracker::init(const Image& frame, const BBox& box) {
  if (!(box.w > 1.0) || !(box.h > 1.0)) {
    throw std::invalid_argument("tracker init: degenerate box " + format_box(box));
  }
  BBox b = box;
  const double cx = std::clamp(b.cx(), 0.0, static_cast<double>(frame.width));
  const double cy = std::clamp(b.cy(), 0.0, static_cast<double>(frame.height));
  b = BBox::from_center(cx, cy, b.w, b.h);
  const auto& cfg = model_.cfg.backbone;
  Crop z = crop_resize(frame, b.cx(), b.cy(), template_side(b), cfg.template_size);
  Graph<float> g(&params_);
  FeaturePair<float> f = template_features(g, model_, g.constant(std::move(z.pixels)));
  z3_ = f.f3.value();
  z4_ = f.f4.value();
  box_ = b;
  ready_ = true;
}

BBox Tracker::update(const Image& frame) {
  if (!ready_) throw std::logic_error("tracker update before init");
  const auto& cfg = model_.cfg.backbone;
  const int s = cfg.search_size;
  const double side = search_side();
  Crop x = crop_resize(frame, box_.cx(), box_.cy(), side, s);
  Graph<float> g(&params_);
  g.set_check_finite(false);
  FeaturePair<float> z{g.constant(z3_), g.constant(z4_)};
  ModelOutput<float> out = forward_search(g, model_, z, g.constant(std::move(x.pixels)));
  const BBox local = decode(values_of(out.pred), s, model_.cfg.stride(),
                            options_.use_window ? &window_ : nullptr, options_.window_gamma);
  const double k = side / s;
  double cx = box_.cx() + (local.cx() - 0.5 * s) * k;
  double cy = box_.cy() + (local.cy() - 0.5 * s) * k;
  double w = box_.w + options_.size_lr * (local.w * k - box_.w);
  double h = box_.h + options_.size_lr * (local.h * k - box_.h);
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) || !std::isfinite(h)) {
    return box_;
  }
  cx = std::clamp(cx, 0.0, static_cast<double>(frame.width));
  cy = std::clamp(cy, 0.0, static_cast<double>(frame.height));
  w = std::clamp(w, 4.0, static_cast<double>(frame.width));
  h = std::clamp(h, 4.0, static_cast<double>(frame.height));
  box_ = BBox::from_center(cx, cy, w, h);
  return box_;
}

std::vector<BBox> track_frames(const ModelLayout& model, const ParamStore<float>& params,
                               const std::vector<Image>& frames, const BBox& init,
                               const TrackerOptions& options) {
  if (frames.empty()) throw std::invalid_argument("track: no frames");
  Tracker t(model, params, options);
  t.init(frames[0], init);
  std::vector<BBox> out{init};
  for (std::size_t i = 1; i < frames.size(); ++i) out.push_back(t.update(frames[i]));
  return out;
}

std::vector<BBox> track_sequence(const ModelLayout& model, const ParamStore<float>& params,
                                 const SequenceDataset& seq, const TrackerOptions& options) {
  if (seq.frames.empty() || seq.gt.empty()) throw std::invalid_argument("track: empty sequence");
  Tracker t(model, params, options);
  t.init(read_ppm(seq.frames[0]), seq.gt[0]);
  std::vector<BBox> out{seq.gt[0]};
  for (std::size_t i = 1; i < seq.frames.size(); ++i) out.push_back(t.update(read_ppm(seq.frames[i])));
  return out;
}

}  // namespace bft
