#include "bft/backbone.hpp"

namespace bft {

BackboneConfig BackboneConfig::paper() {
  BackboneConfig c;
  c.d = 192;
  c.stage_channels = {64, 128, 256, 384};
  c.strides = {2, 2, 2, 2};
  c.template_size = 128;
  c.search_size = 256;
  return c;
}

int BackboneConfig::total_stride() const {
  if (strides.size() != 4) throw DimensionError("backbone: expected 4 strides");
  return strides[0] * strides[1] * strides[2] * 2;
}

int BackboneConfig::corr_channels() const {
  switch (corr) {
    case CorrMode::kGrouped: return corr_groups;
    default: return d;
  }
}

void BackboneConfig::validate() const {
  if (d <= 0) throw DimensionError("backbone: d must be positive");
  if (stage_channels.size() != 4 || strides.size() != 4) {
    throw DimensionError("backbone: expected 4 stages");
  }
  for (int c : stage_channels)
    if (c <= 0) throw DimensionError("backbone: stage channels must be positive");
  for (int s : strides)
    if (s != 1 && s != 2) throw DimensionError("backbone: strides must be 1 or 2");
  if (strides[3] != 2) throw DimensionError("backbone: stage 4 must downsample by 2 to align");
  const int s = total_stride();
  if (template_size % s != 0 || search_size % s != 0) {
    throw DimensionError("backbone: template and search sizes must be multiples of stride " +
                         std::to_string(s));
  }
  if (template_size > search_size) throw DimensionError("backbone: template larger than search");
  if (corr == CorrMode::kGrouped && (corr_groups <= 0 || d % corr_groups != 0)) {
    throw DimensionError("backbone: corr_groups must divide d");
  }
}

template <typename T>
BackboneLayout declare_backbone(ParamBuilder<T>& pb, const BackboneConfig& cfg) {
  cfg.validate();
  BackboneLayout b;
  b.cfg = cfg;
  int in = 3;
  for (int s = 0; s < 4; ++s) {
    const int c = cfg.stage_channels[s];
    const std::string name = "backbone.s" + std::to_string(s + 1);
    auto first = declare_conv(pb, name + ".c1", in, c, 3, cfg.strides[s]);
    auto second = declare_conv(pb, name + ".c2", c, c, 3, 1);
    b.stages.emplace_back(first, second);
    in = c;
  }
  const int c3 = cfg.stage_channels[2], c4 = cfg.stage_channels[3];
  b.align3 = declare_conv(pb, "backbone.align3", c3, c3, 3, 2);
  b.align4 = declare_conv(pb, "backbone.align4", c4, c4, 1, 1);
  b.proj3 = declare_conv(pb, "backbone.proj3", c3, cfg.d, 1, 1, Init::kXavierNormal);
  b.proj4 = declare_conv(pb, "backbone.proj4", c4, cfg.d, 1, 1, Init::kXavierNormal);
  const int corr_out = cfg.corr_channels();
  b.mix3 = declare_conv(pb, "corr.c3", corr_out, cfg.d, 1, 1, Init::kXavierNormal);
  b.mix4 = declare_conv(pb, "corr.c4", corr_out, cfg.d, 1, 1, Init::kXavierNormal);
  return b;
}

template <typename T>
FeaturePair<T> extract(Graph<T>& g, const BackboneLayout& b, Var<T> image) {
  if (image.value().rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("extract: expected image [3,H,W], got " + shape_str(image.shape()));
  }
  const int s = b.cfg.total_stride();
  if (image.dim(1) < s || image.dim(2) < s) {
    throw DimensionError("extract: image " + shape_str(image.shape()) + " smaller than stride " +
                         std::to_string(s));
  }
  Var<T> h = image;
  Var<T> s3;
  for (std::size_t i = 0; i < b.stages.size(); ++i) {
    h = relu(apply(g, b.stages[i].first, h));
    h = relu(apply(g, b.stages[i].second, h));
    if (i == 2) s3 = h;
  }
  FeaturePair<T> out;
  out.f3 = apply(g, b.proj3, relu(apply(g, b.align3, s3)));
  out.f4 = apply(g, b.proj4, relu(apply(g, b.align4, h)));
  if (out.f3.shape() != out.f4.shape()) {
    throw DimensionError("extract: stage maps misaligned " + shape_str(out.f3.shape()) + " vs " +
                         shape_str(out.f4.shape()));
  }
  return out;
}

namespace {

template <typename T>
Var<T> correlate_one(Graph<T>& g, const BackboneLayout& b, const ConvSpec& mix, Var<T> z, Var<T> x) {
  if (z.dim(0) != x.dim(0)) {
    throw DimensionError("correlate: channel mismatch " + shape_str(z.shape()) + " vs " +
                         shape_str(x.shape()));
  }
  // mean over the template window
  Var<T> r = scale(xcorr_depthwise(x, z), 1.0 / (z.dim(1) * z.dim(2)));
  if (b.cfg.corr == CorrMode::kGrouped) r = group_sum(r, b.cfg.corr_groups);
  return apply(g, mix, r);
}

}  // namespace

template <typename T>
std::pair<Var<T>, Var<T>> correlate(Graph<T>& g, const BackboneLayout& b, const FeaturePair<T>& z,
                                    const FeaturePair<T>& x) {
  return {correlate_one(g, b, b.mix3, z.f3, x.f3), correlate_one(g, b, b.mix4, z.f4, x.f4)};
}

#define BFT_INSTANTIATE_BACKBONE(T)                                                              \
  template BackboneLayout declare_backbone<T>(ParamBuilder<T>&, const BackboneConfig&);         \
  template FeaturePair<T> extract<T>(Graph<T>&, const BackboneLayout&, Var<T>);                  \
  template std::pair<Var<T>, Var<T>> correlate<T>(Graph<T>&, const BackboneLayout&,              \
                                                  const FeaturePair<T>&, const FeaturePair<T>&);

BFT_INSTANTIATE_BACKBONE(float)
BFT_INSTANTIATE_BACKBONE(double)

}  // namespace bft
