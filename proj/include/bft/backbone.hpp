#pragma once

// Stand-in four-stage CNN. Stage 3 gets an extra 3x3 stride-2 conv and
// stage 4 a 1x1 conv so both emit maps of equal spatial size; each is then
// projected to d channels. correlate() slides template features over search
// features channel by channel and mixes the response with a 1x1 conv.

#include <utility>
#include <vector>

#include "bft/layers.hpp"

namespace bft {

/// kDepthwise: template map slid over the search map channel by channel.
/// kGrouped: depthwise responses summed within channel groups.
enum class CorrMode { kDepthwise, kGrouped };

struct BackboneConfig {
  int d = 32;
  std::vector<int> stage_channels{8, 16, 32, 32};
  std::vector<int> strides{2, 2, 1, 2};
  int template_size = 64;
  int search_size = 128;
  CorrMode corr = CorrMode::kDepthwise;
  int corr_groups = 8;  // used by kGrouped

  static BackboneConfig desk() { return {}; }
  static BackboneConfig paper();

  /// Stride of both aligned stage maps relative to the input.
  int total_stride() const;
  int map_size(int input) const { return input / total_stride(); }
  /// Channels entering the mixing conv.
  int corr_channels() const;
  void validate() const;
};

struct BackboneLayout {
  BackboneConfig cfg;
  std::vector<std::pair<ConvSpec, ConvSpec>> stages;
  ConvSpec align3, align4, proj3, proj4;
  ConvSpec mix3, mix4;  // C_3, C_4 applied after correlation
};

template <typename T>
struct FeaturePair {
  Var<T> f3;
  Var<T> f4;
};

template <typename T>
BackboneLayout declare_backbone(ParamBuilder<T>& pb, const BackboneConfig& cfg);

/// image [3,H,W] -> stage-3 and stage-4 maps, both [d, H/s, W/s].
template <typename T>
FeaturePair<T> extract(Graph<T>& g, const BackboneLayout& b, Var<T> image);

/// Pixel-wise cross-correlation of template features z over search features x.
template <typename T>
std::pair<Var<T>, Var<T>> correlate(Graph<T>& g, const BackboneLayout& b, const FeaturePair<T>& z,
                                    const FeaturePair<T>& x);

}  // namespace bft
