#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bft/backbone.hpp"
#include "bft/fusion.hpp"
#include "bft/heads.hpp"

namespace bft {

/// Ablation variants:
///   baseline  no fusion, every head reads M4
///   ffm       forward stream only: cls reads M4'', regression reads M3
///   bfm       backward stream only: cls reads M4, regression reads M3''
///   bidir     both streams, no TAPE
///   full      both streams with TAPE
enum class Variant { kBaseline, kFfm, kBfm, kBidir, kFull };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);
const std::vector<Variant>& all_variants();

struct ModelConfig {
  BackboneConfig backbone;
  TapeConfig tape;
  FusionConfig fusion;
  HeadsConfig heads;
  LossConfig loss;
  Variant variant = Variant::kFull;

  static ModelConfig desk() { return {}; }
  static ModelConfig paper();
  /// Small enough for exhaustive finite differences in 64-bit.
  static ModelConfig gradcheck_tiny();

  int stride() const { return backbone.total_stride(); }
  int grid() const { return backbone.map_size(backbone.search_size); }
  bool uses_tape() const { return variant == Variant::kFull && tape.enabled; }
  void validate() const;
};

struct ModelLayout {
  ModelConfig cfg;
  BackboneLayout backbone;
  std::optional<FusionLayout> fusion;
  HeadsLayout heads;
};

template <typename T>
ModelLayout declare_model(ParamBuilder<T>& pb, const ModelConfig& cfg);

template <typename T>
struct ModelOutput {
  Prediction<T> pred;
  std::vector<Var<T>> context_weights;
};

template <typename T>
FeaturePair<T> template_features(Graph<T>& g, const ModelLayout& m, Var<T> template_image);

/// extract -> correlate -> fuse -> predict against cached template features.
template <typename T>
ModelOutput<T> forward_search(Graph<T>& g, const ModelLayout& m, const FeaturePair<T>& z,
                              Var<T> search_image);

template <typename T>
ModelOutput<T> forward(Graph<T>& g, const ModelLayout& m, Var<T> template_image,
                       Var<T> search_image);

/// Fresh parameters for `cfg`.
ParamStore<float> init_params(const ModelConfig& cfg, std::uint64_t seed, ModelLayout* layout);
/// Binds an existing store to `cfg`, verifying every name and shape.
ModelLayout bind_params(const ModelConfig& cfg, ParamStore<float>& store);

}  // namespace bft
