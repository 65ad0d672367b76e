#include "bft/model.hpp"

#include <stdexcept>

namespace bft {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kFfm: return "ffm";
    case Variant::kBfm: return "bfm";
    case Variant::kBidir: return "bidir";
    case Variant::kFull: return "full";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : all_variants())
    if (variant_name(v) == s) return v;
  throw std::invalid_argument("unknown variant '" + s + "' (expected baseline|ffm|bfm|bidir|full)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::kBaseline, Variant::kFfm, Variant::kBfm,
                                         Variant::kBidir, Variant::kFull};
  return v;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.backbone = BackboneConfig::paper();
  c.heads.hidden = 192;
  return c;
}

ModelConfig ModelConfig::gradcheck_tiny() {
  ModelConfig c;
  c.backbone.d = 8;
  c.backbone.stage_channels = {4, 4, 8, 8};
  c.backbone.strides = {2, 2, 1, 2};
  c.backbone.template_size = 16;
  c.backbone.search_size = 32;
  c.tape.kernel = 3;
  c.heads.hidden = 4;
  return c;
}

void ModelConfig::validate() const {
  backbone.validate();
  tape.validate(backbone.d);
  fusion.validate();
  heads.validate();
}

template <typename T>
ModelLayout declare_model(ParamBuilder<T>& pb, const ModelConfig& cfg) {
  cfg.validate();
  ModelLayout m;
  m.cfg = cfg;
  m.backbone = declare_backbone(pb, cfg.backbone);
  if (cfg.variant != Variant::kBaseline) {
    const bool fwd = cfg.variant != Variant::kBfm;
    const bool bwd = cfg.variant != Variant::kFfm;
    m.fusion = declare_fusion(pb, cfg.backbone.d, cfg.fusion, fwd, bwd,
                              cfg.uses_tape() ? &cfg.tape : nullptr);
  }
  m.heads = declare_heads(pb, cfg.backbone.d, cfg.heads);
  return m;
}

template <typename T>
FeaturePair<T> template_features(Graph<T>& g, const ModelLayout& m, Var<T> template_image) {
  return extract(g, m.backbone, template_image);
}

template <typename T>
ModelOutput<T> forward_search(Graph<T>& g, const ModelLayout& m, const FeaturePair<T>& z,
                              Var<T> search_image) {
  FeaturePair<T> x = extract(g, m.backbone, search_image);
  auto [m3, m4] = correlate(g, m.backbone, z, x);
  ModelOutput<T> out;
  if (!m.fusion) {
    out.pred = predict(g, m.heads, m4, m4);
    return out;
  }
  FusedPair<T> f = fuse(g, *m.fusion, m3, m4);
  out.context_weights = std::move(f.context_weights);
  out.pred = predict(g, m.heads, f.m3, f.m4);
  return out;
}

template <typename T>
ModelOutput<T> forward(Graph<T>& g, const ModelLayout& m, Var<T> template_image,
                       Var<T> search_image) {
  return forward_search(g, m, template_features(g, m, template_image), search_image);
}

ParamStore<float> init_params(const ModelConfig& cfg, std::uint64_t seed, ModelLayout* layout) {
  ParamStore<float> store;
  Rng rng(seed);
  ParamBuilder<float> pb(store, &rng);
  ModelLayout m = declare_model(pb, cfg);
  if (layout) *layout = std::move(m);
  return store;
}

ModelLayout bind_params(const ModelConfig& cfg, ParamStore<float>& store) {
  ParamBuilder<float> pb(store, nullptr);
  ModelLayout m = declare_model(pb, cfg);
  std::size_t used = 0;
  ParamStore<float> probe;
  Rng rng(0);
  ParamBuilder<float> probe_pb(probe, &rng);
  declare_model(probe_pb, cfg);
  used = probe.size();
  if (used != store.size()) {
    throw ContractError("checkpoint holds " + std::to_string(store.size()) +
                        " parameters, model expects " + std::to_string(used));
  }
  return m;
}

#define BFT_INSTANTIATE_MODEL(T)                                                                  \
  template ModelLayout declare_model<T>(ParamBuilder<T>&, const ModelConfig&);                    \
  template FeaturePair<T> template_features<T>(Graph<T>&, const ModelLayout&, Var<T>);            \
  template ModelOutput<T> forward_search<T>(Graph<T>&, const ModelLayout&, const FeaturePair<T>&, \
                                            Var<T>);                                              \
  template ModelOutput<T> forward<T>(Graph<T>&, const ModelLayout&, Var<T>, Var<T>);

BFT_INSTANTIATE_MODEL(float)
BFT_INSTANTIATE_MODEL(double)

}  // namespace bft
