#include "bft/ablate.hpp"

#include <algorithm>
#include <cstdio>

#include "bft/eval.hpp"
#include "bft/parallel.hpp"
#include "bft/synth.hpp"

namespace bft {

std::pair<double, double> evaluate_model(const ModelLayout& model, const ParamStore<float>& params,
                                         const std::vector<LoadedSequence>& eval,
                                         const TrackerOptions& options) {
  std::vector<SequenceScore> scores;
  for (const auto& seq : eval) {
    const auto boxes = track_frames(model, params, seq.frames, seq.gt.front(), options);
    scores.push_back(score_sequence(seq.name, seq.tags, boxes, seq.gt));
  }
  return overall(scores);
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<LoadedSequence>& train_data,
                                      const std::vector<LoadedSequence>& eval, int workers) {
  const auto& variants = all_variants();
  std::vector<AblationRow> rows(variants.size());
  const int outer = std::max(1, std::min<int>(workers, static_cast<int>(variants.size())));
  const int inner = std::max(1, workers / outer);
  parallel_for(static_cast<int>(variants.size()), outer, [&](int i) {
    RunConfig cfg = base;
    cfg.model.variant = variants[i];
    cfg.train.threads = inner;
    ModelLayout layout;
    ParamStore<float> params = init_params(cfg.model, cfg.seed, &layout);
    train(layout, params, train_data, cfg.train);
    const auto [s, p] = evaluate_model(layout, params, eval, cfg.tracker);
    rows[i] = {variants[i], s, p};
  });
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::string out = "variant,success,precision\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f\n", variant_name(r.variant).c_str(), r.success, r.precision);
    out += buf;
  }
  return out;
}

std::vector<LoadedSequence> heldout_sequences(std::uint64_t seed) {
  std::vector<LoadedSequence> out;
  for (const auto& cfg : heldout_suite(seed)) {
    RenderedSequence r = render(cfg);
    out.push_back({r.name, std::move(r.frames), std::move(r.gt), std::move(r.tags)});
  }
  return out;
}

}  // namespace bft
