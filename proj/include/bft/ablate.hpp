#pragma once

#include <string>
#include <vector>

#include "bft/config.hpp"
#include "bft/dataset.hpp"

namespace bft {

struct AblationRow {
  Variant variant = Variant::kBaseline;
  double success = 0;    // mean Success AUC
  double precision = 0;  // mean P@20
};

/// Mean success/precision over `eval` for a trained model.
std::pair<double, double> evaluate_model(const ModelLayout& model, const ParamStore<float>& params,
                                         const std::vector<LoadedSequence>& eval,
                                         const TrackerOptions& options);

/// Trains and evaluates every variant with the same seed.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<LoadedSequence>& train_data,
                                      const std::vector<LoadedSequence>& eval, int workers);

/// "variant,success,precision" rows in baseline, ffm, bfm, bidir, full order.
std::string format_ablation(const std::vector<AblationRow>& rows);

/// In-memory rendering of the held-out sequences.
std::vector<LoadedSequence> heldout_sequences(std::uint64_t seed);

}  // namespace bft
