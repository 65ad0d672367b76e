#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "bft/graph.hpp"

namespace bft {

struct GradcheckOptions {
  double eps = 1e-4;
  double tol = 1e-4;
  /// Entries checked per parameter tensor; 0 checks every entry. When
  /// sampling, indices are drawn with `seed`.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 1;
};

struct GradcheckReport {
  bool passed = false;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  /// Entries whose perturbation crossed a kink of a relu/max/clamp; these are
  /// differenced with the branch choices of the unperturbed point replayed.
  std::size_t frozen = 0;
  std::string failure;  // empty when passed
};

/// Builds the scalar loss on a fresh graph bound to the given store.
using LossBuilder = std::function<Var<double>(Graph<double>&)>;

/// Central differences (f(p + eps e_i) - f(p - eps e_i)) / (2 eps) against the
/// reverse-mode gradient, in 64-bit. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-6).
GradcheckReport gradcheck(const LossBuilder& loss, ParamStore<double>& params,
                          const GradcheckOptions& options);

}  // namespace bft
