#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bft/gradcheck.hpp"

namespace bft {

/// Finite-difference verification of one module family:
///   tensor  composite of the op vocabulary
///   tape    TAPE encode (additive and multiplicative)
///   fusion  bidirectional fusion with TAPE
///   heads   prediction heads and the full loss
///   model   end-to-end loss on a tiny model
///   all     every scope above; reports the worst error
GradcheckReport gradcheck_scope(const std::string& scope, std::uint64_t seed, double tol);
const std::vector<std::string>& gradcheck_scopes();

struct SelftestLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Dataset-free invariant checks across modules.
std::vector<SelftestLine> run_selftest(std::uint64_t seed);

}  // namespace bft
