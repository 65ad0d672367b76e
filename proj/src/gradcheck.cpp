#include "bft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bft/rng.hpp"

namespace bft {
namespace {

struct Evaluation {
  double value;
  std::uint64_t branches;
};

// `frozen` replays the branch choices of the unperturbed point
Evaluation evaluate(const LossBuilder& loss, const ParamStore<double>& params,
                    const std::vector<std::uint32_t>* frozen) {
  Graph<double> g(&params);
  if (frozen) {
    g.replay_branches(*frozen);
  } else {
    g.record_branches();
  }
  const Var<double> out = loss(g);
  return {out.value().item(), g.branch_signature()};
}

std::vector<std::size_t> pick_indices(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit == 0 || limit >= n) return idx;
  // partial Fisher-Yates
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradcheckReport gradcheck(const LossBuilder& loss, ParamStore<double>& params,
                          const GradcheckOptions& options) {
  GradcheckReport report;
  if (options.eps < 1e-4 || options.eps > 1e-2) {
    throw ContractError("gradcheck: eps must lie in [1e-4, 1e-2]");
  }
  Evaluation base{};
  std::vector<std::uint32_t> base_log;
  {
    Graph<double> g(&params);
    g.record_branches();
    const Var<double> out = loss(g);
    base = {out.value().item(), g.branch_signature()};
    base_log = g.branch_log();
    backward(out, g, params);
  }
  Rng rng(options.seed);
  const double eps = options.eps;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& entry = params[p];
    const auto picks = pick_indices(entry.value.size(), options.max_entries_per_param, rng);
    for (std::size_t i : picks) {
      const double original = entry.value[i];
      const double analytic = entry.grad[i];
      auto at = [&](double delta, const std::vector<std::uint32_t>* frozen) {
        entry.value[i] = original + delta;
        const Evaluation e = evaluate(loss, params, frozen);
        entry.value[i] = original;
        return e;
      };
      double numeric = 0;
      try {
        Evaluation f_plus = at(eps, nullptr), f_minus = at(-eps, nullptr);
        if (f_plus.branches != base.branches || f_minus.branches != base.branches) {
          f_plus = at(eps, &base_log);
          f_minus = at(-eps, &base_log);
          ++report.frozen;
        }
        numeric = (f_plus.value - f_minus.value) / (2.0 * eps);
      } catch (const NumericError& e) {
        entry.value[i] = original;
        report.failure = "NaN/Inf while perturbing " + entry.name + "[" + std::to_string(i) +
                         "]: " + e.what();
        return report;
      }
      if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
        report.failure = "non-finite gradient at " + entry.name + "[" + std::to_string(i) + "]";
        return report;
      }
      ++report.checked;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel >= report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = entry.name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  if (report.max_rel_err > options.tol) {
    report.failure = "max relative error " + std::to_string(report.max_rel_err) + " at " +
                     report.worst_param + "[" + std::to_string(report.worst_index) + "]";
    return report;
  }
  report.passed = true;
  return report;
}

}  // namespace bft
