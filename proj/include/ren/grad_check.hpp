#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "ren/graph.hpp"

namespace ren {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor for the relative error, so exactly-zero gradients
  /// are compared absolutely.
  double floor = 1e-6;
  /// Entries probed per parameter tensor; 0 probes every entry.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  bool training = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Builds the scalar loss over the caller's parameters in a fresh graph.
using LossBuilder = std::function<Var<double>(Graph<double>&)>;

/// Compares analytic gradients against central differences
/// (L(p+h) - L(p-h)) / 2h for every parameter in `params`.
/// Relative error per entry is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const LossBuilder& build, ParameterSet<double>& params,
                           const GradCheckOptions& options = {});

}  // namespace ren
