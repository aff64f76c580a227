#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mrt/params.hpp"

namespace mrt {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Lower bound on the relative-error denominator so entries whose true
  /// gradient is ~0 are judged on absolute error instead.
  double denominator_floor = 1e-6;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst_param;
  bool passed = false;
};

/// Builds a scalar loss on a fresh tape.
using LossFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `loss` against central finite
/// differences for every scalar in `params`. Parameter values are restored
/// and grads zeroed before returning. Throws NumericalError if the loss is
/// not finite at any evaluated point.
GradCheckReport grad_check(const LossFn& loss, const ParamSet& params,
                           const GradCheckOptions& options = {});

}  // namespace mrt
