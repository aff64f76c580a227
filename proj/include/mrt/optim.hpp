#pragma once

#include <map>
#include <string>

#include "mrt/params.hpp"

namespace mrt {

struct AdamMoments {
  Tensor m;
  Tensor v;
};

/// Adam hyperparameters plus per-parameter moments keyed by parameter name.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, AdamMoments> moments;
};

/// One bias-corrected Adam update over `params`, then zeroes their grads.
/// Throws NumericalError naming the first parameter with a non-finite grad;
/// nothing is modified in that case.
void adam_step(const ParamSet& params, AdamState& state);

}  // namespace mrt
