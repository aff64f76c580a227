#include "mrt/optim.hpp"

#include <cmath>

#include "mrt/error.hpp"

namespace mrt {

void adam_step(const ParamSet& params, AdamState& state) {
  for (const auto* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericalError("non-finite gradient in parameter " + p->name + " at optimizer step " +
                           std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (auto* p : params) {
    auto [it, inserted] = state.moments.try_emplace(p->name);
    AdamMoments& mom = it->second;
    if (inserted || mom.m.shape() != p->value.shape()) {
      mom.m = Tensor(p->value.shape());
      mom.v = Tensor(p->value.shape());
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      mom.m[i] = state.beta1 * mom.m[i] + (1.0 - state.beta1) * g;
      mom.v[i] = state.beta2 * mom.v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      p->value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    p->zero_grad();
  }
}

}  // namespace mrt
