#include "mrt/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mrt/error.hpp"

namespace mrt {

namespace {

double evaluate(const LossFn& loss) {
  Tape tape;
  const double v = loss(tape).value()[0];
  if (!std::isfinite(v)) throw NumericalError("grad_check: loss is not finite (" + std::to_string(v) + ")");
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, const ParamSet& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    if (!std::isfinite(l.value()[0])) throw NumericalError("grad_check: loss is not finite");
    tape.backward(l);
  }

  GradCheckReport report;
  for (auto* p : params) {
    GradCheckEntry entry{p->name};
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + options.step;
      const double up = evaluate(loss);
      p->value[i] = orig - options.step;
      const double down = evaluate(loss);
      p->value[i] = orig;

      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p->grad[i];
      const double abs_err = std::abs(numeric - analytic);
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), options.denominator_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    if (entry.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = entry.name;
    }
    report.entries.push_back(std::move(entry));
  }
  params.zero_grad();
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace mrt
