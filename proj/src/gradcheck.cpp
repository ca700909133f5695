#include "mods/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mods {

namespace {

double evaluate(const ScalarFn& f) {
  Tape tape;
  Var out = f(tape);
  if (out.value().size() != 1) throw DimensionError("grad_check: function must return a 1x1 value");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw NumericalError("grad_check: function evaluated to a non-finite value");
  return v;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

GradReport grad_check(const ScalarFn& f, std::span<Parameter* const> params, const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw ConfigError("grad_check: step must be positive");
  GradReport report;
  report.tol = opts.tol;

  std::vector<Tensor> analytic;
  {
    Tape tape;
    for (Parameter* p : params) tape.param(*p);
    Var out = f(tape);
    if (out.value().size() != 1) throw DimensionError("grad_check: function must return a 1x1 value");
    if (!std::isfinite(out.value()[0])) throw NumericalError("grad_check: function evaluated to a non-finite value");
    tape.backward(out);
    for (Parameter* p : params) analytic.push_back(tape.param_grad(*p));
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& a = analytic[k];
    if (!opts.corrupt_parameter.empty() && p.name == opts.corrupt_parameter) a[0] += 1.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + opts.step;
      const double up = evaluate(f);
      p.value[i] = saved - opts.step;
      const double down = evaluate(f);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      worst = std::max(worst, relative_error(a[i], numeric, opts.denom_floor));
    }
    report.per_parameter[p.name] = worst;
    if (worst >= report.max_rel_error) {
      report.max_rel_error = worst;
      report.worst_parameter = p.name;
    }
  }
  report.passed = report.max_rel_error < opts.tol;
  return report;
}

}  // namespace mods
