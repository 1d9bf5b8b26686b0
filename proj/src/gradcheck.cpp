#include "fcm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "fcm/errors.hpp"

namespace fcm {
namespace {

double evaluate(const TapedObjective& f, const ParamStore& params) {
  ad::Tape tape;
  BoundParams bound(tape, params);
  const ad::Var out = f(tape, bound);
  if (out.value().size() != 1) throw DimensionError("gradient check objective must be scalar");
  return out.value()[0];
}

}  // namespace

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheckReport finite_diff_check(const TapedObjective& f, ParamStore& params, double step, double tolerance) {
  const double first = evaluate(f, params);
  const double second = evaluate(f, params);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw NumericError("gradient check invalid: objective is not deterministic");
  }

  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    BoundParams bound(tape, params);
    const ad::Var out = f(tape, bound);
    analytic = bound.gradients(tape.backward(out));
  }

  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].trainable) continue;
    ParamCheck check{params[p].name};
    Tensor& value = params[p].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double up = evaluate(f, params);
      value[i] = saved - step;
      const double down = evaluate(f, params);
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      double err = relative_error(analytic[p][i], numeric);
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      if (err > check.max_rel_error || i == 0) {
        check.max_rel_error = err;
        check.worst_index = i;
        check.tape_grad = analytic[p][i];
        check.numeric_grad = numeric;
      }
    }
    if (check.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = check.max_rel_error;
      report.worst_param = check.name;
    }
    report.params.push_back(std::move(check));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace fcm
