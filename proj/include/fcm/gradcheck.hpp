#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fcm/autodiff.hpp"
#include "fcm/params.hpp"

namespace fcm {

// Builds a scalar on the tape from the bound parameters. Must be
// deterministic: no dropout, no RNG draws.
using TapedObjective = std::function<ad::Var(ad::Tape&, const BoundParams&)>;

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double tape_grad = 0.0;
  double numeric_grad = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  std::string worst_param;
  double step = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
// turning finite-difference round-off into huge relative errors.
double relative_error(double a, double b, double floor = 1e-6);

// Compares tape gradients with central differences (f(p+h) - f(p-h)) / 2h
// for every scalar of every trainable parameter. Throws NumericError if two plain
// evaluations of f disagree bitwise.
GradCheckReport finite_diff_check(const TapedObjective& f, ParamStore& params, double step, double tolerance);

}  // namespace fcm
