#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>

#include "mods/autodiff.hpp"

namespace mods {

struct GradReport {
  double max_rel_error = 0.0;
  // Parameter name → max elementwise relative error.
  std::map<std::string, double> per_parameter;
  std::string worst_parameter;
  double tol = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // |a - n| / max(|a|, |n|, floor); keeps near-zero gradients from
  // turning round-off into large relative errors.
  double denom_floor = 1e-3;
  // Fault injection: adds 1.0 to the analytic gradient of this parameter.
  std::string corrupt_parameter;
};

// Builds a scalar (1×1) computation on the given tape.
using ScalarFn = std::function<Var(Tape&)>;

double relative_error(double analytic, double numeric, double floor);

/// Compares tape gradients of `f` with central differences for every
/// element of every parameter.
GradReport grad_check(const ScalarFn& f, std::span<Parameter* const> params, const GradCheckOptions& opts = {});

}  // namespace mods
