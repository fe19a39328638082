#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "densitydist/autodiff.hpp"

namespace densitydist {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  // Location and values at the worst coordinate.
  std::size_t worst_coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline constexpr double kGradCheckDenominatorFloor = 1e-8;

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Function built on the tape: receives the graph and a leaf holding the
/// input, returns a scalar.
using GraphFunction = std::function<Var(Graph&, Var)>;

/// Function with a closed-form gradient: returns (value, gradient).
using AnalyticFunction = std::function<std::pair<double, Tensor>(const Tensor&)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Check at most this many coordinates, sampled without replacement.
  std::optional<std::size_t> max_coordinates;
  std::uint64_t seed = 0;
  /// grad_check_parameters only: parameters to sample from (all if empty).
  std::function<bool(const std::string&)> include_parameter;
};

/// Central differences (f(x+h) - f(x-h)) / 2h per coordinate against the
/// reverse-mode gradient. Returns the worst relative error.
GradCheckReport grad_check(const GraphFunction& f, const Tensor& input, const GradCheckOptions& options = {});
GradCheckReport grad_check(const AnalyticFunction& f, const Tensor& input, const GradCheckOptions& options = {});

/// Same check with respect to every parameter of `params` (perturbed in
/// place and restored). `loss` builds the scalar on a fresh graph.
GradCheckReport grad_check_parameters(ParameterSet& params, const std::function<Var(Graph&)>& loss,
                                      const GradCheckOptions& options = {});

}  // namespace densitydist
