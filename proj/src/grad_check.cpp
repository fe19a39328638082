#include "densitydist/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace densitydist {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckDenominatorFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::size_t> pick_coordinates(std::size_t total, const GradCheckOptions& options) {
  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates && *options.max_coordinates < total) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(*options.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }
  return coords;
}

void record(GradCheckReport& report, std::size_t coord, double analytic, double numeric) {
  const double err = relative_error(analytic, numeric);
  ++report.coordinates_checked;
  if (err > report.max_relative_error || report.coordinates_checked == 1) {
    report.max_relative_error = std::max(report.max_relative_error, err);
    report.worst_coordinate = coord;
    report.analytic = analytic;
    report.numeric = numeric;
  }
}

double eval_graph(const GraphFunction& f, const Tensor& x) {
  Graph g;
  return f(g, g.leaf(x)).value().item();
}

}  // namespace

GradCheckReport grad_check(const GraphFunction& f, const Tensor& input, const GradCheckOptions& options) {
  Tensor analytic;
  {
    Graph g;
    Var x = g.leaf(input);
    Var out = f(g, x);
    g.backward(out);
    analytic = x.grad();
  }
  GradCheckReport report;
  Tensor probe = input;
  for (std::size_t i : pick_coordinates(input.size(), options)) {
    const double original = probe[i];
    probe[i] = original + options.step;
    const double plus = eval_graph(f, probe);
    probe[i] = original - options.step;
    const double minus = eval_graph(f, probe);
    probe[i] = original;
    record(report, i, analytic[i], (plus - minus) / (2.0 * options.step));
  }
  return report;
}

GradCheckReport grad_check(const AnalyticFunction& f, const Tensor& input, const GradCheckOptions& options) {
  const Tensor analytic = f(input).second;
  require_same_shape(analytic, input, "grad_check");
  GradCheckReport report;
  Tensor probe = input;
  for (std::size_t i : pick_coordinates(input.size(), options)) {
    const double original = probe[i];
    probe[i] = original + options.step;
    const double plus = f(probe).first;
    probe[i] = original - options.step;
    const double minus = f(probe).first;
    probe[i] = original;
    record(report, i, analytic[i], (plus - minus) / (2.0 * options.step));
  }
  return report;
}

GradCheckReport grad_check_parameters(ParameterSet& params, const std::function<Var(Graph&)>& loss,
                                      const GradCheckOptions& options) {
  params.zero_grad();
  {
    Graph g;
    Var out = loss(g);
    g.backward(out);
    g.accumulate_parameter_grads();
  }
  // Flatten (parameter, offset) pairs so sampling covers all parameters.
  std::vector<std::pair<std::size_t, std::size_t>> flat;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (options.include_parameter && !options.include_parameter(params.items()[p].name)) continue;
    for (std::size_t k = 0; k < params.items()[p].value.size(); ++k) flat.emplace_back(p, k);
  }

  auto eval = [&] {
    Graph g;
    return loss(g).value().item();
  };

  GradCheckReport report;
  for (std::size_t i : pick_coordinates(flat.size(), options)) {
    auto [p, k] = flat[i];
    Parameter& param = params.items()[p];
    const double original = param.value[k];
    param.value[k] = original + options.step;
    const double plus = eval();
    param.value[k] = original - options.step;
    const double minus = eval();
    param.value[k] = original;
    record(report, i, param.grad[k], (plus - minus) / (2.0 * options.step));
  }
  params.zero_grad();
  return report;
}

}  // namespace densitydist
