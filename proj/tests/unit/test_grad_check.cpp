#include <gtest/gtest.h>

#include <cmath>

#include "densitydist/grad_check.hpp"
#include "densitydist/ops.hpp"

using namespace densitydist;

TEST(GradCheck, RelativeErrorUsesFloor) {
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
}

TEST(GradCheck, AcceptsCorrectAnalyticGradient) {
  AnalyticFunction cube = [](const Tensor& x) {
    double v = 0.0;
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      v += x[i] * x[i] * x[i];
      g[i] = 3 * x[i] * x[i];
    }
    return std::pair{v, g};
  };
  const auto r = grad_check(cube, Tensor::from_rows({{0.3, -1.2, 2.0}}));
  EXPECT_LE(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.coordinates_checked, 3u);
}

TEST(GradCheck, FlagsWrongGradient) {
  AnalyticFunction wrong = [](const Tensor& x) {
    double v = 0.0;
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      v += std::sin(x[i]);
      g[i] = std::cos(x[i]) * 1.01;
    }
    return std::pair{v, g};
  };
  EXPECT_GT(grad_check(wrong, Tensor::from_rows({{0.1, 0.7}})).max_relative_error, 5e-3);
}

TEST(GradCheck, GraphFunctionAndSampling) {
  GraphFunction f = [](Graph&, Var x) { return ops::sum(ops::gelu(x)); };
  GradCheckOptions opts;
  opts.max_coordinates = 4;
  const auto r = grad_check(f, Tensor::matrix(3, 3, 0.4), opts);
  EXPECT_EQ(r.coordinates_checked, 4u);
  EXPECT_LE(r.max_relative_error, 1e-8);
}

TEST(GradCheck, ParametersAreRestored) {
  ParameterSet params;
  params.add("w", Tensor::from_rows({{0.5, -0.25}}));
  const Tensor before = params.at("w").value;
  const auto r = grad_check_parameters(params, [&](Graph& g) {
    Var w = g.param(params.at("w"));
    return ops::sum(ops::mul(w, w));
  });
  EXPECT_LE(r.max_relative_error, 1e-8);
  EXPECT_EQ(params.at("w").value, before);
}

TEST(GradCheck, ParameterFilter) {
  ParameterSet params;
  params.add("a", Tensor::scalar(1.0));
  params.add("b", Tensor::matrix(1, 3, 1.0));
  GradCheckOptions opts;
  opts.include_parameter = [](const std::string& n) { return n == "b"; };
  const auto r = grad_check_parameters(
      params,
      [&](Graph& g) { return ops::add(ops::sum(g.param(params.at("a"))), ops::sum(g.param(params.at("b")))); },
      opts);
  EXPECT_EQ(r.coordinates_checked, 3u);
}
