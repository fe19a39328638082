#include <gtest/gtest.h>

#include <cmath>

#include "densitydist/optimizer.hpp"

using namespace densitydist;

namespace {

// Scalar reference Adam.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g, const AdamSettings& s) {
    ++t;
    m = s.beta1 * m + (1 - s.beta1) * g;
    v = s.beta2 * v + (1 - s.beta2) * g * g;
    const double mh = m / (1 - std::pow(s.beta1, t));
    const double vh = v / (1 - std::pow(s.beta2, t));
    return x - s.lr * mh / (std::sqrt(vh) + s.eps);
  }
};

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet p;
  p.add("w", Tensor::from_rows({{1.0, -2.0}}));
  AdamState st;
  for (int i = 0; i < 3; ++i) optimizer_step(p, st, {});
  EXPECT_EQ(p.at("w").value, Tensor::from_rows({{1.0, -2.0}}));
  EXPECT_EQ(st.step, 3u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradient) {
  ParameterSet p;
  p.add("w", Tensor::from_rows({{0.0, 0.0, 0.0}}));
  p.at("w").grad = Tensor::from_rows({{3.0, -0.01, 1e-3}});
  AdamState st;
  AdamSettings s;
  s.lr = 0.1;
  optimizer_step(p, st, s);
  EXPECT_NEAR(p.at("w").value[0], -0.1, 1e-6);
  EXPECT_NEAR(p.at("w").value[1], 0.1, 1e-5);
  EXPECT_NEAR(p.at("w").value[2], -0.1, 1e-4);
}

TEST(Adam, MatchesScalarReference) {
  ParameterSet p;
  p.add("a", Tensor::from_rows({{0.5, -1.5}}));
  p.add("b", Tensor::scalar(2.0));
  AdamSettings s{0.05, 0.8, 0.99, 1e-6};
  AdamState st;
  ScalarAdam ref[3];
  double x[3] = {0.5, -1.5, 2.0};
  for (int it = 0; it < 25; ++it) {
    // gradient of sum(x^2) + sin(x)
    double g[3];
    for (int i = 0; i < 3; ++i) g[i] = 2 * x[i] + std::cos(x[i]);
    p.at("a").grad = Tensor::from_rows({{g[0], g[1]}});
    p.at("b").grad = Tensor::scalar(g[2]);
    optimizer_step(p, st, s);
    for (int i = 0; i < 3; ++i) x[i] = ref[i].step(x[i], g[i], s);
    EXPECT_NEAR(p.at("a").value[0], x[0], 1e-12);
    EXPECT_NEAR(p.at("a").value[1], x[1], 1e-12);
    EXPECT_NEAR(p.at("b").value[0], x[2], 1e-12);
  }
}

TEST(Adam, IdenticalRunsAreBitwiseIdentical) {
  auto run = [] {
    ParameterSet p;
    p.add("w", Tensor::from_rows({{0.3, 0.7}}));
    AdamState st;
    for (int i = 0; i < 10; ++i) {
      p.at("w").grad = Tensor::from_rows({{std::sin(i * 1.0), std::cos(i * 0.3)}});
      optimizer_step(p, st, {});
    }
    return std::pair{p.at("w").value, st.m[0]};
  };
  EXPECT_EQ(run(), run());
}
