#include <gtest/gtest.h>

#include "densitydist/autodiff.hpp"
#include "densitydist/ops.hpp"

using namespace densitydist;

TEST(Tensor, MatrixAccessAndTranspose) {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
  Tensor tt = t.transposed();
  EXPECT_EQ(tt.shape(), (Shape{3, 2}));
  EXPECT_EQ(tt(2, 1), 6.0);
  EXPECT_EQ(tt.transposed(), t);
}

TEST(Tensor, AxpyAndShapeErrors) {
  Tensor a = Tensor::matrix(2, 2, 1.0);
  a.axpy(2.0, Tensor::matrix(2, 2, 3.0));
  EXPECT_EQ(a(0, 1), 7.0);
  EXPECT_THROW(a.axpy(1.0, Tensor::matrix(2, 3)), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW((void)Tensor::matrix(2, 2).item(), std::invalid_argument);
}

TEST(Autodiff, ProductRuleOnSum) {
  Graph g;
  Var a = g.leaf(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var b = g.leaf(Tensor::from_rows({{5, 6}, {7, 8}}));
  Var f = ops::sum(ops::mul(a, b));
  g.backward(f);
  EXPECT_EQ(f.value().item(), 5 + 12 + 21 + 32);
  EXPECT_EQ(a.grad(), b.value());
  EXPECT_EQ(b.grad(), a.value());
}

TEST(Autodiff, FanOutAccumulates) {
  Graph g;
  Var a = g.leaf(Tensor::scalar(3.0));
  Var f = ops::add(ops::mul(a, a), a);  // a^2 + a
  g.backward(f);
  EXPECT_DOUBLE_EQ(a.grad().item(), 7.0);
}

TEST(Autodiff, BackwardTwiceGivesSameGradients) {
  Graph g;
  Var a = g.leaf(Tensor::from_rows({{0.5, -1.0}}));
  Var f = ops::sum(ops::gelu(a));
  g.backward(f);
  const Tensor first = a.grad();
  g.backward(f);
  EXPECT_EQ(a.grad(), first);
}

TEST(Autodiff, BackwardRequiresScalar) {
  Graph g;
  Var a = g.leaf(Tensor::matrix(2, 2, 1.0));
  EXPECT_THROW(g.backward(a), std::invalid_argument);
}

TEST(Autodiff, ConstantsGetNoGradient) {
  Graph g;
  Var c = g.constant(Tensor::scalar(2.0));
  Var a = g.leaf(Tensor::scalar(3.0));
  g.backward(ops::mul(a, c));
  EXPECT_FALSE(g.requires_grad(c.id()));
  EXPECT_DOUBLE_EQ(a.grad().item(), 2.0);
}

TEST(Autodiff, ParameterGradientsAccumulateAcrossGraphs) {
  ParameterSet params;
  Parameter& w = params.add("w", Tensor::scalar(2.0));
  for (int i = 0; i < 3; ++i) {
    Graph g;
    Var x = g.param(w);
    g.backward(ops::mul(x, x));
    g.accumulate_parameter_grads();
  }
  EXPECT_DOUBLE_EQ(params.at("w").grad.item(), 3 * 4.0);
  params.zero_grad();
  EXPECT_DOUBLE_EQ(params.at("w").grad.item(), 0.0);
}

TEST(Autodiff, ParameterSetKeepsInsertionOrder) {
  ParameterSet params;
  params.add("b", Tensor::matrix(1, 2));
  params.add("a", Tensor::matrix(3, 1));
  EXPECT_EQ(params.items()[0].name, "b");
  EXPECT_EQ(params.scalar_count(), 5u);
  EXPECT_THROW(params.add("a", Tensor::scalar(0)), std::invalid_argument);
  EXPECT_THROW(params.at("zzz"), std::invalid_argument);
}
