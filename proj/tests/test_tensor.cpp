// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "simbal/error.hpp"
#include "simbal/grad_check.hpp"
#include "simbal/ops.hpp"
#include "simbal/rng.hpp"

namespace {

using namespace simbal;

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor(std::move(shape), std::move(v));
}

// Fixed random weights so that every output element reaches the loss with a
// different coefficient.
Tensor weighted_sum(Graph& g, const Tensor& y) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.7 * std::sin(1.0 + 1.37 * i);
  return ops::sum(g, ops::mul(g, y, Tensor(y.shape(), w)));
}

void expect_grad_ok(const ScalarFn& f, std::vector<Tensor> params, double tol = 1e-6) {
  GradCheckOptions opts;
  opts.rel_tol = tol;
  const auto report = grad_check(f, params, opts);
  EXPECT_TRUE(report.passed()) << "max rel " << report.max_rel_error << " at " << report.worst;
  EXPECT_LT(report.max_rel_error, tol);
}

TEST(Tensor, ShapeAndValueInvariants) {
  Tensor t = Tensor::zeros({2, 3}, true);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.grad().size(), 6u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  t.set_requires_grad(false);
  EXPECT_TRUE(t.grad().empty());
}

TEST(Ops, MatmulIdentityCases) {
  Graph g(false);
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor eye({2, 2}, {1, 0, 0, 1});
  auto c = ops::matmul(g, a, eye);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{1, 2, 3, 4}));
  auto d = ops::matmul(g, eye, Tensor({2, 1}, {5, 7}));
  EXPECT_EQ(d.shape(), (Shape{2, 1}));
  EXPECT_EQ(d.at(0), 5.0);
  EXPECT_EQ(d.at(1), 7.0);
}

TEST(Ops, MatmulShapeErrorNamesBothShapes) {
  Graph g(false);
  try {
    ops::matmul(g, Tensor({2, 3}), Tensor({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,2]"), std::string::npos);
  }
}

TEST(Ops, MatmulGradientOfSumMatchesFiniteDifferences) {
  Tensor a = random_tensor({3, 4}, 1), b = random_tensor({4, 2}, 2);
  expect_grad_ok([&](Graph& g) { return ops::sum(g, ops::matmul(g, a, b)); }, {a, b});
}

TEST(Ops, SoftmaxExamples) {
  Graph g(false);
  auto half = ops::softmax(g, Tensor({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(half.at(0), 0.5);
  EXPECT_DOUBLE_EQ(half.at(1), 0.5);

  auto big = ops::softmax(g, Tensor({2}, {1000, 0}));
  EXPECT_NEAR(big.at(0), 1.0, 1e-15);
  EXPECT_LT(big.at(1), 1e-300);

  auto s = ops::softmax(g, Tensor({3}, {1, 2, 3}));
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s.at(i), std::exp(i + 1.0) / denom, 1e-12);
}

TEST(Ops, SoftmaxRowsSumToOneOnAnyAxis) {
  Graph g(false);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor x = random_tensor({3, 5, 4}, seed, -30, 30);
    for (int axis : {0, 1, 2}) {
      auto y = ops::softmax(g, x, axis);
      const std::size_t outer = axis == 0 ? 1 : (axis == 1 ? 3 : 15);
      const std::size_t extent = x.dim(axis);
      const std::size_t inner = x.size() / outer / extent;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          double total = 0.0;
          for (std::size_t e = 0; e < extent; ++e) {
            const double v = y.at((o * extent + e) * inner + i);
            EXPECT_GT(v, 0.0);
            total += v;
          }
          EXPECT_NEAR(total, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(Ops, ElementwiseExamples) {
  Graph g(false);
  EXPECT_EQ(ops::silu(g, Tensor({1}, {0.0})).at(0), 0.0);
  EXPECT_EQ(ops::mean(g, Tensor({3}, {2, 4, 6})).item(), 4.0);
  EXPECT_NEAR(ops::silu(g, Tensor({1}, {1.0})).at(0), 0.7310585786300049, 1e-15);
}

TEST(Ops, DomainAndFinitenessErrors) {
  Graph g(false);
  EXPECT_THROW(ops::log(g, Tensor({2}, {1.0, 0.0})), NumericError);
  EXPECT_THROW(ops::rsqrt(g, Tensor({1}, {-1.0})), NumericError);
  EXPECT_THROW(ops::exp(g, Tensor({1}, {1000.0})), NumericError);
  try {
    ops::softmax(g, Tensor({2}, {NAN, 0.0}));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("softmax"), std::string::npos);
  }
}

TEST(OpsGrad, Unary) {
  Tensor x = random_tensor({4, 5}, 3, -2, 2);
  Tensor pos = random_tensor({4, 5}, 4, 0.5, 3);
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::sigmoid(g, x)); }, {x});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::silu(g, x)); }, {x});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::exp(g, x)); }, {x});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::log(g, pos)); }, {pos});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::rsqrt(g, pos)); }, {pos});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::abs(g, x)); }, {x});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::scale(g, x, -3.5)); }, {x});
  expect_grad_ok([&](Graph& g) { return ops::mean(g, ops::mul(g, x, x)); }, {x});
}

TEST(OpsGrad, Binary) {
  Tensor a = random_tensor({3, 4}, 5), b = random_tensor({3, 4}, 6);
  Tensor bias = random_tensor({4}, 7), w = random_tensor({3}, 8);
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::add(g, a, b)); }, {a, b});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::sub(g, a, b)); }, {a, b});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::mul(g, a, b)); }, {a, b});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::add_bias(g, a, bias)); }, {a, bias});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::scale_rows(g, a, w)); }, {a, w});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::transpose(g, a)); }, {a});
}

TEST(OpsGrad, Reductions) {
  Tensor x = random_tensor({3, 6}, 9, -2, 2);
  Tensor p = random_tensor({3, 6}, 10, 0.1, 1.0);
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::softmax(g, x, -1)); }, {x});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::softmax(g, x, 0)); }, {x});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::normalize_rows(g, p)); }, {p});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::logsumexp_rows(g, x)); }, {x});
  const std::vector<std::uint32_t> targets{0, 5, 2};
  expect_grad_ok([&](Graph& g) { return ops::cross_entropy(g, x, targets); }, {x});
  expect_grad_ok([&](Graph& g) { return ops::sum(g, ops::mul(g, x, x)); }, {x});
}

TEST(OpsGrad, Structural) {
  Tensor a = random_tensor({2, 3}, 11), b = random_tensor({2, 2}, 12);
  Tensor table = random_tensor({5, 3}, 13);
  const std::vector<Tensor> parts{a, b};
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::concat(g, parts, 1)); }, {a, b});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::slice(g, a, 1, 1, 3)); }, {a});
  const std::vector<std::uint32_t> ids{4, 1, 4, 0};
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::embedding(g, table, ids)); }, {table});
  const std::vector<std::size_t> rows{2, 0, 2};
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::gather_rows(g, table, rows)); }, {table});
  const std::vector<std::size_t> flat{14, 3, 3};
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::take(g, table, flat)); }, {table});
  Tensor p0 = random_tensor({2, 3}, 14), p1 = random_tensor({1, 3}, 15);
  const std::vector<Tensor> scatter_parts{p0, p1};
  const std::vector<std::vector<std::size_t>> idx{{0, 3}, {3}};
  expect_grad_ok(
      [&](Graph& g) { return weighted_sum(g, ops::scatter_add_rows(g, 4, 3, scatter_parts, idx)); },
      {p0, p1});
}

TEST(OpsGrad, TransformerPieces) {
  Tensor x = random_tensor({6, 8}, 16, -2, 2), gain = random_tensor({8}, 17, 0.5, 1.5);
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::rms_norm(g, x, gain)); }, {x, gain});
  expect_grad_ok([&](Graph& g) { return weighted_sum(g, ops::rope(g, x, 2, 3, 10000.0)); }, {x});
  Tensor q = random_tensor({6, 8}, 18), k = random_tensor({6, 8}, 19), v = random_tensor({6, 8}, 20);
  expect_grad_ok(
      [&](Graph& g) { return weighted_sum(g, ops::causal_attention(g, q, k, v, 2, 3, 2)); },
      {q, k, v});
}

TEST(Ops, RopeAtPositionZeroIsIdentity) {
  Graph g(false);
  Tensor x = random_tensor({1, 8}, 21);
  auto y = ops::rope(g, x, 2, 1, 10000.0);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Ops, SingleTokenAttentionReturnsValue) {
  Graph g(false);
  Tensor q = random_tensor({1, 4}, 22), k = random_tensor({1, 4}, 23), v = random_tensor({1, 4}, 24);
  auto y = ops::causal_attention(g, q, k, v, 1, 1, 2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y.at(i), v.at(i));
}

TEST(GradCheck, QuadraticHasAnalyticGradient) {
  Tensor x({2}, {1.0, 2.0});
  const ScalarFn f = [&](Graph& g) { return ops::sum(g, ops::mul(g, x, x)); };
  x.set_requires_grad(true);
  {
    Graph g;
    g.backward(f(g));
    EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  }
  x.set_requires_grad(false);
  const auto report = grad_check(f, x);
  EXPECT_TRUE(report.passed());
  EXPECT_LT(report.max_abs_error, 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  Tensor x({3}, {1, 2, 3}, true);
  Graph g;
  Tensor c = ops::sum(g, Tensor({2}, {4, 5}));
  g.backward(c);
  for (double v : x.grad()) EXPECT_EQ(v, 0.0);
  const auto report = grad_check([](Graph& gg) { return ops::sum(gg, Tensor({1}, {7.0})); }, x);
  EXPECT_EQ(report.max_abs_error, 0.0);
}

TEST(GradCheck, NonFiniteIntermediateNamesTheOp) {
  Tensor x({1}, {0.5});
  try {
    grad_check([&](Graph& g) { return ops::sum(g, ops::exp(g, ops::scale(g, x, 1500.0))); }, x);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("exp"), std::string::npos);
  }
}

TEST(Graph, AccumulatesWhenValueUsedTwice) {
  Tensor x({1}, {3.0}, true);
  Graph g;
  auto y = ops::add(g, ops::mul(g, x, x), x);  // x^2 + x
  g.backward(ops::sum(g, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Graph, BackwardRunsOnceInReverseOrder) {
  Tensor x({2}, {1.0, 2.0}, true);
  Graph g;
  auto loss = ops::sum(g, ops::exp(g, x));
  const auto names = g.op_names();
  ASSERT_EQ(names.size(), 2u);
  EXPECT_EQ(names[0], "exp");
  EXPECT_EQ(names[1], "sum");
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), Error);
}

TEST(Graph, NonRecordingGraphHasNoNodes) {
  Tensor x({2}, {1.0, 2.0}, true);
  Graph g(false);
  auto y = ops::sum(g, ops::exp(g, x));
  EXPECT_EQ(g.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Graph, ForwardBackwardIsBitwiseDeterministic) {
  auto run = []() {
    Tensor a = random_tensor({5, 6}, 30), b = random_tensor({6, 4}, 31);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Graph g;
    auto loss = ops::cross_entropy(g, ops::matmul(g, ops::silu(g, a), b),
                                   std::vector<std::uint32_t>{0, 1, 2, 3, 0});
    g.backward(loss);
    std::vector<double> out{loss.item()};
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
