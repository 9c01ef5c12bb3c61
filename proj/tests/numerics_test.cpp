#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mlcl/numerics/adam.hpp"
#include "mlcl/numerics/gradcheck.hpp"
#include "mlcl/numerics/graph.hpp"
#include "mlcl/numerics/ops.hpp"
#include "mlcl/numerics/tensor.hpp"

namespace {

using namespace mlcl;

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), std::invalid_argument);
  EXPECT_EQ(Tensor({2, 3}).size(), 6u);
}

TEST(Tensor, RowsRequireMatrix) {
  Tensor v = Tensor::vector({1, 2, 3});
  EXPECT_THROW(v.rows(), std::invalid_argument);
}

TEST(L2Normalize, UnitLength) {
  std::vector<double> v{3.0, 4.0};
  auto u = l2_normalize(v);
  EXPECT_DOUBLE_EQ(u[0], 0.6);
  EXPECT_DOUBLE_EQ(u[1], 0.8);
}

TEST(L2Normalize, ZeroVectorFallsBackAndCounts) {
  const long before = diagnostics().zero_norm_fallbacks.load();
  std::vector<double> z(4, 0.0);
  auto u = l2_normalize(z);
  for (double x : u) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(diagnostics().zero_norm_fallbacks.load(), before + 1);
}

TEST(LogSumExp, MatchesNaiveAndSurvivesLargeInputs) {
  std::vector<double> xs{0.1, -2.0, 3.5};
  double naive = std::log(std::exp(0.1) + std::exp(-2.0) + std::exp(3.5));
  EXPECT_NEAR(logsumexp(xs), naive, 1e-14);
  std::vector<double> big{1000.0, 1000.0};
  EXPECT_NEAR(logsumexp(big), 1000.0 + std::log(2.0), 1e-12);
}

TEST(LogSumExp, EmptyThrows) {
  std::vector<double> none;
  try {
    logsumexp(none);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "empty reduction");
  }
}

TEST(Graph, BackwardRequiresScalar) {
  Graph g;
  Var x = g.variable(Tensor({2, 2}, 1.0));
  Var y = scale(x, 2.0);
  EXPECT_THROW(g.backward(y), std::invalid_argument);
}

TEST(Graph, ConstantsReceiveNoGradient) {
  Graph g;
  Var c = g.constant(Tensor::vector({1, 2}));
  Var x = g.variable(Tensor::vector({3, 4}));
  Var l = dot(c, x);
  g.backward(l);
  EXPECT_DOUBLE_EQ(g.grad(x.id)[0], 1.0);
  EXPECT_DOUBLE_EQ(g.grad(x.id)[1], 2.0);
  EXPECT_FALSE(g.requires_grad(c.id));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(3);
  Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 4}, rng), c = random_tensor({6, 7}, rng);
  Graph g;
  Var ab = matmul(g.constant(a), g.constant(b));
  Var act = matmul_nt(g.constant(a), g.constant(c));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(ab.value()(i, j), s, 1e-12);
    }
    for (std::size_t j = 0; j < 6; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * c(j, k);
      EXPECT_NEAR(act.value()(i, j), s, 1e-12);
    }
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), std::invalid_argument);
}

// Every differentiable op is checked against central differences through a
// random scalar projection of its output.
class OpGradient : public ::testing::Test {
 protected:
  std::mt19937_64 rng{11};

  void check(std::vector<Parameter*> params, const std::function<Var(Graph&)>& body, double tol = 1e-6) {
    Tensor probe;
    auto build = [&](Graph& g) {
      Var out = body(g);
      if (probe.size() != out.value().size()) probe = random_tensor(out.value().shape(), rng);
      return dot(out, g.constant(probe.reshaped(out.value().shape())));
    };
    {
      Graph g;
      build(g);
    }
    auto r = check_gradients(params, build, 1e-6, 1e-6);
    EXPECT_LT(r.max_relative_error, tol) << r.worst_parameter << "[" << r.worst_index << "] analytic "
                                         << r.worst_analytic << " numeric " << r.worst_numeric;
  }
};

TEST_F(OpGradient, MatmulFamily) {
  Parameter a("a", random_tensor({3, 4}, rng)), b("b", random_tensor({4, 5}, rng)), c("c", random_tensor({2, 4}, rng));
  check({&a, &b}, [&](Graph& g) { return matmul(g.parameter(a), g.parameter(b)); });
  check({&a, &c}, [&](Graph& g) { return matmul_nt(g.parameter(a), g.parameter(c)); });
}

TEST_F(OpGradient, Elementwise) {
  Parameter a("a", random_tensor({3, 4}, rng)), b("b", random_tensor({3, 4}, rng));
  Parameter bias("bias", random_tensor({4}, rng)), gain("gain", random_tensor({4}, rng));
  check({&a, &b}, [&](Graph& g) { return mul(add(g.parameter(a), g.parameter(b)), sub(g.parameter(a), g.parameter(b))); });
  check({&a, &bias}, [&](Graph& g) { return add_bias(g.parameter(a), g.parameter(bias)); });
  check({&a, &gain}, [&](Graph& g) { return mul_rowwise(g.parameter(a), g.parameter(gain)); });
  check({&a}, [&](Graph& g) { return tanh(scale(g.parameter(a), 0.7)); });
  check({&a}, [&](Graph& g) { return relu(g.parameter(a)); });
  check({&a}, [&](Graph& g) { return reshape(g.parameter(a), {2, 6}); });
}

TEST_F(OpGradient, RowReductions) {
  Parameter a("a", random_tensor({4, 6}, rng));
  check({&a}, [&](Graph& g) { return l2_normalize_rows(g.parameter(a)); });
  check({&a}, [&](Graph& g) { return logsumexp_rows(g.parameter(a)); });
  check({&a}, [&](Graph& g) { return layer_norm_rows(g.parameter(a)); });
  check({&a}, [&](Graph& g) { return mean(g.parameter(a)); });
}

TEST_F(OpGradient, Gather) {
  Parameter a("a", random_tensor({5, 3}, rng));
  check({&a}, [&](Graph& g) { return gather_concat(g.parameter(a), {{0, 1}, {1, 4}, {2, 2}}); });
  check({&a}, [&](Graph& g) { return gather_rows(g.parameter(a), {4, 0, 4}); });
}

TEST_F(OpGradient, Conv2d) {
  ConvGeometry geom{2, 6, 5, 3, 2, 1};
  Parameter x("x", random_tensor({2, 2 * 6 * 5}, rng));
  Parameter w("w", random_tensor({3, 2 * 9}, rng));
  Parameter b("b", random_tensor({3}, rng));
  check({&x, &w, &b}, [&](Graph& g) { return conv2d(g.parameter(x), g.parameter(w), g.parameter(b), geom); });
}

TEST(Conv2d, MatchesDirectConvolution) {
  std::mt19937_64 rng(5);
  ConvGeometry geom{2, 7, 6, 3, 2, 1};
  Tensor x = random_tensor({1, 2 * 7 * 6}, rng), w = random_tensor({4, 18}, rng), b = random_tensor({4}, rng);
  Graph g;
  Var y = conv2d(g.constant(x), g.constant(w), g.constant(b), geom);
  const std::size_t oh = geom.out_height(), ow = geom.out_width();
  ASSERT_EQ(y.value().cols(), 4 * oh * ow);
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double s = b[o];
        for (std::size_t ch = 0; ch < 2; ++ch)
          for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const long iy = static_cast<long>(r * 2 + ky) - 1, ix = static_cast<long>(c * 2 + kx) - 1;
              if (iy < 0 || ix < 0 || iy >= 7 || ix >= 6) continue;
              s += w(o, ch * 9 + ky * 3 + kx) * x[ch * 42 + static_cast<std::size_t>(iy) * 6 + static_cast<std::size_t>(ix)];
            }
        EXPECT_NEAR(y.value()[o * oh * ow + r * ow + c], s, 1e-12);
      }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps).
  Tensor p = Tensor::vector({1.0, -2.0, 0.5});
  Tensor g = Tensor::vector({0.3, -4.0, 1e-3});
  AdamState adam;
  adam.step({&p}, {&g});
  EXPECT_NEAR(p[0], 1.0 - 0.002 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.002 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[2], 0.5 - 0.002 * 1e-3 / (1e-3 + 1e-8), 1e-15);
}

TEST(Adam, MatchesScalarRecurrence) {
  Tensor p = Tensor::vector({0.7});
  AdamState adam({0.01, 0.8, 0.9, 1e-8});
  double m = 0, v = 0, x = 0.7;
  for (int t = 1; t <= 20; ++t) {
    const double grad = 2.0 * x - 1.0;
    Tensor g = Tensor::vector({2.0 * p[0] - 1.0});
    adam.step({&p}, {&g});
    m = 0.8 * m + 0.2 * grad;
    v = 0.9 * v + 0.1 * grad * grad;
    x -= 0.01 * (m / (1 - std::pow(0.8, t))) / (std::sqrt(v / (1 - std::pow(0.9, t))) + 1e-8);
    ASSERT_NEAR(p[0], x, 1e-14) << "step " << t;
  }
  EXPECT_EQ(adam.step_count(), 20u);
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor p({3}), g({4});
  AdamState adam;
  EXPECT_THROW(adam.step({&p}, {&g}), std::invalid_argument);
}

TEST(Adam, ConvergesOnQuadratic) {
  Parameter w("w", Tensor::vector({3.0, -1.0}));
  AdamState adam({0.05});
  for (int i = 0; i < 2000; ++i) {
    w.zero_grad();
    Graph g;
    Var x = g.parameter(w);
    Var d = sub(x, g.constant(Tensor::vector({0.5, 0.25})));
    g.backward(dot(d, d));
    adam.step({&w});
  }
  EXPECT_NEAR(w.value[0], 0.5, 1e-3);
  EXPECT_NEAR(w.value[1], 0.25, 1e-3);
}

}  // namespace
