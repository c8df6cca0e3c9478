#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctnas/autodiff.hpp"
#include "ctnas/matrix.hpp"
#include "ctnas/optim.hpp"
#include "support.hpp"

namespace ctnas {
namespace {

using testing::random_matrix;

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_TRUE(a.same_shape(b)) << shape_str(a) << " vs " << shape_str(b);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], tol) << "at " << i;
}

TEST(Matrix, DataLengthMustMatchShape) {
  EXPECT_THROW(Matrix(2, 3, std::vector<double>(5)), ShapeError);
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m.size(), 6u);
}

TEST(Matrix, ProductDimensionContract) {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix b = random_matrix(4, 2, rng);
  const Matrix c = matmul(a, b);
  EXPECT_EQ(c.rows(), 3u);
  EXPECT_EQ(c.cols(), 2u);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(matmul_tn(a, b), ShapeError);
  EXPECT_THROW(matmul_nt(a, b), ShapeError);
}

TEST(Matrix, ProductsMatchNaiveLoops) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(1 + t % 4, 2 + t % 3, rng);
    const Matrix b = random_matrix(a.cols(), 1 + t % 5, rng);
    expect_near(matmul(a, b), naive_matmul(a, b), 1e-12);
    expect_near(matmul_tn(transpose(a), b), naive_matmul(a, b), 1e-12);
    expect_near(matmul_nt(a, transpose(b)), naive_matmul(a, b), 1e-12);
  }
}

TEST(Matrix, ReshapeKeepsRowMajorOrder) {
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Matrix r = m.reshaped(3, 2);
  EXPECT_EQ(r(2, 1), 6.0);
  EXPECT_EQ(r(1, 0), 3.0);
  EXPECT_THROW(m.reshaped(4, 2), ShapeError);
}

TEST(Sigmoid, Examples) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-16);
  EXPECT_NEAR(sigmoid(2.0), 0.8807970779778823, 1e-15);
  for (double x : {0.1, 1.0, 7.5, 30.0, 700.0}) EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
}

TEST(Sigmoid, StaysInsideUnitIntervalForModerateInputs) {
  for (double x = -30.0; x <= 30.0; x += 0.25) {
    EXPECT_GT(sigmoid(x), 0.0);
    EXPECT_LT(sigmoid(x), 1.0);
  }
}

TEST(Sigmoid, RejectsNonFinite) {
  EXPECT_THROW(sigmoid(std::nan("")), std::domain_error);
  EXPECT_THROW(sigmoid(INFINITY), std::domain_error);
}

TEST(Bce, Examples) {
  EXPECT_NEAR(bce(0.5, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0.9, 0), -std::log(0.1), 1e-12);
  EXPECT_NEAR(bce(0.9, 0), 2.302585092994046, 1e-12);
  EXPECT_LT(bce(1.0 - 1e-15, 1), 1e-11);
  EXPECT_GE(bce(0.3, 1), 0.0);
}

TEST(Bce, ClampsAtTheBoundaries) {
  EXPECT_TRUE(std::isfinite(bce(0.0, 1)));
  EXPECT_NEAR(bce(0.0, 1), -std::log(kBceEps), 1e-9);
  EXPECT_TRUE(std::isfinite(bce(1.0, 0)));
}

TEST(Bce, RejectsNonBinaryLabels) {
  EXPECT_THROW(bce(0.5, 2), std::invalid_argument);
  EXPECT_THROW(bce(0.5, -1), std::invalid_argument);
}

// Scalar loss of a small composed graph: BCE(sigmoid(flatten(relu(X W0) W1) | c) . w).
LossFn composed_loss(const Matrix& x, std::vector<int> labels) {
  return [x, labels](std::span<const Matrix> p, std::vector<Matrix>* grads) {
    Tape tape;
    Var w0 = tape.leaf(p[0]);
    Var w1 = tape.leaf(p[1]);
    Var wf = tape.leaf(p[2]);
    Var h = matmul(relu(matmul(tape.constant(x), w0)), w1);
    Var flat = reshape(h, labels.size(), h.value().size() / labels.size());
    Var feat = concat_cols(flat, sigmoid(flat));
    Var prob = sigmoid(matmul(feat, wf));
    Var loss = bce_mean(prob, labels);
    if (grads) {
      tape.backward(loss);
      *grads = {w0.grad(), w1.grad(), wf.grad()};
    }
    return loss.value()(0, 0);
  };
}

TEST(Autodiff, ComposedGraphMatchesFiniteDifferencesOnRandomInstances) {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + t % 3, d = 2 + t % 4;
    const Matrix x = random_matrix(2 * n, 3, rng);
    std::vector<Matrix> params{random_matrix(3, d, rng, 0.8), random_matrix(d, 2, rng, 0.8),
                               random_matrix(8, 1, rng, 0.8)};
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng() % 2);
    worst = std::max(worst, grad_check(composed_loss(x, labels), params));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Autodiff, RowOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 25; ++t) {
    const Matrix b0 = random_matrix(3, 3, rng), b1 = random_matrix(3, 3, rng);
    LossFn fn = [&](std::span<const Matrix> p, std::vector<Matrix>* grads) {
      Tape tape;
      Var table = tape.leaf(p[0]);
      Var rows = gather_rows(table, {0, 2, 1, 1, 3, 0});
      Var mixed = block_matmul({b0, b1}, rows);
      Var pooled = mean_pool_rows(mixed, 3);
      Var top = slice_rows(mixed, 1, 2);
      Var total = add(sum(scale(pooled, 0.7)), sum(relu(top)));
      if (grads) {
        tape.backward(total);
        *grads = {table.grad()};
      }
      return total.value()(0, 0);
    };
    std::vector<Matrix> params{random_matrix(4, 2, rng)};
    EXPECT_LT(grad_check(fn, params), 1e-4);
  }
}

TEST(Autodiff, ReluSubgradientAtZeroIsZero) {
  Tape tape;
  Var x = tape.leaf(Matrix(1, 3, std::vector<double>{-1.0, 0.0, 2.0}));
  Var s = sum(relu(x));
  tape.backward(s);
  EXPECT_EQ(x.grad()(0, 0), 0.0);
  EXPECT_EQ(x.grad()(0, 1), 0.0);
  EXPECT_EQ(x.grad()(0, 2), 1.0);
}

TEST(Autodiff, BackwardNeedsScalarOutput) {
  Tape tape;
  Var x = tape.leaf(Matrix(2, 2, 1.0));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Autodiff, ShapeErrorsPropagate) {
  Tape tape;
  Var a = tape.leaf(Matrix(2, 3));
  Var b = tape.leaf(Matrix(2, 3));
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(concat_cols(a, tape.leaf(Matrix(3, 1))), ShapeError);
  EXPECT_THROW(gather_rows(a, {5}), std::out_of_range);
}

TEST(GradCheck, QuadraticIsExact) {
  LossFn half_norm = [](std::span<const Matrix> p, std::vector<Matrix>* grads) {
    double s = 0.0;
    for (double v : p[0].data()) s += 0.5 * v * v;
    if (grads) *grads = {p[0]};
    return s;
  };
  std::mt19937_64 rng(5);
  std::vector<Matrix> params{random_matrix(3, 4, rng, 2.0)};
  EXPECT_LT(grad_check(half_norm, params), 1e-8);
}

TEST(GradCheck, ConstantLossHasZeroGradients) {
  LossFn constant = [](std::span<const Matrix> p, std::vector<Matrix>* grads) {
    if (grads) *grads = {Matrix(p[0].rows(), p[0].cols())};
    return 3.0;
  };
  std::vector<Matrix> params{Matrix(2, 2, 1.0)};
  EXPECT_LT(grad_check(constant, params), 1e-8);
}

TEST(GradCheck, NonFiniteLossIsAnError) {
  LossFn bad = [](std::span<const Matrix> p, std::vector<Matrix>* grads) {
    if (grads) *grads = {p[0]};
    return std::nan("");
  };
  std::vector<Matrix> params{Matrix(1, 1, 1.0)};
  EXPECT_THROW(grad_check(bad, params), std::domain_error);
}

TEST(GradCheck, DetectsAWrongGradient) {
  LossFn wrong = [](std::span<const Matrix> p, std::vector<Matrix>* grads) {
    if (grads) {
      Matrix g = p[0];
      g *= 3.0;
      *grads = {g};
    }
    return 0.5 * p[0](0, 0) * p[0](0, 0);
  };
  std::vector<Matrix> params{Matrix(1, 1, 1.0)};
  EXPECT_GT(grad_check(wrong, params), 0.5);
}

TEST(Adam, ZeroGradientsWithoutDecayLeaveParamsUnchanged) {
  std::mt19937_64 rng(6);
  std::vector<Matrix> params{random_matrix(2, 3, rng)};
  const auto before = params;
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  AdamState state(cfg, params);
  std::vector<Matrix> grads{Matrix(2, 3)};
  for (int i = 0; i < 5; ++i) adam_step(params, grads, state);
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step, 5u);
}

TEST(Adam, FirstStepOnLinearLoss) {
  std::vector<Matrix> params{Matrix(1, 1, 0.0)};
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState state(cfg, params);
  std::vector<Matrix> grads{Matrix(1, 1, 1.0)};
  adam_step(params, grads, state);
  // m_hat = v_hat = 1 after bias correction.
  EXPECT_NEAR(params[0](0, 0), -0.1 / (1.0 + cfg.eps), 1e-15);
  EXPECT_NEAR(params[0](0, 0), -0.1, 1e-8);
}

TEST(Adam, MatchesHandRolledUpdateWithDecoupledDecay) {
  std::mt19937_64 rng(7);
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8, 0.05};
  std::vector<Matrix> params{random_matrix(2, 2, rng)};
  std::vector<double> w(params[0].data().begin(), params[0].data().end());
  std::vector<double> m(4, 0.0), v(4, 0.0);
  AdamState state(cfg, params);
  for (int t = 1; t <= 3; ++t) {
    std::vector<Matrix> grads{random_matrix(2, 2, rng)};
    for (std::size_t i = 0; i < 4; ++i) {
      const double g = grads[0].data()[i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
      const double mh = m[i] / (1 - std::pow(cfg.beta1, t));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, t));
      w[i] -= cfg.lr * (mh / (std::sqrt(vh) + cfg.eps) + cfg.weight_decay * w[i]);
    }
    adam_step(params, grads, state);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(params[0].data()[i], w[i], 1e-14);
}

TEST(Adam, IsDeterministic) {
  std::mt19937_64 rng(8);
  const Matrix p0 = random_matrix(3, 3, rng), g0 = random_matrix(3, 3, rng);
  auto run = [&] {
    std::vector<Matrix> params{p0};
    AdamState state(AdamConfig{}, params);
    std::vector<Matrix> grads{g0};
    adam_step(params, grads, state);
    return params[0];
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchIsAnError) {
  std::vector<Matrix> params{Matrix(2, 2)};
  AdamState state(AdamConfig{}, params);
  std::vector<Matrix> grads{Matrix(2, 3)};
  EXPECT_THROW(adam_step(params, grads, state), ShapeError);
  std::vector<Matrix> none;
  EXPECT_THROW(adam_step(params, none, state), ShapeError);
}

TEST(Xavier, RespectsBoundAndSeed) {
  std::mt19937_64 a(9), b(9);
  const Matrix m = xavier_uniform(10, 6, a);
  EXPECT_EQ(m, xavier_uniform(10, 6, b));
  const double bound = std::sqrt(6.0 / 16.0);
  for (double v : m.data()) EXPECT_LE(std::abs(v), bound);
}

}  // namespace
}  // namespace ctnas
