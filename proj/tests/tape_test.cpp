#include "botinject/optim.hpp"
#include "botinject/tape.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace botinject;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

}  // namespace

TEST(Affine, IdentityWeightsPassInputThrough) {
  Tape tape;
  Matrix x(2, 3);
  x << 1, -2, 3, 0.5, 4, -1;
  Var y = affine(tape.constant(x), tape.constant(Matrix::Identity(3, 3)), tape.constant(Matrix::Zero(1, 3)));
  EXPECT_EQ(y.value(), x);
}

TEST(Affine, HandSum) {
  Tape tape;
  Matrix x(1, 2), w(2, 1), b(1, 1);
  x << 1, 2;
  w << 1, 1;
  b << 3;
  EXPECT_DOUBLE_EQ(affine(tape.constant(x), tape.constant(w), tape.constant(b)).value()(0, 0), 6.0);
}

TEST(Affine, MatchesTripleLoop) {
  Rng rng(3);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix w = random_matrix(4, 2, rng);
  const Matrix b = random_matrix(1, 2, rng);
  Tape tape;
  const Matrix got = affine(tape.constant(a), tape.constant(w), tape.constant(b)).value();
  Matrix want = triple_loop(a, w);
  want.rowwise() += b.row(0);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Affine, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(affine(tape.constant(Matrix::Zero(2, 3)), tape.constant(Matrix::Zero(2, 2)),
                      tape.constant(Matrix::Zero(1, 2))),
               std::invalid_argument);
}

TEST(LeakyRelu, NonNegativeIsIdentity) {
  Tape tape;
  Matrix x(1, 3);
  x << 0.0, 1.5, 7.0;
  EXPECT_EQ(leaky_relu(tape.constant(x), 0.01).value(), x);
}

TEST(LeakyRelu, NegativeInput) {
  Tape tape;
  EXPECT_DOUBLE_EQ(leaky_relu(tape.constant(Matrix::Constant(1, 1, -1.0)), 0.01).value()(0, 0), -0.01);
}

TEST(LeakyRelu, NegativeSideGradientIsSlope) {
  Parameter p("x", Matrix::Constant(1, 1, -0.7));
  auto f = [](double v) {
    Tape t;
    return leaky_relu(t.constant(Matrix::Constant(1, 1, v)), 0.01).value()(0, 0);
  };
  const double eps = 1e-4;
  const double numeric = (f(-0.7 + eps) - f(-0.7 - eps)) / (2 * eps);
  Tape tape;
  Var loss = sum(leaky_relu(tape.param(p), 0.01));
  tape.backward(loss);
  EXPECT_NEAR(p.grad(0, 0), 0.01, 1e-12);
  EXPECT_NEAR(numeric, 0.01, 1e-10);
}

TEST(SoftmaxCrossEntropy, ConfidentCorrectIsNearZero) {
  Tape tape;
  Matrix z(1, 2);
  z << 20, -20;
  const std::vector<int> labels{0};
  EXPECT_NEAR(softmax_cross_entropy(tape.constant(z), labels).scalar(), 0.0, 1e-12);
}

TEST(SoftmaxCrossEntropy, ZeroLogitsGiveLn2) {
  Tape tape;
  const std::vector<int> labels{0, 1, 1};
  EXPECT_NEAR(softmax_cross_entropy(tape.constant(Matrix::Zero(3, 2)), labels).scalar(), std::log(2.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, MatchesScalarLoop) {
  Rng rng(11);
  const Matrix z = random_matrix(17, 2, rng) * 3.0;
  std::vector<int> labels;
  for (int i = 0; i < 17; ++i) labels.push_back(static_cast<int>(rng.below(2)));
  double want = 0.0;
  for (int i = 0; i < 17; ++i) {
    const double a = std::exp(z(i, 0));
    const double b = std::exp(z(i, 1));
    double p = (labels[static_cast<std::size_t>(i)] == 0 ? a : b) / (a + b);
    p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    want -= std::log(p);
  }
  want /= 17.0;
  Tape tape;
  EXPECT_NEAR(softmax_cross_entropy(tape.constant(z), labels).scalar(), want, 1e-10);
}

TEST(SoftmaxCrossEntropy, NonFiniteLogitsThrow) {
  Tape tape;
  Matrix z(1, 2);
  z << std::nan(""), 0.0;
  const std::vector<int> labels{0};
  EXPECT_THROW(softmax_cross_entropy(tape.constant(z), labels), std::invalid_argument);
}

TEST(Backward, OuterProductGradient) {
  Matrix w0(2, 2);
  w0 << 1, 2, 3, 4;
  Parameter w("w", w0);
  Matrix x(2, 1);
  x << 5, 7;
  Tape tape;
  tape.backward(sum(matmul(tape.param(w), tape.constant(x))));
  Matrix want(2, 2);
  want << 5, 7, 5, 7;
  EXPECT_EQ(w.grad, want);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  Parameter used("used", Matrix::Constant(1, 1, 2.0));
  Parameter unused("unused", Matrix::Constant(2, 2, 1.0));
  unused.grad = Matrix::Constant(2, 2, 9.0);
  Tape tape;
  tape.param(unused);
  tape.backward(sum(hadamard(tape.param(used), tape.param(used))));
  EXPECT_DOUBLE_EQ(used.grad(0, 0), 4.0);
  EXPECT_TRUE(unused.grad.isZero(0.0));
}

TEST(Backward, SecondCallThrows) {
  Parameter p("p", Matrix::Constant(1, 1, 1.0));
  Tape tape;
  Var loss = sum(tape.param(p));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
}

TEST(SgdStep, ZeroGradientLeavesValue) {
  Parameter p("p", Matrix::Constant(2, 2, 3.0));
  p.grad = Matrix::Zero(2, 2);
  std::vector<Parameter*> ps{&p};
  sgd_step(ps, 0.5);
  EXPECT_EQ(p.value, Matrix::Constant(2, 2, 3.0));
}

TEST(SgdStep, ScalarUpdateAndGradReset) {
  Parameter p("p", Matrix::Constant(1, 1, 1.0));
  p.grad = Matrix::Constant(1, 1, 2.0);
  std::vector<Parameter*> ps{&p};
  sgd_step(ps, 0.1);
  EXPECT_NEAR(p.value(0, 0), 0.8, 1e-15);
  EXPECT_EQ(p.grad(0, 0), 0.0);
}

TEST(SgdStep, QuadraticBowlConverges) {
  Parameter p("p", Matrix::Constant(1, 1, 1.0));
  std::vector<Parameter*> ps{&p};
  double previous = 1.0;
  for (int step = 0; step < 100; ++step) {
    Tape tape;
    Var x = tape.param(p);
    tape.backward(sum(hadamard(x, x)));
    sgd_step(ps, 0.1);
    EXPECT_LT(p.value(0, 0) * p.value(0, 0), previous);
    previous = p.value(0, 0) * p.value(0, 0);
  }
  EXPECT_LT(std::abs(p.value(0, 0)), 1e-4);
  EXPECT_NEAR(p.value(0, 0), std::pow(0.8, 100), 1e-15);
}

TEST(SgdStep, NonFiniteGradientAbortsWholeStep) {
  Parameter a("alpha", Matrix::Constant(1, 1, 1.0));
  Parameter b("beta", Matrix::Constant(1, 1, 1.0));
  a.grad = Matrix::Constant(1, 1, 1.0);
  b.grad = Matrix::Constant(1, 1, std::numeric_limits<double>::infinity());
  std::vector<Parameter*> ps{&a, &b};
  try {
    sgd_step(ps, 0.1);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
  EXPECT_EQ(a.value(0, 0), 1.0);
  EXPECT_EQ(b.value(0, 0), 1.0);
}

TEST(GradientDescent, MomentumZeroMatchesPlainStep) {
  Parameter p("p", Matrix::Constant(1, 2, 1.0));
  Parameter q("q", Matrix::Constant(1, 2, 1.0));
  std::vector<Parameter*> pp{&p}, qq{&q};
  GradientDescent opt(0.1);
  for (int i = 0; i < 3; ++i) {
    p.grad = Matrix::Constant(1, 2, 0.5);
    q.grad = Matrix::Constant(1, 2, 0.5);
    opt.step(pp);
    sgd_step(qq, 0.1);
  }
  EXPECT_EQ(p.value, q.value);
}

TEST(GradCheck, AffineModelIsNearlyExact) {
  Rng rng(5);
  Parameter w = uniform_parameter("w", 4, 3, 4, rng);
  Parameter b = uniform_parameter("b", 1, 3, 4, rng);
  const Matrix x = random_matrix(6, 4, rng);
  std::vector<Parameter*> ps{&w, &b};
  const auto r = grad_check(
      [&](Tape& t) { return sum(hadamard(affine(t.constant(x), t.param(w), t.param(b)), t.constant(x.leftCols(3)))); },
      ps);
  EXPECT_LE(r.max_error, 1e-8);
  EXPECT_EQ(r.coords_checked, 15);
}

TEST(GradCheck, ComposedNetwork) {
  Rng rng(6);
  Parameter w0 = uniform_parameter("w0", 5, 8, 5, rng);
  Parameter b0 = uniform_parameter("b0", 1, 8, 5, rng);
  Parameter w1 = uniform_parameter("w1", 8, 2, 8, rng);
  Parameter b1 = uniform_parameter("b1", 1, 2, 8, rng);
  const Matrix x = random_matrix(9, 5, rng);
  std::vector<int> labels;
  for (int i = 0; i < 9; ++i) labels.push_back(i % 2);
  std::vector<Parameter*> ps{&w0, &b0, &w1, &b1};
  const auto r = grad_check(
      [&](Tape& t) {
        Var h = tanh(affine(t.constant(x), t.param(w0), t.param(b0)));
        Var z = affine(leaky_relu(h, 0.01), t.param(w1), t.param(b1));
        return add(softmax_cross_entropy(z, labels), scale(squared_norm(t.param(w0)), 1e-3));
      },
      ps, {.eps = 1e-3, .max_coords_per_param = 1000});
  EXPECT_LE(r.max_error, 1e-4);
  EXPECT_EQ(r.coords_checked + r.coords_skipped, 40 + 8 + 16 + 2);
}

TEST(GradCheck, NoParametersGivesZero) {
  std::vector<Parameter*> none;
  const auto r = grad_check([](Tape& t) { return sum(t.constant(Matrix::Ones(2, 2))); }, none);
  EXPECT_EQ(r.max_error, 0.0);
  EXPECT_EQ(r.coords_checked, 0);
}

TEST(Tape, ReplayIsBitIdentical) {
  Rng rng(8);
  const Matrix x = random_matrix(4, 4, rng);
  Parameter w = uniform_parameter("w", 4, 4, 4, rng);
  auto run = [&] {
    Tape t;
    return softmax_rows(tanh(matmul(t.constant(x), t.param(w)))).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, SoftmaxRowsSumToOne) {
  Rng rng(9);
  Tape t;
  const Matrix p = softmax_rows(t.constant(random_matrix(10, 2, rng) * 50.0)).value();
  for (Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}
