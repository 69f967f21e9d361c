#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "latentdialog/autodiff/ops.hpp"
#include "support/toy_data.hpp"

namespace ld::ad {
namespace {

using ld::testing::random_tensor;

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void expect_near(const Tensor& a, const Tensor& b, double tol = 1e-12) {
  ASSERT_TRUE(a.same_shape(b)) << a.shape_string() << " vs " << b.shape_string();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

TEST(Tensor, ConstructionAndAccess) {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.row_vector(0), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(t.shape_string(), "[2x3]");
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_THROW(Tensor(0, 3), ShapeError);
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, FiniteCheck) {
  Tensor t(2, 2, 1.0);
  EXPECT_TRUE(t.all_finite());
  t(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(Gemm, KernelsMatchNaiveProducts) {
  const Tensor a = random_tensor(4, 3, 1), b = random_tensor(3, 5, 2), g = random_tensor(4, 5, 3);
  Tensor c(4, 5);
  gemm_nn(a, b, c);
  expect_near(c, naive_matmul(a, b));
  Tensor d(4, 3);
  gemm_nt(g, b, d);
  expect_near(d, naive_matmul(g, transpose(b)));
  Tensor e(3, 5);
  gemm_tn(a, g, e);
  expect_near(e, naive_matmul(transpose(a), g));
}

TEST(Gemm, Accumulates) {
  const Tensor a = random_tensor(2, 2, 4), b = random_tensor(2, 2, 5);
  Tensor c(2, 2, 1.0);
  gemm_nn(a, b, c);
  Tensor want = naive_matmul(a, b);
  for (double& v : want.data()) v += 1.0;
  expect_near(c, want);
}

TEST(Ops, ForwardValuesMatchHandComputation) {
  Tape tape;
  Var a = tape.variable(Tensor::from_rows({{1, -2}, {0.5, 3}}));
  Var b = tape.variable(Tensor::from_rows({{2, 1}, {-1, 4}}));
  expect_near(add(a, b).value(), Tensor::from_rows({{3, -1}, {-0.5, 7}}));
  expect_near(sub(a, b).value(), Tensor::from_rows({{-1, -3}, {1.5, -1}}));
  expect_near(mul(a, b).value(), Tensor::from_rows({{2, -2}, {-0.5, 12}}));
  expect_near(matmul(a, b).value(), Tensor::from_rows({{4, -7}, {-2, 12.5}}));
  expect_near(affine(a, 2.0, 1.0).value(), Tensor::from_rows({{3, -3}, {2, 7}}));
  expect_near(relu(a).value(), Tensor::from_rows({{1, 0}, {0.5, 3}}));
  expect_near(leaky_relu(a, 0.1).value(), Tensor::from_rows({{1, -0.2}, {0.5, 3}}));
  EXPECT_DOUBLE_EQ(sum(a).value().item(), 2.5);
  EXPECT_DOUBLE_EQ(mean(a).value().item(), 0.625);
  EXPECT_DOUBLE_EQ(squared_error(a, b).value().item(), 1 + 9 + 2.25 + 1);
  EXPECT_NEAR(tanh(a).value()(0, 1), std::tanh(-2.0), 1e-15);
  EXPECT_NEAR(sigmoid(a).value()(1, 1), 1.0 / (1.0 + std::exp(-3.0)), 1e-15);
  EXPECT_NEAR(softplus(a).value()(0, 0), std::log1p(std::exp(1.0)), 1e-15);
}

TEST(Ops, RowBroadcastAdd) {
  Tape tape;
  Var a = tape.variable(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var b = tape.variable(Tensor::from_rows({{10, 20}}));
  expect_near(add(a, b).value(), Tensor::from_rows({{11, 22}, {13, 24}}));
  EXPECT_THROW(add(a, tape.variable(Tensor(2, 3))), ShapeError);
}

TEST(Ops, ShapeMismatchesAreRejected) {
  Tape tape;
  Var a = tape.variable(Tensor(2, 3));
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(mul(a, tape.variable(Tensor(3, 2))), ShapeError);
  EXPECT_THROW(slice_cols(a, 2, 4), ShapeError);
  EXPECT_THROW(concat_cols({a, tape.variable(Tensor(3, 1))}), ShapeError);
}

TEST(Ops, NonFiniteResultsRaise) {
  Tape tape;
  Var big = tape.variable(Tensor(1, 1, 1000.0));
  EXPECT_THROW(exp(big), NumericError);
  EXPECT_THROW(log(tape.variable(Tensor(1, 1, -1.0))), NumericError);
}

TEST(Ops, SoftplusIsStableForLargeInputs) {
  Tape tape;
  Var x = tape.variable(Tensor::from_rows({{800.0, -800.0}}));
  const Tensor y = softplus(x).value();
  EXPECT_DOUBLE_EQ(y(0, 0), 800.0);
  EXPECT_GE(y(0, 1), 0.0);
  EXPECT_LT(y(0, 1), 1e-300);
}

TEST(Ops, SoftmaxCrossEntropyMatchesManualLogSoftmax) {
  const Tensor logits = random_tensor(3, 4, 7, -3, 3);
  const std::vector<int> targets{2, 0, 3};
  const std::vector<double> weights{1.0, 0.0, 0.5};
  Tape tape;
  const double got = softmax_cross_entropy(tape.variable(logits), targets, weights).value().item();
  double want = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(logits(r, c));
    want += weights[r] * -(logits(r, static_cast<std::size_t>(targets[r])) - std::log(z));
  }
  EXPECT_NEAR(got, want, 1e-12);
}

TEST(Ops, ZeroWeightRowsGetNoGradient) {
  Tape tape;
  Var logits = tape.variable(random_tensor(2, 3, 8));
  const std::vector<int> targets{1, 2};
  const std::vector<double> weights{0.0, 1.0};
  tape.backward(softmax_cross_entropy(logits, targets, weights));
  const Tensor g = tape.grad(logits);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(g(0, c), 0.0);
}

TEST(Ops, CrossEntropyRejectsBadTargets) {
  Tape tape;
  Var logits = tape.variable(Tensor(2, 3));
  const std::vector<int> targets{1, 3};
  EXPECT_THROW(softmax_cross_entropy(logits, targets), ShapeError);
}

TEST(Ops, EmbeddingSelectsRowsAndScattersGradient) {
  Tape tape;
  Var table = tape.variable(Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  const std::vector<int> ids{2, 0, 2};
  Var e = embedding(table, ids);
  expect_near(e.value(), Tensor::from_rows({{5, 6}, {1, 2}, {5, 6}}));
  tape.backward(sum(e));
  expect_near(tape.grad(table), Tensor::from_rows({{1, 1}, {0, 0}, {2, 2}}));
  const std::vector<int> bad{3};
  EXPECT_THROW(embedding(table, bad), ShapeError);
}

TEST(Ops, BlendSelectsRows) {
  Tape tape;
  Var a = tape.variable(Tensor::from_rows({{1, 1}, {2, 2}}));
  Var b = tape.variable(Tensor::from_rows({{9, 9}, {8, 8}}));
  expect_near(blend(a, b, Tensor::column(std::vector<double>{0, 1})).value(), Tensor::from_rows({{9, 9}, {2, 2}}));
}

TEST(Ops, BatchNormTrainNormalisesColumns) {
  Tape tape;
  const Tensor x = random_tensor(6, 3, 9, -5, 5);
  BatchMoments m;
  const Tensor y = batch_norm_train(tape.variable(x), tape.variable(Tensor(1, 3, 1.0)),
                                    tape.variable(Tensor(1, 3, 0.0)), 1e-5, &m)
                       .value();
  for (std::size_t c = 0; c < 3; ++c) {
    double mu = 0.0, var = 0.0;
    for (std::size_t r = 0; r < 6; ++r) mu += x(r, c) / 6.0;
    for (std::size_t r = 0; r < 6; ++r) var += (x(r, c) - mu) * (x(r, c) - mu) / 6.0;
    EXPECT_NEAR(m.mean(0, c), mu, 1e-12);
    EXPECT_NEAR(m.variance(0, c), var, 1e-12);
    for (std::size_t r = 0; r < 6; ++r) EXPECT_NEAR(y(r, c), (x(r, c) - mu) / std::sqrt(var + 1e-5), 1e-12);
  }
  EXPECT_THROW(batch_norm_train(tape.variable(Tensor(1, 3)), tape.variable(Tensor(1, 3, 1.0)),
                                tape.variable(Tensor(1, 3)), 1e-5),
               ShapeError);
}

TEST(Tape, RepeatedBackwardIsIdempotent) {
  Tape tape;
  Var x = tape.variable(random_tensor(2, 2, 10));
  Var loss = sum(mul(x, x));
  tape.backward(loss);
  const Tensor first = tape.grad(x);
  tape.backward(loss);
  EXPECT_EQ(tape.grad(x), first);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor(1, 2, 3.0));
  Var x = tape.variable(Tensor(1, 2, 2.0));
  tape.backward(sum(mul(c, x)));
  EXPECT_FALSE(tape.requires_grad(c));
  expect_near(tape.grad(x), Tensor(1, 2, 3.0));
}

TEST(Tape, BackwardNeedsScalar) {
  Tape tape;
  Var x = tape.variable(Tensor(2, 2));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Helpers, LogisticAndLogSumExp) {
  EXPECT_DOUBLE_EQ(logistic(0.0), 0.5);
  EXPECT_GT(logistic(-800.0), -1e-300);
  EXPECT_DOUBLE_EQ(logistic(800.0), 1.0);
  const std::vector<double> v{1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(v), 1000.0 + std::log(2.0), 1e-12);
}

}  // namespace
}  // namespace ld::ad
