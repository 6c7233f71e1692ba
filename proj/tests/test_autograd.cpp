#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "neurosteer/autograd.hpp"
#include "neurosteer/errors.hpp"

namespace neurosteer {
namespace {

using ag::Matrix;
using ag::Var;
using testing::grad_check;
using testing::random_matrix;

constexpr double kTol = 1e-6;

// Contract an op output against a fixed random weight so upstream gradients
// are not all ones.
Var contract(const Var& y, uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ag::sum_all(ag::mul(y, ag::constant(random_matrix(y.rows(), y.cols(), rng))));
}

class AutogradOps : public ::testing::Test {
 protected:
  std::mt19937_64 rng{1234};
  Var leaf(ag::Index r, ag::Index c, double scale = 1.0) { return ag::leaf(random_matrix(r, c, rng, scale)); }
};

TEST_F(AutogradOps, Arithmetic) {
  Var a = leaf(4, 3), b = leaf(4, 3), row = leaf(1, 3);
  auto f = [&] { return contract(ag::add_row(ag::sub(ag::mul(a, b), ag::scale(ag::add(a, b), 0.3)), row)); };
  auto r = grad_check(f, {{"a", &a}, {"b", &b}, {"row", &row}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, MatmulFamily) {
  Var a = leaf(5, 3), b = leaf(3, 4), c = leaf(6, 3);
  auto f = [&] {
    return ag::add(contract(ag::matmul(a, b)), ag::add(contract(ag::matmul_nt(a, c), 3), contract(ag::transpose(b), 4)));
  };
  auto r = grad_check(f, {{"a", &a}, {"b", &b}, {"c", &c}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, Linear) {
  Var x = leaf(6, 4), w = leaf(3, 4), bias = leaf(1, 3);
  auto f = [&] { return contract(ag::linear(x, w, bias)); };
  auto r = grad_check(f, {{"x", &x}, {"w", &w}, {"b", &bias}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, Activations) {
  Var x = leaf(5, 4), slope = ag::leaf(Matrix::Constant(1, 1, 0.2));
  // Keep ReLU kinks away from the probe step.
  for (ag::Index i = 0; i < x.value().size(); ++i) {
    double& v = x.mutable_value().data()[i];
    if (std::abs(v) < 1e-3) v = 0.1;
  }
  auto f = [&] {
    Var y = ag::add(ag::relu(x), ag::prelu(x, slope));
    y = ag::add(y, ag::add(ag::sigmoid(x), ag::tanh(x)));
    return contract(ag::add(y, ag::softmax_rows(x)));
  };
  auto r = grad_check(f, {{"x", &x}, {"slope", &slope}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, LayerNorm) {
  Var x = leaf(4, 6), g = leaf(1, 6), b = leaf(1, 6);
  auto f = [&] { return contract(ag::layer_norm(x, g, b)); };
  auto r = grad_check(f, {{"x", &x}, {"g", &g}, {"b", &b}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, LayerNormNormalisesRows) {
  Var x = leaf(3, 8, 5.0);
  Var y = ag::layer_norm(x, ag::constant(Matrix::Ones(1, 8)), ag::constant(Matrix::Zero(1, 8)));
  for (ag::Index r = 0; r < 3; ++r) {
    EXPECT_NEAR(y.value().row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.value().row(r).squaredNorm() / 8.0, 1.0, 1e-5);
  }
}

TEST_F(AutogradOps, ShapeOps) {
  Var a = leaf(4, 3), b = leaf(4, 2);
  auto f = [&] {
    Var c = ag::concat_cols(a, b);
    Var s = ag::add(contract(ag::slice_rows(c, 1, 2)), contract(ag::slice_cols(c, 2, 3), 5));
    return ag::add(s, contract(ag::reshape(c, 2, 10), 6));
  };
  auto r = grad_check(f, {{"a", &a}, {"b", &b}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, GatherScatterBlend) {
  Var x = leaf(5, 3);
  auto f = [&] {
    Var g = ag::gather_rows(x, {4, -1, 0, 0, 2});
    Var s = ag::scatter_add_rows(x, {1, 1, -1, 0, 3}, 4);
    Var bl = ag::blend_rows(x, {0, 1, 3}, {1, 2, 4}, {0.25, 0.5, 0.9});
    return ag::add(contract(g), ag::add(contract(s, 3), contract(bl, 4)));
  };
  auto r = grad_check(f, {{"x", &x}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, GatherNegativeIndexGivesZeroRow) {
  Var x = ag::constant(Matrix::Ones(2, 3));
  Var g = ag::gather_rows(x, {-1, 1});
  EXPECT_EQ(g.value().row(0).squaredNorm(), 0.0);
  EXPECT_EQ(g.value().row(1).sum(), 3.0);
}

TEST_F(AutogradOps, FrameAndOverlapAdd) {
  Var x = leaf(23, 2), fr = leaf(7, 4);
  auto f = [&] { return ag::add(contract(ag::frame(x, 5, 3)), contract(ag::overlap_add(fr, 2, 15), 8)); };
  auto r = grad_check(f, {{"x", &x}, {"frames", &fr}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, FrameLayout) {
  Matrix m(6, 2);
  for (int t = 0; t < 6; ++t) {
    m(t, 0) = t;
    m(t, 1) = 10 + t;
  }
  Var y = ag::frame(ag::constant(m), 3, 2);
  ASSERT_EQ(y.rows(), 2);
  ASSERT_EQ(y.cols(), 6);
  // Column index is channel * kernel + tap.
  EXPECT_EQ(y.value()(1, 0), 2.0);
  EXPECT_EQ(y.value()(1, 2), 4.0);
  EXPECT_EQ(y.value()(1, 3), 12.0);
}

TEST_F(AutogradOps, Reductions) {
  Var a = leaf(6, 3), b = leaf(6, 3);
  auto f = [&] { return ag::add(ag::mean_all(ag::mul(a, a)), contract(ag::row_dot(a, b))); };
  auto r = grad_check(f, {{"a", &a}, {"b", &b}});
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST_F(AutogradOps, DropoutUsesScaledMask) {
  Var x = ag::leaf(Matrix::Ones(50, 40));
  std::mt19937_64 drng(5);
  Var y = ag::dropout(x, 0.5, drng);
  for (ag::Index i = 0; i < y.value().size(); ++i) {
    const double v = y.value().data()[i];
    EXPECT_TRUE(v == 0.0 || v == 2.0);
  }
  ag::backward(ag::sum_all(y));
  EXPECT_EQ(x.grad(), y.value());
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  Var x = ag::leaf(Matrix::Constant(1, 1, 3.0));
  Var y = ag::mul(x, x);             // x^2
  Var z = ag::add(ag::mul(y, x), y);  // x^3 + x^2
  ag::backward(z);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 3 * 9.0 + 2 * 3.0);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Var x = ag::leaf(Matrix::Constant(2, 2, 1.0));
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ag::grad_enabled());
    Var y = ag::sum_all(ag::mul(x, x));
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(ag::grad_enabled());
}

TEST(Autograd, FrozenLeafGetsNoGradient) {
  Var x = ag::leaf(Matrix::Constant(2, 2, 1.0), false);
  Var w = ag::leaf(Matrix::Constant(2, 2, 2.0));
  ag::backward(ag::sum_all(ag::mul(x, w)));
  EXPECT_EQ(x.grad().size(), 0);
  EXPECT_EQ(w.grad(), Matrix::Ones(2, 2));
}

TEST(Autograd, ShapeErrors) {
  Var a = ag::constant(Matrix::Ones(2, 3));
  Var b = ag::constant(Matrix::Ones(3, 2));
  EXPECT_THROW(ag::add(a, b), ShapeError);
  EXPECT_THROW(ag::matmul(a, a), ShapeError);
  EXPECT_THROW(ag::frame(a, 5, 1), ShapeError);
  EXPECT_THROW(ag::backward(a), ShapeError);
}

TEST(Autograd, ConvOutputLength) {
  EXPECT_EQ(ag::conv_output_length(8000, 16, 8), 999);
  EXPECT_EQ(ag::conv_output_length(8000, 120, 60), 132);
  EXPECT_EQ(ag::conv_output_length(132, 15, 7), 17);
  EXPECT_EQ(ag::conv_output_length(17, 15, 7), 1);
  EXPECT_EQ(ag::conv_output_length(10, 16, 8), 0);
}

}  // namespace
}  // namespace neurosteer
