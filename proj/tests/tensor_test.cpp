#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "latentcodec/ops.hpp"
#include "support/gradcheck_cases.hpp"
#include "support/test_util.hpp"

using namespace latentcodec;
using latentcodec::testing::random_tensor;
using latentcodec::testing::weighted_sum;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(Tensor::scalar(3).shape(), Shape{});
}

TEST(Ops, MatmulHandArithmetic) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {1, 1});
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 3.0);
  EXPECT_EQ(c[1], 7.0);
  EXPECT_THROW(matmul(a, Tensor({3, 1}, 0.0)), ShapeError);
}

TEST(Ops, TanhOfZeroIsZero) {
  auto y = tanh(Tensor::zeros({3, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Ops, ConvOfOnesMatchesDirectSummation) {
  auto y = conv2d(Tensor::ones({1, 5, 5}), Tensor::ones({1, 1, 3, 3}), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 9.0);
}

// Direct definition of a strided, padded convolution.
static std::vector<double> naive_conv(const Tensor& x, const Tensor& w, std::size_t s, std::size_t p) {
  const long C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(0), K = w.dim(2);
  const long Ho = (H + 2 * (long)p - K) / (long)s + 1, Wo = (W + 2 * (long)p - K) / (long)s + 1;
  std::vector<double> out(O * Ho * Wo, 0.0);
  for (long o = 0; o < O; ++o)
    for (long oy = 0; oy < Ho; ++oy)
      for (long ox = 0; ox < Wo; ++ox)
        for (long c = 0; c < C; ++c)
          for (long ky = 0; ky < K; ++ky)
            for (long kx = 0; kx < K; ++kx) {
              long iy = oy * (long)s + ky - (long)p, ix = ox * (long)s + kx - (long)p;
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              out[(o * Ho + oy) * Wo + ox] += w[((o * C + c) * K + ky) * K + kx] * x[(c * H + iy) * W + ix];
            }
  return out;
}

TEST(Ops, ConvMatchesNaiveLoopForStridesAndPadding) {
  std::mt19937_64 rng(1);
  for (std::size_t s : {1u, 2u, 3u})
    for (std::size_t p : {0u, 1u, 2u}) {
      auto x = random_tensor({2, 7, 6}, rng);
      auto w = random_tensor({3, 2, 3, 3}, rng);
      auto y = conv2d(x, w, s, p);
      auto ref = naive_conv(x, w, s, p);
      ASSERT_EQ(y.numel(), ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    }
}

TEST(Ops, TransposeConvIsAdjointOfConv) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t s = 1 + trial % 2, p = trial % 3 == 0 ? 0 : 1;
    auto x = random_tensor({2, 8, 8}, rng);
    auto k = random_tensor({3, 2, 4, 4}, rng);
    auto cx = conv2d(x, k, s, p);
    auto y = random_tensor(cx.shape(), rng);
    auto ty = conv_transpose2d(y, k, s, p);
    ASSERT_EQ(ty.shape(), x.shape()) << "s=" << s << " p=" << p;
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * ty[i];
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Ops, TransposeConvDoublesSpatialSize) {
  auto y = conv_transpose2d(Tensor::ones({4, 4, 4}), Tensor::ones({4, 2, 4, 4}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 8, 8}));
}

TEST(Ops, BlurAndPoolShapes) {
  EXPECT_EQ(gaussian_blur(Tensor::ones({1, 32, 32}), 11, 1.5).shape(), (Shape{1, 22, 22}));
  auto b = gaussian_blur(Tensor::ones({1, 12, 12}), 11, 1.5);
  for (double v : b.data()) EXPECT_NEAR(v, 1.0, 1e-12);
  EXPECT_EQ(avg_pool2(Tensor::ones({2, 7, 8})).shape(), (Shape{2, 3, 4}));
  EXPECT_THROW(gaussian_blur(Tensor::ones({1, 8, 8}), 11, 1.5), ShapeError);
}

TEST(Ops, ElementwiseShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::ones({2}), Tensor::ones({3})), ShapeError);
  EXPECT_THROW(reshape(Tensor::ones({2, 3}), {4}), ShapeError);
}

TEST(Ops, NonFiniteOutputIsAnError) {
  EXPECT_THROW(sqrt(Tensor::vector({-1.0})), NumericError);
  EXPECT_THROW(div(Tensor::vector({1.0}), Tensor::vector({0.0})), NumericError);
  set_finite_checks(false);
  EXPECT_NO_THROW(sqrt(Tensor::vector({-1.0})));
  set_finite_checks(true);
}

TEST(Ops, ForwardIsDeterministic) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 8, 8}, rng);
  auto w = random_tensor({2, 4, 4, 4}, rng);
  auto a = conv_transpose2d(x, w, 2, 1), b = conv_transpose2d(x, w, 2, 1);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Ops, DispatchMatchesDirectCall) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  OpAttrs attrs;
  attrs.shape = {4};
  EXPECT_EQ(forward_op(OpKind::reshape, {a}, attrs).shape(), Shape{4});
  EXPECT_EQ(forward_op(OpKind::sum, {a}).item(), 10.0);
  EXPECT_THROW(forward_op(OpKind::add, {a}), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  auto z = Tensor::variable({2, 3}, {1, 2, 3, 4, 5, 6});
  auto g = backward(sum(z));
  for (double v : g[z].data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, SumOfSquaresGivesTwiceInput) {
  auto z = Tensor::variable({2}, {1, 2});
  auto g = backward(sum(square(z)));
  EXPECT_EQ(g[z][0], 2.0);
  EXPECT_EQ(g[z][1], 4.0);
}

TEST(Backward, RejectsNonScalarDetachedAndConsumed) {
  auto z = Tensor::variable({2}, {1, 2});
  EXPECT_THROW(backward(square(z)), GraphError);
  EXPECT_THROW(backward(sum(Tensor::ones({2}))), GraphError);
  auto loss = sum(square(z));
  backward(loss);
  EXPECT_THROW(backward(loss), GraphError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  auto z = Tensor::variable({1}, {3.0});
  auto y = mul(z, z);
  auto g = backward(sum(add(y, y)));  // 2 z^2 -> 4 z
  EXPECT_EQ(g[z][0], 12.0);
}

TEST(Backward, StraightThroughPassesGradientUnchanged) {
  auto z = Tensor::variable({3}, {0.1, -0.4, 0.7});
  std::vector<double> q{0.0, -0.5, 1.0};
  auto st = straight_through(z, q);
  EXPECT_EQ(st[2], 1.0);
  auto g = backward(weighted_sum(st, 9));
  auto ref = Tensor::variable({3}, {0.1, -0.4, 0.7});
  auto gr = backward(weighted_sum(ref, 9));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g[z][i], gr[ref][i]);
}

TEST(GradCheck, ClosedFormExamples) {
  auto sq = [](const Tensor& x) { return sum(square(x)); };
  EXPECT_LT(grad_check(sq, Tensor::vector({1.0, -1.0}), 1e-5), 1e-6);
  auto th = [](const Tensor& x) { return sum(tanh(x)); };
  EXPECT_LT(grad_check(th, Tensor::zeros({4}), 1e-5), 1e-6);
}

TEST(GradCheck, EveryOpAtTenRandomPoints) {
  for (const auto& c : latentcodec::testing::op_grad_cases()) {
    std::mt19937_64 rng(std::hash<std::string>{}(c.name));
    auto f = c.make(rng);
    for (int trial = 0; trial < 10; ++trial) {
      auto point = random_tensor(c.point_shape, rng, c.lo, c.hi);
      EXPECT_LT(grad_check(f, point, c.eps), 1e-4) << c.name << " trial " << trial;
    }
  }
}

TEST(GradCheck, TwoLayerNetMseMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  auto w1 = random_tensor({6, 4}, rng), w2 = random_tensor({9, 6}, rng);
  auto target = random_tensor({9, 1}, rng);
  auto f = [&](const Tensor& z) {
    auto h = leaky_relu(matmul(w1, reshape(z, {4, 1})), 0.2);
    auto g = tanh(matmul(w2, h));
    return mean(square(sub(g, target)));
  };
  EXPECT_LT(grad_check(f, random_tensor({4}, rng), 1e-5), 1e-5);
}
