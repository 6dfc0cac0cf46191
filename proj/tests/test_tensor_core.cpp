#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gapnas/error.hpp"
#include "gapnas/grad_check.hpp"
#include "gapnas/grad_suite.hpp"
#include "gapnas/kernels.hpp"
#include "gapnas/ops.hpp"
#include "gapnas/rng.hpp"

namespace gapnas {
namespace {

Tensor vec(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

TEST(Primitives, ReluExample) {
  Tape tape;
  const Var y = ops::relu(tape.constant(vec({-1, 0, 2})));
  EXPECT_EQ(y.value().vec(), (std::vector<double>{0, 0, 2}));
}

TEST(Primitives, SoftmaxOfZerosIsUniform) {
  Tape tape;
  const Var y = ops::softmax(tape.constant(vec({0, 0, 0})));
  for (double v : y.value().vec()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Primitives, ConvImpulseSpreadsToNeighbours) {
  Tape tape;
  Tensor x({1, 1, 4, 4}, 0.0);
  x[1 * 4 + 1] = 1.0;
  const Var y = ops::conv2d(tape.constant(x), tape.constant(Tensor({1, 1, 3, 3}, 1.0)), {1, 1, 1});
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double expect = (std::abs(r - 1) <= 1 && std::abs(c - 1) <= 1) ? 1.0 : 0.0;
      EXPECT_EQ(y.value()[static_cast<std::size_t>(r * 4 + c)], expect) << r << "," << c;
    }
  }
}

TEST(Primitives, ShapeErrorNamesPrimitiveAndShapes) {
  Tape tape;
  try {
    ops::add(tape.constant(Tensor({2, 3})), tape.constant(Tensor({3, 2})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3, 2]"), std::string::npos) << msg;
  }
}

TEST(Backward, SumGivesOnes) {
  auto x = make_param("x", vec({0.5, -1, 3}));
  Tape tape;
  tape.watch(x);
  const auto grads = tape.backward(ops::sum(tape.param(x)));
  EXPECT_EQ(grads.of(x).vec(), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, ProductRule) {
  auto x = make_param("x", Tensor::scalar(2.0));
  auto y = make_param("y", Tensor::scalar(3.0));
  Tape tape;
  tape.watch({x, y});
  const auto grads = tape.backward(ops::mul(tape.param(x), tape.param(y)));
  EXPECT_DOUBLE_EQ(grads.of(x).item(), 3.0);
  EXPECT_DOUBLE_EQ(grads.of(y).item(), 2.0);
}

TEST(Backward, UnusedLeafGetsZeros) {
  auto x = make_param("x", vec({1, 2}));
  auto unused = make_param("u", Tensor({2, 2}, 7.0));
  Tape tape;
  tape.watch({x, unused});
  const auto grads = tape.backward(ops::sum(tape.param(x)));
  EXPECT_EQ(grads.of(unused), Tensor({2, 2}, 0.0));
}

TEST(Backward, NonScalarLossRejected) {
  auto x = make_param("x", vec({1, 2}));
  Tape tape;
  tape.watch(x);
  EXPECT_THROW(tape.backward(ops::relu(tape.param(x))), ShapeError);
}

TEST(Backward, UnwatchedParamsGetNoSlot) {
  auto x = make_param("x", vec({1, 2}));
  auto frozen = make_param("f", vec({3, 4}));
  Tape tape;
  tape.watch(x);
  const Var fv = tape.param(frozen);
  const auto grads = tape.backward(ops::sum(ops::mul(tape.param(x), fv)));
  EXPECT_FALSE(fv.requires_grad());
  EXPECT_FALSE(grads.has(fv));
  EXPECT_EQ(grads.of(x).vec(), (std::vector<double>{3, 4}));
}

TEST(Backward, MeanTanhLinearMatchesFiniteDifferences) {
  Rng rng = derive_rng(1, "test");
  const Tensor z = randn({4, 3}, rng);
  const auto r = grad_check(
      [&](Tape& t, Var w) { return ops::mean(ops::tanh(ops::matmul(t.constant(z), w))); }, randn({3, 5}, rng, 0.5));
  EXPECT_TRUE(r.passed(1e-4)) << r.max_rel_error;
}

TEST(GradCheck, SquareSum) {
  const auto r = grad_check([](Tape&, Var x) { return ops::sum(ops::mul(x, x)); }, vec({1, 2}));
  EXPECT_NEAR(r.analytic[0], 2.0, 1e-12);
  EXPECT_NEAR(r.analytic[1], 4.0, 1e-12);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, ReluAwayFromKink) {
  const auto r = grad_check([](Tape&, Var x) { return ops::sum(ops::relu(x)); }, vec({-1.5, 0.3, 2.0, -0.2}));
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, ConstantFunction) {
  const auto r = grad_check([](Tape& t, Var) { return t.constant(Tensor::scalar(4.0)); }, vec({1, 2, 3}));
  EXPECT_EQ(r.max_rel_error, 0.0);
  for (double v : r.analytic.vec()) EXPECT_EQ(v, 0.0);
  for (double v : r.numeric.vec()) EXPECT_EQ(v, 0.0);
}

TEST(GradCheck, NonFiniteReportedWithIndex) {
  const auto r = grad_check(
      // Finite value, but d/dx1 of tanh(inf * x1) evaluates to 0 * inf.
      [](Tape& t, Var x) { return ops::sum(ops::tanh(ops::mul(x, t.constant(vec({1.0, INFINITY, 1.0}))))); },
      vec({0.5, 1, 0.25}));
  EXPECT_FALSE(r.finite);
  EXPECT_FALSE(r.passed(1e-4));
  EXPECT_EQ(r.nonfinite_index, 1u);
}

// Every primitive against central differences at 20 random points.
TEST(GradCheck, EveryPrimitiveAtTwentyPoints) {
  const auto names = primitive_check_names();
  for (const char* required : {"add", "sub", "mul", "scale", "matmul", "conv2d", "conv2d_separable", "conv2d_transpose",
                               "upsample_nearest", "upsample_bilinear", "relu", "leaky_relu", "tanh", "sigmoid",
                               "softplus", "softmax", "batch_norm", "mean", "sum", "reshape", "concat"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), required), names.end()) << required;
  }
  for (const auto& name : names) {
    const SuiteCheck c = check_primitive(name, 20, 1e-4);
    EXPECT_TRUE(c.passed) << name << " error " << c.max_rel_error;
    EXPECT_EQ(c.points, 20);
  }
}

TEST(Properties, SoftmaxRowsSumToOneAndArePositive) {
  Rng rng = derive_rng(7, "softmax");
  for (int trial = 0; trial < 100; ++trial) {
    Tape tape;
    const Var y = ops::softmax(tape.constant(randn({3, 7}, rng, 10.0)));
    for (int row = 0; row < 3; ++row) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) {
        const double v = y.value()[static_cast<std::size_t>(row * 7 + j)];
        EXPECT_GT(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Properties, ConvTransposeIsAdjointOfConv) {
  Rng rng = derive_rng(3, "adjoint");
  for (const int stride : {1, 2}) {
    for (const int padding : {0, 1}) {
      Tape tape;
      const Tensor x = randn({2, 3, 7, 7}, rng);
      const Tensor w = randn({4, 3, 3, 3}, rng);
      const Var cx = ops::conv2d(tape.constant(x), tape.constant(w), {stride, padding, 1});
      const Tensor y = randn(cx.shape(), rng);
      const Var ty = ops::conv2d_transpose(tape.constant(y), tape.constant(w), stride, padding);
      ASSERT_EQ(ty.shape(), x.shape());
      EXPECT_NEAR(dot(cx.value(), y), dot(x, ty.value()), 1e-8);
    }
  }
}

TEST(Properties, ForwardAndBackwardAreDeterministic) {
  auto run = [] {
    Rng rng = derive_rng(11, "det");
    auto w = make_param("w", randn({3, 2, 3, 3}, rng));
    const Tensor x = randn({2, 2, 8, 8}, rng);
    Tape tape;
    tape.watch(w);
    const Var y = ops::upsample_bilinear(ops::relu(ops::conv2d(tape.constant(x), tape.param(w), {1, 1, 1})));
    const Var loss = ops::mean(ops::mul(y, y));
    return std::pair{loss.value(), tape.backward(loss).of(w)};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Properties, BatchNormTrainUpdatesRunningStatistics) {
  Tape tape;
  ops::BatchNormStats stats(1);
  const Tensor x({4, 1}, std::vector<double>{1, 2, 3, 4});
  ops::batch_norm(tape.constant(x), tape.constant(vec({1})), tape.constant(vec({0})), stats,
                  ops::BatchNormMode::kTrain);
  EXPECT_NEAR(stats.running_mean[0], 0.1 * 2.5, 1e-15);
  // unbiased variance of {1,2,3,4} is 5/3
  EXPECT_NEAR(stats.running_var[0], 0.9 + 0.1 * 5.0 / 3.0, 1e-15);
  ops::BatchNormStats frozen(1);
  ops::batch_norm(tape.constant(x), tape.constant(vec({1})), tape.constant(vec({0})), frozen,
                  ops::BatchNormMode::kTrainFrozen);
  EXPECT_EQ(frozen.running_mean[0], 0.0);
}

TEST(Properties, BilinearMatchesHalfPixelHandComputation) {
  Tape tape;
  const Var y = ops::upsample_bilinear(tape.constant(Tensor({1, 1, 1, 2}, std::vector<double>{0.0, 4.0})));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 4}));
  // Output x-coordinates map to source -0.25 (clamped to 0), 0.25, 0.75, 1.25 (clamped to 1).
  const std::vector<double> row{0.0, 1.0, 3.0, 4.0};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y.value()[static_cast<std::size_t>(r * 4 + c)], row[c]);
  }
}

// Serial reference kernels against the OpenMP versions.
class KernelBackends : public ::testing::Test {
 protected:
  void TearDown() override { kernels::set_backend(kernels::Backend::kOpenMP); }
};

TEST_F(KernelBackends, OpenMPMatchesSerial) {
  auto run = [](kernels::Backend backend) {
    kernels::set_backend(backend);
    Rng r = derive_rng(5, "kernels");
    auto w = make_param("w", randn({8, 4, 3, 3}, r));
    auto wt = make_param("wt", randn({8, 4, 2, 2}, r));
    auto m = make_param("m", randn({64, 48}, r));
    const Tensor x = randn({4, 4, 16, 16}, r);
    Tape tape;
    tape.watch({w, wt, m});
    Var h = ops::conv2d(tape.constant(x), tape.param(w), {1, 1, 1});
    h = ops::conv2d_transpose(ops::relu(h), tape.param(wt));
    h = ops::add(ops::upsample_nearest(h), ops::upsample_bilinear(h));
    const Var mm = ops::matmul(ops::reshape(h, {4 * 4 * 64, 64}), tape.param(m));
    const Var loss = ops::mean(ops::mul(mm, mm));
    const auto g = tape.backward(loss);
    return std::vector<Tensor>{loss.value(), g.of(w), g.of(wt), g.of(m)};
  };
  const auto s = run(kernels::Backend::kSerial);
  const auto p = run(kernels::Backend::kOpenMP);
  // Serial transposed convolution scatters, OpenMP gathers: same terms, different order.
  for (std::size_t i = 0; i < s.size(); ++i) {
    double scale = 1.0;
    for (double v : s[i].vec()) scale = std::max(scale, std::abs(v));
    EXPECT_LT(max_abs_diff(s[i], p[i]) / scale, 1e-12) << "output " << i;
  }
}

TEST_F(KernelBackends, GemmAndUpsamplingAreBitIdentical) {
  Rng rng = derive_rng(9, "gemm");
  const int m = 37, n = 41, k = 29;
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      const Tensor a = randn(ta ? Shape{k, m} : Shape{m, k}, rng);
      const Tensor b = randn(tb ? Shape{n, k} : Shape{k, n}, rng);
      const kernels::GemmArgs args{ta, tb, m, n, k, false};
      std::vector<double> cs(static_cast<std::size_t>(m * n)), cp(cs.size());
      kernels::serial::gemm(args, a.data(), b.data(), cs);
      kernels::omp::gemm(args, a.data(), b.data(), cp);
      EXPECT_EQ(cs, cp) << ta << tb;
    }
  }
  const Tensor img = randn({6, 7, 9}, rng);
  std::vector<double> s(6 * 14 * 18), p(s.size());
  kernels::serial::upsample_bilinear2x(6, 7, 9, img.data(), s);
  kernels::omp::upsample_bilinear2x(6, 7, 9, img.data(), p);
  EXPECT_EQ(s, p);
  kernels::serial::upsample_nearest2x(6, 7, 9, img.data(), s);
  kernels::omp::upsample_nearest2x(6, 7, 9, img.data(), p);
  EXPECT_EQ(s, p);

  kernels::ConvGeometry g{2, 4, 9, 9, 6, 3, 2, 1, 2};
  const Tensor x = randn({static_cast<std::int64_t>(g.input_size())}, rng);
  const Tensor w = randn({static_cast<std::int64_t>(g.weight_size())}, rng);
  std::vector<double> ys(g.output_size()), yp(ys.size());
  kernels::serial::conv2d_forward(g, x.data(), w.data(), ys);
  kernels::omp::conv2d_forward(g, x.data(), w.data(), yp);
  EXPECT_EQ(ys, yp);
  std::vector<double> gws(g.weight_size(), 0.0), gwp(gws.size(), 0.0);
  kernels::serial::conv2d_backward_weight(g, x.data(), ys, gws);
  kernels::omp::conv2d_backward_weight(g, x.data(), ys, gwp);
  EXPECT_EQ(gws, gwp);
}

}  // namespace
}  // namespace gapnas
