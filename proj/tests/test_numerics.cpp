#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "imv/alignment.hpp"
#include "imv/monotonic.hpp"
#include "imv/numerics/gradcheck.hpp"
#include "imv/numerics/ops.hpp"
#include "imv/numerics/tape.hpp"

using namespace imv;

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = u(rng);
  return m;
}

// Plain triple loop, independent of imv::matmul.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST(Matrix, ShapeAndAccess) {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.shape_string(), "2x3");
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW((Matrix{{1, 2}, {3}}), ShapeError);
}

TEST(Matrix, ArangeIsIndexColumn) {
  const Matrix p = Matrix::arange(4);
  ASSERT_EQ(p.cols(), 1u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p[i], static_cast<double>(i));
}

TEST(Ops, MatmulMatchesNaive) {
  std::mt19937_64 rng(3);
  const Matrix a = random_matrix(rng, 3, 5), b = random_matrix(rng, 5, 2);
  EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-14);
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Ops, SoftmaxColumnsAndRowsSumToOne) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(rng, 5, 7, -50.0, 50.0);
    const Matrix c = softmax_cols(x), r = softmax_rows(x);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double s = 0;
      for (std::size_t i = 0; i < x.rows(); ++i) s += c(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < x.cols(); ++j) s += r(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Ops, SoftmaxSurvivesHugeLogits) {
  const Matrix c = softmax_cols(Matrix{{1000.0}, {999.0}});
  EXPECT_TRUE(c.all_finite());
  EXPECT_NEAR(c[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Ops, CumsumAndDiff) {
  const Matrix x = Matrix::column({1, 2, 3, 4});
  EXPECT_EQ(cumsum(x), Matrix::column({1, 3, 6, 10}));
  EXPECT_EQ(diff_rows(x), Matrix::column({1, 1, 1}));
}

TEST(Tape, IdentityGradient) {
  const std::vector<Matrix> in = {Matrix{{3.0}}};
  const auto fb = ad::forward_backward([](Tape&, std::span<const Var> v) { return v[0]; }, in);
  EXPECT_EQ(fb.output, Matrix{{3.0}});
  EXPECT_EQ(fb.gradients[0], Matrix{{1.0}});
}

TEST(Tape, SumOfSoftmaxHasZeroGradient) {
  std::mt19937_64 rng(5);
  const std::vector<Matrix> in = {random_matrix(rng, 4, 3, -3, 3)};
  const auto fb = ad::forward_backward([](Tape&, std::span<const Var> v) { return sum(softmax_cols(v[0])); }, in);
  for (double g : fb.gradients[0].values()) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(Tape, CumsumBackwardIsReversedCumsum) {
  Tape tape;
  Var x = tape.variable(Matrix::column({0.3, -1.0, 2.0, 5.0}));
  Var y = cumsum(x);
  const Matrix seed = Matrix::column({1.0, 2.0, 3.0, 4.0});
  tape.backward(y, seed);
  // reversed cumulative sum of the seed: [10, 9, 7, 4]
  EXPECT_EQ(x.grad(), Matrix::column({10.0, 9.0, 7.0, 4.0}));
}

TEST(Tape, NonFiniteIntermediateCarriesNodeIndex) {
  Tape tape;
  Var x = tape.variable(Matrix{{-1.0}});
  try {
    (void)log(x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.node(), 1u);
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
}

TEST(Tape, ForwardBackwardRejectsNonFiniteInput) {
  const std::vector<Matrix> in = {Matrix{{NAN}}};
  EXPECT_THROW(ad::forward_backward([](Tape&, std::span<const Var> v) { return v[0]; }, in), NumericError);
}

TEST(Tape, GradientsKeepInputShapes) {
  std::mt19937_64 rng(6);
  const std::vector<Matrix> in = {random_matrix(rng, 3, 4), random_matrix(rng, 4, 2)};
  const auto fb =
      ad::forward_backward([](Tape&, std::span<const Var> v) { return square(matmul(v[0], v[1])); }, in);
  ASSERT_EQ(fb.gradients.size(), 2u);
  EXPECT_TRUE(fb.gradients[0].same_shape(in[0]));
  EXPECT_TRUE(fb.gradients[1].same_shape(in[1]));
}

TEST(Tape, SmaLossOverAlignmentMatchesCentralDifferences) {
  // sma_loss(compute_imv(alpha)) for a random 4x6 alpha, differenced by hand.
  std::mt19937_64 rng(7);
  const Matrix alpha = softmax_cols(random_matrix(rng, 4, 6, -2.0, 2.0));
  const auto f = [](Tape&, std::span<const Var> v) { return kernels::sma_loss(kernels::imv(v[0]), 4, SmaWeights{}); };
  const auto fb = ad::forward_backward(f, std::vector<Matrix>{alpha});
  const double h = 1e-5;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    Matrix plus = alpha, minus = alpha;
    plus[k] += h;
    minus[k] -= h;
    const double numeric = (kernels::sma_loss(kernels::imv(plus), 4, SmaWeights{})[0] -
                            kernels::sma_loss(kernels::imv(minus), 4, SmaWeights{})[0]) /
                           (2 * h);
    const double a = fb.gradients[0][k];
    EXPECT_LE(std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}), 1e-4) << "entry " << k;
  }
}

TEST(GradCheck, SquareAtTwo) {
  const auto r = gradcheck("square", [](Tape&, std::span<const Var> v) { return square(v[0]); }, {Matrix{{2.0}}});
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.checked_count, 1u);
  EXPECT_LT(r.errors[0][0], 1e-9);
}

TEST(GradCheck, ReluAtZeroIsExcludedNotFailed) {
  const auto r = gradcheck("relu", [](Tape&, std::span<const Var> v) { return relu(v[0]); },
                           {Matrix::column({0.0, 0.5, -0.5})});
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.excluded_count, 1u);
  EXPECT_EQ(r.excluded[0][0], 1.0);
  EXPECT_EQ(r.checked_count, 2u);
}

TEST(GradCheck, ClampAndAbsKinksExcluded) {
  const auto rc = gradcheck("clamp", [](Tape&, std::span<const Var> v) { return clamp(v[0], 0.0, 1.0); },
                            {Matrix::column({0.0, 1.0, 0.5})});
  EXPECT_TRUE(rc.pass);
  EXPECT_EQ(rc.excluded_count, 2u);
  const auto ra = gradcheck("abs", [](Tape&, std::span<const Var> v) { return abs(v[0]); }, {Matrix{{0.0}}});
  EXPECT_EQ(ra.excluded_count, 1u);
}

TEST(GradCheck, DetectsWrongGradient) {
  // Backward claims d/dx = 1 for x^2.
  const auto broken = [](Tape& t, std::span<const Var> v) {
    const std::size_t id = v[0].id();
    return t.push("broken_square", imv::square(v[0].value()), true,
                  [id](Tape& tape, const Matrix& g) { tape.accumulate(id, g); });
  };
  const auto r = gradcheck("broken", broken, {Matrix{{2.0}}});
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.max_relative_error, 0.5);
}

TEST(GradCheck, PassFlagMatchesTolerance) {
  const auto r = gradcheck("exp", [](Tape&, std::span<const Var> v) { return exp(v[0]); }, {Matrix{{0.3}}});
  EXPECT_EQ(r.pass, r.max_relative_error <= r.tolerance);
}

TEST(GradCheck, NonDeterministicFunctionThrows) {
  int calls = 0;
  const auto flaky = [&calls](Tape&, std::span<const Var> v) { return v[0] * static_cast<double>(++calls); };
  EXPECT_THROW(gradcheck("flaky", flaky, {Matrix{{1.0}}}), NumericError);
}

TEST(GradCheck, RejectsNonPositiveStep) {
  GradCheckOptions o;
  o.step = 0.0;
  EXPECT_THROW(gradcheck("x", [](Tape&, std::span<const Var> v) { return v[0]; }, {Matrix{{1.0}}}, o),
               ContractError);
}

TEST(GradCheck, EveryTapedPrimitive) {
  std::mt19937_64 rng(8);
  const Matrix a = random_matrix(rng, 3, 4, 0.2, 1.5), b = random_matrix(rng, 3, 4, 0.2, 1.5);
  const Matrix col = random_matrix(rng, 3, 1, -1, 1), row = random_matrix(rng, 1, 4, -1, 1);
  const Matrix s = Matrix{{1.7}};
  using F = Var (*)(Tape&, std::span<const Var>);
  const std::vector<std::pair<const char*, F>> unary = {
      {"transpose", [](Tape&, std::span<const Var> v) { return transpose(v[0]); }},
      {"scale", [](Tape&, std::span<const Var> v) { return v[0] * -2.5; }},
      {"exp", [](Tape&, std::span<const Var> v) { return exp(v[0]); }},
      {"log", [](Tape&, std::span<const Var> v) { return log(v[0]); }},
      {"softplus", [](Tape&, std::span<const Var> v) { return softplus(v[0]); }},
      {"square", [](Tape&, std::span<const Var> v) { return square(v[0]); }},
      {"softmax_cols", [](Tape&, std::span<const Var> v) { return softmax_cols(v[0]); }},
      {"softmax_rows", [](Tape&, std::span<const Var> v) { return softmax_rows(v[0]); }},
      {"mean", [](Tape&, std::span<const Var> v) { return mean(v[0]); }},
      {"cumsum", [](Tape&, std::span<const Var> v) { return cumsum(v[0]); }},
      {"diff_rows", [](Tape&, std::span<const Var> v) { return diff_rows(v[0]); }},
      {"slice_rows", [](Tape&, std::span<const Var> v) { return slice_rows(v[0], 1, 2); }},
      {"shift_rows", [](Tape&, std::span<const Var> v) { return shift_rows(v[0], 1); }},
      {"vcat", [](Tape&, std::span<const Var> v) { return vcat(v[0], v[0] * 2.0); }},
      {"hcat", [](Tape&, std::span<const Var> v) { return hcat(v[0], exp(v[0])); }},
  };
  for (const auto& [name, f] : unary) {
    const auto r = gradcheck(name, f, {a});
    EXPECT_TRUE(r.pass) << name << " max rel err " << r.max_relative_error;
  }
  const std::vector<std::pair<const char*, F>> binary = {
      {"add", [](Tape&, std::span<const Var> v) { return v[0] + v[1]; }},
      {"sub", [](Tape&, std::span<const Var> v) { return v[0] - v[1]; }},
      {"mul", [](Tape&, std::span<const Var> v) { return mul(v[0], v[1]); }},
      {"matmul", [](Tape&, std::span<const Var> v) { return matmul(v[0], transpose(v[1])); }},
  };
  for (const auto& [name, f] : binary) {
    const auto r = gradcheck(name, f, {a, b});
    EXPECT_TRUE(r.pass) << name << " max rel err " << r.max_relative_error;
  }
  EXPECT_TRUE(gradcheck("add_row", [](Tape&, std::span<const Var> v) { return add_row(v[0], v[1]); }, {a, row}).pass);
  EXPECT_TRUE(gradcheck("scale_by", [](Tape&, std::span<const Var> v) { return scale_by(v[0], v[1]); }, {a, s}).pass);
  EXPECT_TRUE(gradcheck("divide_by", [](Tape&, std::span<const Var> v) { return divide_by(v[0], v[1]); }, {a, s}).pass);
  EXPECT_TRUE(
      gradcheck("outer_sub", [](Tape&, std::span<const Var> v) { return outer_sub(v[0], v[1]); }, {col, col}).pass);
  const std::vector<std::size_t> ids = {2, 0, 2};
  EXPECT_TRUE(gradcheck("gather_rows", [&](Tape&, std::span<const Var> v) { return gather_rows(v[0], ids); }, {a}).pass);
}
