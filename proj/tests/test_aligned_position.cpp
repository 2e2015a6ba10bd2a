#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "imv/aligned_position.hpp"

using namespace imv;

namespace {

// gamma and e evaluated with plain loops.
std::vector<double> direct_positions(const std::vector<double>& pi, std::size_t t1, double s2) {
  std::vector<double> e(t1);
  for (std::size_t i = 0; i < t1; ++i) {
    double z = 0, acc = 0;
    for (std::size_t n = 0; n < pi.size(); ++n) {
      const double w = std::exp(-(static_cast<double>(i) - pi[n]) * (static_cast<double>(i) - pi[n]) / s2);
      z += w;
      acc += w * static_cast<double>(n);
    }
    e[i] = acc / z;
  }
  return e;
}

std::vector<std::size_t> random_durations(std::mt19937_64& rng, std::size_t n, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> d(lo, hi);
  std::vector<std::size_t> out(n);
  for (auto& x : out) x = d(rng);
  return out;
}

struct RoundTrip {
  bool within_span = true;
  double pi_error = 0.0;
};

RoundTrip roundtrip(const std::vector<std::size_t>& d) {
  const AlignmentMatrix hard = duration_alignment(d);
  const Imv pi = compute_imv(hard);
  const AlignedPositions e = extract_positions(pi, {0.01});
  RoundTrip r;
  std::size_t start = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    r.within_span = r.within_span && e[i] >= static_cast<double>(start) - 1e-9 &&
                    e[i] <= static_cast<double>(start + d[i] - 1) + 1e-9;
    start += d[i];
  }
  const Imv back = compute_imv(align_from_positions(e, hard.t2(), {0.01}));
  r.pi_error = max_abs_diff(back.pi, pi.pi);
  return r;
}

}  // namespace

TEST(DensityMatrix, SmallSigmaGivesIdentity) {
  const DensityMatrix g = density_matrix(Imv({0.0, 1.0}, 2), {0.01});
  EXPECT_LT(max_abs_diff(g.gamma, Matrix::identity(2)), 1e-10);
}

TEST(DensityMatrix, ConstantImvGivesUniformRows) {
  const DensityMatrix g = density_matrix(Imv({1.3, 1.3, 1.3, 1.3}, 3), {0.5});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t n = 0; n < 4; ++n) EXPECT_NEAR(g.gamma(i, n), 0.25, 1e-15);
}

TEST(DensityMatrix, RowsSumToOne) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 6.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix pi(7, 1);
    for (std::size_t j = 0; j < 7; ++j) pi[j] = u(rng);
    const Matrix g = density_matrix(Imv(pi, 5), {0.8}).gamma;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0;
      for (std::size_t n = 0; n < g.cols(); ++n) s += g(i, n);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(ExtractPositions, DiagonalImv) {
  const AlignedPositions e = extract_positions(Imv({0.0, 1.0, 2.0, 3.0}, 4), {0.01});
  EXPECT_LT(max_abs_diff(e.e, Matrix::column({0, 1, 2, 3})), 1e-10);
}

TEST(ExtractPositions, TwoFramesPerToken) {
  const AlignedPositions e = extract_positions(Imv({0.0, 0.0, 1.0, 1.0}, 2), {0.01});
  EXPECT_NEAR(e[0], 0.5, 1e-10);
  EXPECT_NEAR(e[1], 2.5, 1e-10);
}

TEST(ExtractPositions, SingleOutputStepGivesZero) {
  const AlignedPositions e = extract_positions(Imv({0.4}, 3), {1.0});
  EXPECT_EQ(e.e, Matrix(3, 1));
}

TEST(ExtractPositions, MatchesDirectEvaluation) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> pi(6);
    for (double& x : pi) x = u(rng);
    const auto want = direct_positions(pi, 5, 0.7);
    const AlignedPositions e = extract_positions(Imv(Matrix::column(pi), 5), {0.7});
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(e[i], want[i], 1e-12);
  }
}

TEST(ExtractPositions, MonotoneImvGivesOrderedPositions) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix pi(10, 1);
    for (std::size_t j = 1; j < 10; ++j) pi[j] = std::min(5.0, pi[j - 1] + u(rng));
    const AlignedPositions e = extract_positions(Imv(pi, 6), {0.3 + u(rng)});
    for (double d : e.deltas()) EXPECT_GE(d, -1e-9);
    EXPECT_GE(e[0], 0.0);
  }
}

TEST(ApLoss, EqualInputsGiveZero) {
  const std::vector<double> x = {0.5, 1.0, 2.0};
  EXPECT_EQ(ap_loss(x, x), 0.0);
  const std::vector<double> z = {0.0};
  EXPECT_EQ(ap_loss(z, z), 0.0);
}

TEST(ApLoss, HandEvaluatedUnitLogGap) {
  const double eps = 1e-6;
  const std::vector<double> pred = {std::exp(1.0) - eps}, target = {1.0 - eps};
  EXPECT_NEAR(ap_loss(pred, target, {eps}), 1.0, 1e-12);
}

TEST(ApLoss, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(4), b(4);
    for (double& x : a) x = u(rng);
    for (double& x : b) x = u(rng);
    EXPECT_GE(ap_loss(a, b), 0.0);
  }
}

TEST(ApLoss, Errors) {
  const std::vector<double> neg = {-0.1}, one = {1.0}, two = {1.0, 1.0};
  EXPECT_THROW(ap_loss(neg, one), ContractError);
  EXPECT_THROW(ap_loss(one, neg), ContractError);
  EXPECT_THROW(ap_loss(one, two), ShapeError);
  EXPECT_THROW(ap_loss(one, one, {0.0}), ContractError);
}

TEST(AlignFromPositions, SmallSigmaGivesIdentity) {
  const AlignmentMatrix a = align_from_positions(AlignedPositions{0.0, 1.0}, 2, {0.01});
  EXPECT_LT(max_abs_diff(a.matrix(), Matrix::identity(2)), 1e-10);
}

TEST(AlignFromPositions, TiedPositionsShareWeight) {
  const AlignmentMatrix a = align_from_positions(AlignedPositions{1.5, 1.5, 4.0}, 5, {1.0});
  for (std::size_t j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(a(0, j), a(1, j));
}

TEST(AlignFromPositions, ColumnsNormalizedAndErrors) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 10.0);
  Matrix e(5, 1);
  for (std::size_t i = 0; i < 5; ++i) e[i] = u(rng);
  EXPECT_NO_THROW(align_from_positions(AlignedPositions(e), 9, {0.5}));
  EXPECT_THROW(align_from_positions(AlignedPositions(e), 0), ContractError);
  EXPECT_THROW(align_from_positions(AlignedPositions{NAN, 1.0}, 2), ContractError);
}

TEST(InferT2, Examples) {
  EXPECT_EQ(infer_t2(AlignedPositions{2.0, 7.0}), 12u);
  EXPECT_EQ(infer_t2(AlignedPositions{0.0, 1.0}), 2u);
  EXPECT_EQ(infer_t2(AlignedPositions{3.0, 3.0}), 3u);
  EXPECT_EQ(infer_t2(AlignedPositions{3.0, 0.0}), 1u);
  EXPECT_THROW(infer_t2(AlignedPositions{1.0}), ContractError);
}

TEST(ScalePositions, Examples) {
  const AlignedPositions e{2.0, 7.0};
  EXPECT_EQ(scale_positions(e, 1.0).e, e.e);
  const AlignedPositions half = scale_positions(e, 0.5);
  EXPECT_EQ(half.e, Matrix::column({1.0, 3.5}));
  EXPECT_EQ(infer_t2(half), 6u);
  const AlignedPositions up = scale_positions(AlignedPositions{0.0, 5.0}, 1.2);
  EXPECT_NEAR(up[1], 6.0, 1e-15);
  EXPECT_EQ(infer_t2(up), 12u);
  EXPECT_THROW(scale_positions(e, 0.0), ContractError);
  EXPECT_THROW(scale_positions(e, -1.0), ContractError);
}

TEST(AlignedPositions, DeltasRoundTrip) {
  const std::vector<double> d = {1.0, 0.5, 2.0};
  const AlignedPositions e = AlignedPositions::from_deltas(d);
  EXPECT_EQ(e.e, Matrix::column({1.0, 1.5, 3.5}));
  EXPECT_EQ(e.deltas(), d);
}

TEST(RoundTrip, PositionsLandInsideTokenSpans) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    EXPECT_TRUE(roundtrip(random_durations(rng, 2 + trial % 7, 1, 4)).within_span);
  }
}

TEST(RoundTrip, ImvRecoveredWhenNeighbourDurationsDifferByAtMostOne) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> step(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> d = {1 + static_cast<std::size_t>(trial % 3)};
    for (std::size_t i = 1; i < 6; ++i) d.push_back(std::clamp<long>(static_cast<long>(d.back()) + step(rng), 1, 4));
    EXPECT_LT(roundtrip(d).pi_error, 0.1);
  }
}

TEST(RoundTrip, SymmetricKernelMisassignsFramesOfLongTokens) {
  // e = [1.5, 4]: frame 3 of the long token is nearer the next centre.
  EXPECT_NEAR(roundtrip({4, 1}).pi_error, 1.0, 1e-6);
  // e = [1, 3]: frame 2 sits exactly between both centres.
  EXPECT_NEAR(roundtrip({3, 1}).pi_error, 0.5, 1e-6);
}
