#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "imv/alignment.hpp"

using namespace imv;

namespace {

Matrix random_columns(std::mt19937_64& rng, std::size_t t1, std::size_t t2) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Matrix a(t1, t2);
  for (std::size_t j = 0; j < t2; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < t1; ++i) s += a(i, j) = u(rng);
    for (std::size_t i = 0; i < t1; ++i) a(i, j) /= s;
  }
  return a;
}

}  // namespace

TEST(ComputeImv, IdentityGivesIndices) {
  const Imv pi = compute_imv(AlignmentMatrix(Matrix::identity(2)));
  EXPECT_EQ(pi.pi, Matrix::column({0.0, 1.0}));
  EXPECT_EQ(pi.t1, 2u);
}

TEST(ComputeImv, UniformColumnsGiveMidpoint) {
  const Imv pi = compute_imv(AlignmentMatrix(Matrix(2, 3, 0.5)));
  EXPECT_EQ(pi.pi, Matrix::column({0.5, 0.5, 0.5}));
}

TEST(ComputeImv, HandEvaluatedThreeByTwo) {
  const Imv pi = compute_imv(AlignmentMatrix(Matrix{{0.25, 0.1}, {0.5, 0.2}, {0.25, 0.7}}));
  EXPECT_NEAR(pi[0], 1.0, 1e-15);
  EXPECT_NEAR(pi[1], 1.6, 1e-15);
}

TEST(ComputeImv, EntriesStayInInputRange) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Imv pi = compute_imv(AlignmentMatrix(random_columns(rng, 5, 7)));
    for (double v : pi.pi.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 4.0);
    }
  }
}

TEST(ComputeImv, RawMatrixToleranceIsLooserThanAlignmentMatrix) {
  Matrix a = Matrix::identity(2);
  a(0, 0) = 1.0005;  // column sum off by 5e-4
  EXPECT_THROW((void)AlignmentMatrix(a), ContractError);
  EXPECT_NO_THROW((void)compute_imv(a));
  a(0, 0) = 1.002;
  EXPECT_THROW((void)compute_imv(a), ContractError);
}

TEST(ComputeImv, IsLinearInAlpha) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_columns(rng, 4, 6), b = random_columns(rng, 4, 6);
    const double l = u(rng);
    const Imv mix = compute_imv(AlignmentMatrix(a * l + b * (1.0 - l)));
    const Matrix expected = compute_imv(AlignmentMatrix(a)).pi * l + compute_imv(AlignmentMatrix(b)).pi * (1.0 - l);
    EXPECT_LT(max_abs_diff(mix.pi, expected), 1e-12);
  }
}

TEST(AlignmentMatrix, RejectsBadColumns) {
  EXPECT_THROW(AlignmentMatrix(Matrix{{0.5, 1.0}, {0.4, 0.0}}), ContractError);
  EXPECT_THROW(AlignmentMatrix(Matrix{{1.5}, {-0.5}}), ContractError);
  EXPECT_THROW(AlignmentMatrix(Matrix(0, 0)), ContractError);
}

TEST(ValidateImv, SatisfiedConstraints) {
  const auto r = validate_imv(Imv({0.0, 0.5, 1.0}, 2));
  EXPECT_TRUE(r.monotone_continuous);
  EXPECT_TRUE(r.complete);
  EXPECT_TRUE(r.ok());
}

TEST(ValidateImv, NegativeStepReported) {
  const auto r = validate_imv(Imv({0.0, -1.0, 1.0}, 2));
  EXPECT_FALSE(r.monotone_continuous);
  ASSERT_FALSE(r.violations.empty());
  EXPECT_EQ(r.violations[0].index, 1u);
  EXPECT_EQ(r.violations[0].delta, -1.0);
}

TEST(ValidateImv, EndPastLastTokenIsIncomplete) {
  const auto r = validate_imv(Imv({0.0, 1.0, 1.5}, 2));
  EXPECT_TRUE(r.monotone_continuous);
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.end, 1.5);
}

TEST(ValidateImv, MonotoneFlagMatchesDeltas) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(6);
    for (double& x : v) x = u(rng);
    const Imv pi(Matrix::column(v), 4);
    const auto d = pi.deltas();
    const bool expected = std::all_of(d.begin(), d.end(), [](double x) { return x >= -1e-6 && x <= 1 + 1e-6; });
    EXPECT_EQ(validate_imv(pi).monotone_continuous, expected);
  }
}

TEST(ValidateImv, ShortImvRejected) { EXPECT_THROW(validate_imv(Imv({0.0}, 1)), ContractError); }

TEST(ContextMap, IdentityReturnsHidden) {
  const Matrix h{{1, 2}, {3, 4}, {5, 6}};
  EXPECT_EQ(context_map(AlignmentMatrix(Matrix::identity(3)), h), h);
}

TEST(ContextMap, UniformColumnAverages) {
  const Matrix c = context_map(AlignmentMatrix(Matrix(2, 3, 0.5)), Matrix{{1.0}, {3.0}});
  EXPECT_EQ(c, Matrix(3, 1, 2.0));
}

TEST(ContextMap, MatchesSumOverTokens) {
  std::mt19937_64 rng(4);
  const Matrix a = random_columns(rng, 3, 4);
  Matrix h(3, 2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = u(rng);
  const Matrix c = context_map(AlignmentMatrix(a), h);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t d = 0; d < 2; ++d) {
      double s = 0;
      for (std::size_t i = 0; i < 3; ++i) s += a(i, j) * h(i, d);
      EXPECT_NEAR(c(j, d), s, 1e-15);
    }
}

TEST(ContextMap, ShapeMismatch) {
  EXPECT_THROW(context_map(AlignmentMatrix(Matrix::identity(2)), Matrix(3, 1)), ShapeError);
}

TEST(Paths, TwoByThree) {
  const auto paths = monotonic_path_indices(2, 3);
  const std::set<std::vector<std::size_t>> got(paths.begin(), paths.end());
  const std::set<std::vector<std::size_t>> want = {{0, 0, 1}, {0, 1, 1}};
  EXPECT_EQ(got, want);
}

TEST(Paths, TwoByTwo) {
  const auto paths = monotonic_path_indices(2, 2);
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0], (std::vector<std::size_t>{0, 1}));
}

TEST(Paths, ThreeByFiveCount) { EXPECT_EQ(enumerate_monotonic_paths(3, 5).size(), 6u); }

TEST(Paths, InfeasibleRejected) { EXPECT_THROW(enumerate_monotonic_paths(4, 3), ContractError); }

TEST(Paths, CountsMatchBinomialAndImvIsHard) {
  // Brute force over all T1^T2 index sequences as an independent count.
  for (std::size_t t1 = 2; t1 <= 4; ++t1) {
    for (std::size_t t2 = t1; t2 <= 6; ++t2) {
      std::size_t brute = 0;
      std::vector<std::size_t> idx(t2, 0);
      for (;;) {
        bool ok = idx.front() == 0 && idx.back() == t1 - 1;
        for (std::size_t j = 1; ok && j < t2; ++j) ok = idx[j] == idx[j - 1] || idx[j] == idx[j - 1] + 1;
        brute += ok;
        std::size_t k = 0;
        while (k < t2 && ++idx[k] == t1) idx[k++] = 0;
        if (k == t2) break;
      }
      const auto paths = enumerate_monotonic_paths(t1, t2);
      EXPECT_EQ(paths.size(), brute) << t1 << "x" << t2;
      EXPECT_EQ(paths.size(), binomial(t2 - 1, t1 - 1));
      for (const auto& alpha : paths) {
        const Imv pi = compute_imv(alpha);
        for (double d : pi.deltas()) EXPECT_TRUE(d == 0.0 || d == 1.0);
        EXPECT_EQ(pi[0], 0.0);
        EXPECT_EQ(pi[t2 - 1], static_cast<double>(t1 - 1));
      }
    }
  }
}

TEST(Paths, ConvexMixturesStayMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto paths = enumerate_monotonic_paths(4, 6);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix mix(4, 6);
    double total = 0;
    std::vector<double> w(paths.size());
    for (double& x : w) total += x = u(rng);
    for (std::size_t k = 0; k < paths.size(); ++k) mix = mix + paths[k].matrix() * (w[k] / total);
    const auto d = compute_imv(AlignmentMatrix(mix)).deltas();
    for (double x : d) {
      EXPECT_GE(x, -1e-12);
      EXPECT_LE(x, 1 + 1e-12);
    }
  }
}

TEST(Paths, DurationAlignment) {
  const std::vector<std::size_t> d = {2, 1, 3};
  const AlignmentMatrix a = duration_alignment(d);
  EXPECT_EQ(a.t1(), 3u);
  EXPECT_EQ(a.t2(), 6u);
  EXPECT_EQ(compute_imv(a).pi, Matrix::column({0, 0, 1, 2, 2, 2}));
}

TEST(Binomial, SmallValues) {
  EXPECT_EQ(binomial(4, 2), 6u);
  EXPECT_EQ(binomial(5, 0), 1u);
  EXPECT_EQ(binomial(3, 4), 0u);
}
