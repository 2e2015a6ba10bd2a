#pragma once

// Alignment matrices, index mapping vectors (IMV) and their constraint checks.
//
// An alignment matrix alpha is T1 x T2: row i is input token i, column j is
// output step j, and every column is a distribution over input tokens. The IMV
// is the expected input position of each output step,
//
//   pi_j = sum_i alpha(i, j) * i.
//
// A hard monotonic path (each step stays on its token or advances by one,
// starting at token 0 and ending at token T1-1) has 0 <= pi_j - pi_{j-1} <= 1,
// pi_0 = 0 and pi_{T2-1} = T1-1. Convex mixtures of such paths keep these
// properties because pi is linear in alpha.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "imv/error.hpp"
#include "imv/numerics/operand.hpp"

namespace imv {

enum class Axis { input, output };

/// The index vector {0, 1, ..., L-1} over the input axis (p) or output axis (q).
class IndexVector {
public:
  IndexVector(std::size_t length, Axis axis) : values_(Matrix::arange(length)), axis_(axis) {}

  std::size_t size() const noexcept { return values_.rows(); }
  Axis axis() const noexcept { return axis_; }
  const Matrix& values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

private:
  Matrix values_;
  Axis axis_;
};

/// Column-normalized T1 x T2 attention weights.
class AlignmentMatrix {
public:
  static constexpr double column_tolerance = 1e-6;

  /// Throws ContractError unless entries lie in [0, 1] and every column sums
  /// to one within `tolerance`. Columns are never renormalized.
  explicit AlignmentMatrix(Matrix alpha, double tolerance = column_tolerance) : alpha_(std::move(alpha)) {
    check_columns(alpha_, tolerance);
  }

  std::size_t t1() const noexcept { return alpha_.rows(); }
  std::size_t t2() const noexcept { return alpha_.cols(); }
  const Matrix& matrix() const noexcept { return alpha_; }
  double operator()(std::size_t i, std::size_t j) const { return alpha_(i, j); }

  static void check_columns(const Matrix& alpha, double tolerance) {
    if (alpha.rows() == 0 || alpha.cols() == 0) throw ContractError("alignment matrix is empty");
    if (!alpha.all_finite()) throw ContractError("alignment matrix has non-finite entries");
    for (std::size_t j = 0; j < alpha.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < alpha.rows(); ++i) {
        const double a = alpha(i, j);
        if (a < -tolerance || a > 1.0 + tolerance) {
          throw ContractError("alignment entry (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") = " + std::to_string(a) + " outside [0, 1]");
        }
        s += a;
      }
      if (std::abs(s - 1.0) > tolerance) {
        throw ContractError("alignment column " + std::to_string(j) + " sums to " + std::to_string(s));
      }
    }
  }

private:
  Matrix alpha_;
};

/// Index mapping vector: pi (T2 x 1) plus the input length T1 it maps into.
/// A raw IMV may violate monotonicity; use validate_imv to check.
struct Imv {
  Matrix pi;
  std::size_t t1 = 0;

  Imv() = default;
  Imv(Matrix values, std::size_t input_length) : pi(std::move(values)), t1(input_length) {
    if (pi.cols() != 1) throw ShapeError("IMV must be a column vector, got " + pi.shape_string());
  }
  Imv(std::initializer_list<double> values, std::size_t input_length)
      : Imv(Matrix::column(values), input_length) {}

  std::size_t t2() const noexcept { return pi.rows(); }
  double operator[](std::size_t j) const { return pi[j]; }

  /// pi_j - pi_{j-1} for j = 1..T2-1.
  std::vector<double> deltas() const {
    std::vector<double> d;
    for (std::size_t j = 1; j < pi.rows(); ++j) d.push_back(pi[j] - pi[j - 1]);
    return d;
  }
};

struct ImvViolation {
  std::size_t index;  // j, for delta pi_j = pi_j - pi_{j-1}
  double delta;
};

struct ImvValidationReport {
  bool monotone_continuous = true;
  bool complete = true;
  std::vector<ImvViolation> violations;
  double start = 0.0;  // pi_0
  double end = 0.0;    // pi_{T2-1}

  bool ok() const noexcept { return monotone_continuous && complete; }
};

namespace kernels {

template <Operand M>
M imv(const M& alpha) {
  const M p = constant_like(alpha, Matrix::arange(value_of(alpha).rows()));
  return matmul(transpose(alpha), p);
}

/// c_j = sum_i alpha(i, j) h_i  (T2 x D).
template <Operand M>
M context(const M& alpha, const M& hidden) {
  return matmul(transpose(alpha), hidden);
}

}  // namespace kernels

/// Column-sum tolerance accepted when computing an IMV from a raw matrix
/// (e.g. learned attention read from disk).
inline constexpr double learned_column_tolerance = 1e-3;

inline Imv compute_imv(const AlignmentMatrix& alpha) {
  return Imv(kernels::imv(alpha.matrix()), alpha.t1());
}

/// Validates columns at learned_column_tolerance, then computes the IMV.
inline Imv compute_imv(const Matrix& alpha) {
  AlignmentMatrix::check_columns(alpha, learned_column_tolerance);
  return Imv(kernels::imv(alpha), alpha.rows());
}

/// Checks 0 <= delta pi <= 1 and the boundary values pi_0 = 0,
/// pi_{T2-1} = T1-1, each within `tolerance`. Failures are reported, not thrown.
inline ImvValidationReport validate_imv(const Imv& imv, double tolerance = 1e-6) {
  if (imv.t2() < 2) throw ContractError("validate_imv needs T2 >= 2");
  if (imv.t1 < 1) throw ContractError("validate_imv needs T1 >= 1");
  ImvValidationReport report;
  const auto d = imv.deltas();
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (d[k] < -tolerance || d[k] > 1.0 + tolerance) {
      report.monotone_continuous = false;
      report.violations.push_back({k + 1, d[k]});
    }
  }
  report.start = imv[0];
  report.end = imv[imv.t2() - 1];
  const double last = static_cast<double>(imv.t1 - 1);
  report.complete = std::abs(report.start) <= tolerance && std::abs(report.end - last) <= tolerance;
  return report;
}

inline Matrix context_map(const AlignmentMatrix& alpha, const Matrix& hidden) {
  if (hidden.rows() != alpha.t1()) {
    throw ShapeError("context_map: alignment has T1 = " + std::to_string(alpha.t1()) +
                     " but hidden states are " + hidden.shape_string());
  }
  return kernels::context(alpha.matrix(), hidden);
}

/// C(n, k) in exact integer arithmetic for the small sizes used by the oracle.
inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Attended-token sequences of every hard monotonic path: start at 0, end at
/// T1-1, each step advances by 0 or 1.
inline std::vector<std::vector<std::size_t>> monotonic_path_indices(std::size_t t1, std::size_t t2) {
  if (t1 < 1 || t2 < 1) throw ContractError("path enumeration needs T1, T2 >= 1");
  if (t1 > t2) {
    throw ContractError("no complete monotonic path: T1 = " + std::to_string(t1) + " > T2 = " +
                        std::to_string(t2));
  }
  std::vector<std::vector<std::size_t>> paths;
  std::vector<std::size_t> cur(t2, 0);
  std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t j, std::size_t token) {
    cur[j] = token;
    if (j + 1 == t2) {
      if (token + 1 == t1) paths.push_back(cur);
      return;
    }
    // Remaining steps must still be able to reach the last token.
    const std::size_t remaining = t2 - 1 - j;
    if (t1 - 1 - token < remaining) walk(j + 1, token);
    if (token + 1 < t1) walk(j + 1, token + 1);
  };
  walk(0, 0);
  return paths;
}

/// One-hot-column alignment of a hard path given its attended-token sequence.
inline AlignmentMatrix path_alignment(std::span<const std::size_t> tokens, std::size_t t1) {
  Matrix alpha(t1, tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) alpha(tokens[j], j) = 1.0;
  return AlignmentMatrix(std::move(alpha));
}

/// Every hard monotonic alignment for the given sizes; there are C(T2-1, T1-1).
inline std::vector<AlignmentMatrix> enumerate_monotonic_paths(std::size_t t1, std::size_t t2) {
  std::vector<AlignmentMatrix> out;
  for (const auto& path : monotonic_path_indices(t1, t2)) out.push_back(path_alignment(path, t1));
  return out;
}

/// Hard alignment of integer durations: token i covers durations[i] frames.
inline AlignmentMatrix duration_alignment(std::span<const std::size_t> durations) {
  std::vector<std::size_t> tokens;
  for (std::size_t i = 0; i < durations.size(); ++i) tokens.insert(tokens.end(), durations[i], i);
  return path_alignment(tokens, durations.size());
}

}  // namespace imv
