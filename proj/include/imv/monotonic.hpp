#pragma once

// Soft and hard monotonic alignment on top of the IMV.
//
// Soft (SMA): a penalty that is zero exactly when 0 <= delta pi <= 1,
// pi_0 = 0 and pi_{T2-1} = T1-1.
//
// Hard (HMA): delta pi' -> ReLU -> prefix sum from 0 -> rescale so the last
// entry is T1-1, then rebuild a soft alignment around the result with a
// Gaussian kernel. The streaming variant advances one output step at a time
// and clamps each step to [0, 1] since it cannot rescale afterwards.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "imv/alignment.hpp"
#include "imv/error.hpp"
#include "imv/numerics/operand.hpp"

namespace imv {

/// How the scalar boundary terms of the SMA loss are penalized.
enum class BoundaryPenalty { squared, absolute };

struct SmaWeights {
  double lambda0 = 1.0;  // negative steps
  double lambda1 = 1.0;  // steps larger than one
  double lambda2 = 1.0;  // pi_0 != 0
  double lambda3 = 1.0;  // pi_{T2-1} != T1-1
  BoundaryPenalty boundary = BoundaryPenalty::squared;

  void validate() const {
    if (lambda0 < 0.0 || lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
      throw ContractError("SMA weights must be non-negative");
    }
  }
};

/// Alignment variation sigma^2 of the Gaussian reconstruction kernel, in
/// squared index units.
struct KernelConfig {
  double sigma2 = 0.25;

  void validate() const {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ContractError("sigma2 must be positive");
  }
};

/// HMA refuses to rescale when the accumulated forward motion is at most this.
inline constexpr double degenerate_motion_threshold = 1e-8;

namespace kernels {

template <Operand M>
M sma_loss(const M& pi, std::size_t t1, const SmaWeights& w) {
  const std::size_t t2 = value_of(pi).rows();
  const double span = static_cast<double>(t1 - 1);
  const M d = diff_rows(pi);
  // ||d| - d| is 2*max(-d, 0); ||d-1| + (d-1)| is 2*max(d-1, 0).
  const M negative = sum(abs(d) - d);
  const M overshoot = sum(abs(d - 1.0) + (d - 1.0));
  const M first = slice_rows(pi, 0, 1) * (1.0 / span);
  const M last = slice_rows(pi, t2 - 1, 1) * (1.0 / span) - 1.0;
  const auto penalty = [&](const M& x) {
    return w.boundary == BoundaryPenalty::squared ? square(x) : abs(x);
  };
  return negative * w.lambda0 + overshoot * w.lambda1 + penalty(first) * w.lambda2 +
         penalty(last) * w.lambda3;
}

/// ReLU'd steps, prefix-summed from zero: pi_0 = 0, pi_j = sum_{m<=j} relu(delta pi'_m).
template <Operand M>
M monotone_prefix(const M& raw) {
  const M zero = constant_like(raw, Matrix::zeros(1, 1));
  return vcat(zero, cumsum(relu(diff_rows(raw))));
}

template <Operand M>
M hma_transform(const M& raw, std::size_t t1) {
  const M pi = monotone_prefix(raw);
  const std::size_t t2 = value_of(pi).rows();
  const M last = slice_rows(pi, t2 - 1, 1);
  if (!(value_of(last)[0] > degenerate_motion_threshold)) {
    throw DegenerateImvError("degenerate IMV: no forward motion");
  }
  return divide_by(pi, last) * static_cast<double>(t1 - 1);
}

/// Softmax over rows of -(grid_i - centers_j)^2 / sigma2, grid = {0..rows-1}.
/// Column j is a distribution over the grid centred on centers_j.
template <Operand M>
M gaussian_columns(const M& centers, std::size_t rows, double sigma2) {
  const M grid = constant_like(centers, Matrix::arange(rows));
  return softmax_cols(square(outer_sub(grid, centers)) * (-1.0 / sigma2));
}

template <Operand M>
M align_from_imv(const M& pi_star, std::size_t t1, double sigma2) {
  return gaussian_columns(pi_star, t1, sigma2);
}

}  // namespace kernels

/// SMA penalty of an IMV. Zero iff every monotonicity, continuity and
/// boundary constraint holds.
inline double sma_loss(const Imv& imv, const SmaWeights& weights = {}) {
  weights.validate();
  if (imv.t1 < 2) throw ContractError("sma_loss needs T1 >= 2 (normalizes by T1-1)");
  if (imv.t2() < 2) throw ContractError("sma_loss needs T2 >= 2");
  return kernels::sma_loss(imv.pi, imv.t1, weights)[0];
}

/// Strictly monotone, boundary-complete IMV from a raw one. Throws
/// NumericError when the raw IMV never moves forward.
inline Imv hma_transform(const Imv& raw) {
  if (raw.t2() < 2) throw ContractError("hma_transform needs T2 >= 2");
  if (raw.t1 < 1) throw ContractError("hma_transform needs T1 >= 1");
  return Imv(kernels::hma_transform(raw.pi, raw.t1), raw.t1);
}

inline AlignmentMatrix align_from_imv(const Imv& pi_star, const KernelConfig& kernel = {}) {
  kernel.validate();
  if (pi_star.t1 < 1) throw ContractError("align_from_imv needs T1 >= 1");
  return AlignmentMatrix(kernels::align_from_imv(pi_star.pi, pi_star.t1, kernel.sigma2));
}

struct StreamingHmaState {
  double pi = 0.0;
  IndexVector p;

  explicit StreamingHmaState(std::size_t t1) : p(t1, Axis::input) {}
  std::size_t t1() const noexcept { return p.size(); }
};

struct StreamingHmaStep {
  StreamingHmaState state;
  Matrix column;  // T1 x 1 reconstructed attention for this output step
};

/// One output step: pi' = alpha_col . p, advance by clamp(pi' - pi, 0, 1),
/// then emit the Gaussian column centred on the new position.
inline StreamingHmaStep streaming_hma_step(const StreamingHmaState& state, std::span<const double> alpha_col,
                                           const KernelConfig& kernel = {}) {
  kernel.validate();
  if (alpha_col.size() != state.t1()) {
    throw ShapeError("streaming_hma_step: column of length " + std::to_string(alpha_col.size()) +
                     " for T1 = " + std::to_string(state.t1()));
  }
  double target = 0.0;
  for (std::size_t i = 0; i < alpha_col.size(); ++i) target += alpha_col[i] * state.p[i];
  StreamingHmaStep out{state, Matrix{}};
  out.state.pi += std::clamp(target - state.pi, 0.0, 1.0);
  out.column = kernels::gaussian_columns(Matrix(1, 1, out.state.pi), state.t1(), kernel.sigma2);
  return out;
}

/// Whole-sequence form of the streaming recursion: pi_j = pi_{j-1} +
/// clamp(pi'_j - pi_{j-1}, 0, 1) with pi_{-1} = 0. No rescaling.
inline Imv clamped_imv(const Imv& raw) {
  Matrix pi(raw.t2(), 1);
  double cur = 0.0;
  for (std::size_t j = 0; j < raw.t2(); ++j) {
    cur += std::clamp(raw[j] - cur, 0.0, 1.0);
    pi[j] = cur;
  }
  return Imv(std::move(pi), raw.t1);
}

/// Batch counterpart of streaming HMA: the IMV of `alpha`, the clamp
/// recursion over the full sequence, then one Gaussian reconstruction of
/// every column at once.
inline AlignmentMatrix clamped_hma_alignment(const AlignmentMatrix& alpha, const KernelConfig& kernel = {}) {
  return align_from_imv(clamped_imv(compute_imv(alpha)), kernel);
}

/// Runs streaming_hma_step over every column of `alpha`.
inline AlignmentMatrix streaming_hma_alignment(const AlignmentMatrix& alpha, const KernelConfig& kernel = {}) {
  StreamingHmaState state(alpha.t1());
  Matrix out(alpha.t1(), alpha.t2());
  std::vector<double> col(alpha.t1());
  for (std::size_t j = 0; j < alpha.t2(); ++j) {
    for (std::size_t i = 0; i < alpha.t1(); ++i) col[i] = alpha(i, j);
    StreamingHmaStep step = streaming_hma_step(state, col, kernel);
    for (std::size_t i = 0; i < alpha.t1(); ++i) out(i, j) = step.column[i];
    state = std::move(step.state);
  }
  return AlignmentMatrix(std::move(out));
}

}  // namespace imv
