#pragma once

// Aligned positions: for every input token, the expected output step it maps
// to. They are read off an IMV through a row-normalized Gaussian density
// gamma(i, n) over output steps, and turned back into an alignment with a
// Gaussian kernel over input tokens. At inference only the positions are
// predicted, so training uses the same positions-to-alignment path.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "imv/alignment.hpp"
#include "imv/error.hpp"
#include "imv/monotonic.hpp"
#include "imv/numerics/operand.hpp"

namespace imv {

/// T1 x T2; each row sums to one over output steps.
struct DensityMatrix {
  Matrix gamma;
};

/// e (T1 x 1), output-step position of each input token.
struct AlignedPositions {
  Matrix e;

  AlignedPositions() = default;
  explicit AlignedPositions(Matrix positions) : e(std::move(positions)) {
    if (e.cols() != 1) throw ShapeError("aligned positions must be a column vector, got " + e.shape_string());
  }
  AlignedPositions(std::initializer_list<double> values) : AlignedPositions(Matrix::column(values)) {}

  /// Rebuilds e from per-token steps with e_0 = delta_0 (running sum).
  static AlignedPositions from_deltas(std::span<const double> deltas) {
    return AlignedPositions(cumsum(Matrix::column(deltas)));
  }

  std::size_t t1() const noexcept { return e.rows(); }
  double operator[](std::size_t i) const { return e[i]; }

  /// delta_0 = e_0, delta_i = e_i - e_{i-1}.
  std::vector<double> deltas() const {
    std::vector<double> d(e.rows());
    for (std::size_t i = 0; i < e.rows(); ++i) d[i] = i == 0 ? e[0] : e[i] - e[i - 1];
    return d;
  }
};

struct ApLossConfig {
  double epsilon = 1e-6;

  void validate() const {
    if (!(epsilon > 0.0)) throw ContractError("ap_loss epsilon must be positive");
  }
};

namespace kernels {

/// gamma(i, n) = softmax over n of -(i - pi_n)^2 / sigma2.
template <Operand M>
M density_matrix(const M& pi, std::size_t t1, double sigma2) {
  const M p = constant_like(pi, Matrix::arange(t1));
  return softmax_rows(square(outer_sub(p, pi)) * (-1.0 / sigma2));
}

/// e_i = sum_n gamma(i, n) * n.
template <Operand M>
M extract_positions(const M& pi, std::size_t t1, double sigma2) {
  const M q = constant_like(pi, Matrix::arange(value_of(pi).rows()));
  return matmul(density_matrix(pi, t1, sigma2), q);
}

/// delta_0 = e_0, delta_i = e_i - e_{i-1}.
template <Operand M>
M position_deltas(const M& e) {
  return vcat(slice_rows(e, 0, 1), diff_rows(e));
}

/// sum_i |log(pred_i + eps) - log(target_i + eps)|.
template <Operand M>
M ap_loss(const M& pred, const M& target, double epsilon) {
  return sum(abs(log(pred + epsilon) - log(target + epsilon)));
}

/// alpha'(i, j) = softmax over i of -(e_i - j)^2 / sigma2; T1 x T2.
template <Operand M>
M align_from_positions(const M& e, std::size_t t2, double sigma2) {
  const M q = constant_like(e, Matrix::arange(t2));
  return softmax_cols(square(outer_sub(e, q)) * (-1.0 / sigma2));
}

}  // namespace kernels

inline DensityMatrix density_matrix(const Imv& pi, const KernelConfig& kernel = {}) {
  kernel.validate();
  if (!pi.pi.all_finite()) throw ContractError("density_matrix: non-finite IMV");
  return {kernels::density_matrix(pi.pi, pi.t1, kernel.sigma2)};
}

inline AlignedPositions extract_positions(const Imv& pi, const KernelConfig& kernel = {}) {
  kernel.validate();
  if (!pi.pi.all_finite()) throw ContractError("extract_positions: non-finite IMV");
  return AlignedPositions(kernels::extract_positions(pi.pi, pi.t1, kernel.sigma2));
}

inline double ap_loss(std::span<const double> predicted, std::span<const double> target,
                      const ApLossConfig& cfg = {}) {
  cfg.validate();
  if (predicted.size() != target.size()) {
    throw ShapeError("ap_loss: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(target.size()) + " targets");
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] < 0.0 || target[i] < 0.0) throw ContractError("ap_loss: negative position step");
  }
  return kernels::ap_loss(Matrix::column(predicted), Matrix::column(target), cfg.epsilon)[0];
}

inline AlignmentMatrix align_from_positions(const AlignedPositions& e, std::size_t t2,
                                            const KernelConfig& kernel = {}) {
  kernel.validate();
  if (t2 < 1) throw ContractError("align_from_positions needs T2 >= 1");
  if (e.t1() < 1) throw ContractError("align_from_positions needs T1 >= 1");
  if (!e.e.all_finite()) throw ContractError("align_from_positions: non-finite positions");
  return AlignmentMatrix(kernels::align_from_positions(e.e, t2, kernel.sigma2));
}

/// Output length implied by positions: round(e_last + (e_last - e_prev)), at least 1.
inline std::size_t infer_t2(const AlignedPositions& e) {
  if (e.t1() < 2) throw ContractError("infer_t2 needs T1 >= 2");
  const double last = e[e.t1() - 1];
  const double t2 = last + (last - e[e.t1() - 2]);
  if (!std::isfinite(t2)) throw NumericError("infer_t2: non-finite length");
  const long rounded = std::lround(t2);
  return rounded < 1 ? 1 : static_cast<std::size_t>(rounded);
}

/// Speech-rate control: multiplies every position by `rate`.
inline AlignedPositions scale_positions(const AlignedPositions& e, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw ContractError("rate must be positive");
  return AlignedPositions(scale(e.e, rate));
}

}  // namespace imv
