#pragma once

#include <cmath>
#include <string>

#include "imv/alignment.hpp"
#include "imv/error.hpp"
#include "imv/numerics/operand.hpp"

namespace imv {

enum class SeqRole { key, query };

/// Hidden states of one sequence (L x D): keys on the text side, queries on
/// the output side.
struct EncodedSeq {
  Matrix states;
  SeqRole role;

  EncodedSeq(Matrix s, SeqRole r) : states(std::move(s)), role(r) {
    if (states.cols() < 1 || states.rows() < 1) throw ContractError("encoded sequence must be non-empty");
    if (!states.all_finite()) throw ContractError("encoded sequence has non-finite entries");
  }
  std::size_t length() const noexcept { return states.rows(); }
  std::size_t dim() const noexcept { return states.cols(); }
};

/// Sign of the logit. `positive` is standard scaled dot-product attention;
/// `negated` scores exp(-(q.k)/sqrt(D)) instead.
enum class LogitSign { positive, negated };

namespace kernels {

/// alpha(i, j) = softmax over i of sign * (q_j . k_i) / sqrt(D); T1 x T2.
template <Operand M>
M scaled_dot_alignment(const M& queries, const M& keys, LogitSign sign = LogitSign::positive) {
  const double d = static_cast<double>(value_of(keys).cols());
  const double s = (sign == LogitSign::positive ? 1.0 : -1.0) / std::sqrt(d);
  return softmax_cols(matmul(keys, transpose(queries)) * s);
}

}  // namespace kernels

inline AlignmentMatrix scaled_dot_alignment(const EncodedSeq& queries, const EncodedSeq& keys,
                                            LogitSign sign = LogitSign::positive) {
  if (queries.role != SeqRole::query || keys.role != SeqRole::key) {
    throw ContractError("scaled_dot_alignment: expected (query, key) sequences");
  }
  if (queries.dim() != keys.dim()) {
    throw ShapeError("scaled_dot_alignment: query dim " + std::to_string(queries.dim()) +
                     " != key dim " + std::to_string(keys.dim()));
  }
  return AlignmentMatrix(kernels::scaled_dot_alignment(queries.states, keys.states, sign));
}

}  // namespace imv
