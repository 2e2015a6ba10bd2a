#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition or data invariant does not hold
/// (non-normalized columns, T1 > T2 for path enumeration, ...).
class ContractError : public Error {
public:
  using Error::Error;
};

/// Operand shapes do not agree.
class ShapeError : public ContractError {
public:
  using ContractError::ContractError;
};

/// A computation produced a non-finite value or hit a degenerate divisor.
class NumericError : public Error {
public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NumericError(const std::string& what, std::size_t node = npos)
      : Error(node == npos ? what : what + " (tape node " + std::to_string(node) + ")"),
        node_(node) {}

  /// Index of the offending tape node, or npos when raised outside a tape.
  std::size_t node() const noexcept { return node_; }

  /// Same error with `prefix` prepended to the message.
  NumericError prefixed(const std::string& prefix) const { return NumericError(prefix + what(), node_, 0); }

private:
  NumericError(const std::string& full, std::size_t node, int) : Error(full), node_(node) {}

  std::size_t node_;
};

/// hma_transform found no forward motion to rescale.
class DegenerateImvError : public NumericError {
public:
  using NumericError::NumericError;
};

/// Malformed external input (matrix files, configs, CLI flags).
class ParseError : public Error {
public:
  using Error::Error;
};

}  // namespace imv
