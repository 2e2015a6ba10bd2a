#pragma once

// Plain (non-differentiable) dense kernels. The taped versions in tape.hpp
// reuse these for their forward values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "imv/error.hpp"
#include "imv/numerics/matrix.hpp"

namespace imv {

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

inline void require_scalar(const Matrix& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw ShapeError(std::string(op) + ": expected 1x1 scalar, got " + s.shape_string());
  }
}

template <class Fn>
Matrix map(const Matrix& a, Fn&& fn) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
  return out;
}

template <class Fn>
Matrix zip(const Matrix& a, const Matrix& b, const char* op, Fn&& fn) {
  require_same_shape(a, b, op);
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
  return out;
}

}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  return detail::zip(a, b, "add", [](double x, double y) { return x + y; });
}
inline Matrix sub(const Matrix& a, const Matrix& b) {
  return detail::zip(a, b, "sub", [](double x, double y) { return x - y; });
}
/// Elementwise product.
inline Matrix mul(const Matrix& a, const Matrix& b) {
  return detail::zip(a, b, "mul", [](double x, double y) { return x * y; });
}
inline Matrix scale(const Matrix& a, double s) {
  return detail::map(a, [s](double x) { return x * s; });
}
inline Matrix add_scalar(const Matrix& a, double s) {
  return detail::map(a, [s](double x) { return x + s; });
}

inline Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
inline Matrix operator-(const Matrix& a, const Matrix& b) { return sub(a, b); }
inline Matrix operator-(const Matrix& a) { return scale(a, -1.0); }
inline Matrix operator*(const Matrix& a, double s) { return scale(a, s); }
inline Matrix operator*(double s, const Matrix& a) { return scale(a, s); }
inline Matrix operator+(const Matrix& a, double s) { return add_scalar(a, s); }
inline Matrix operator-(const Matrix& a, double s) { return add_scalar(a, -s); }

/// Adds the 1 x cols row vector `r` to every row of `a`.
inline Matrix add_row(const Matrix& a, const Matrix& r) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw ShapeError("add_row: " + a.shape_string() + " + " + r.shape_string());
  }
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += r(0, j);
  return out;
}

/// Multiplies every entry by the 1x1 matrix `s`.
inline Matrix scale_by(const Matrix& a, const Matrix& s) {
  detail::require_scalar(s, "scale_by");
  return scale(a, s[0]);
}

/// Divides every entry by the 1x1 matrix `s`.
inline Matrix divide_by(const Matrix& a, const Matrix& s) {
  detail::require_scalar(s, "divide_by");
  const double d = s[0];
  return detail::map(a, [d](double x) { return x / d; });
}

inline Matrix relu(const Matrix& a) {
  return detail::map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
inline Matrix clamp(const Matrix& a, double lo, double hi) {
  return detail::map(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
}
inline Matrix abs(const Matrix& a) {
  return detail::map(a, [](double x) { return std::abs(x); });
}
inline Matrix square(const Matrix& a) {
  return detail::map(a, [](double x) { return x * x; });
}
inline Matrix exp(const Matrix& a) {
  return detail::map(a, [](double x) { return std::exp(x); });
}
inline Matrix log(const Matrix& a) {
  return detail::map(a, [](double x) { return std::log(x); });
}
/// log(1 + e^x), evaluated without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline Matrix softplus(const Matrix& a) {
  return detail::map(a, [](double x) { return softplus(x); });
}

/// Normalizes each column over its rows; the column max is subtracted first.
inline Matrix softmax_cols(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.rows(); ++i) mx = std::max(mx, a(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      out(i, j) = std::exp(a(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t i = 0; i < a.rows(); ++i) out(i, j) /= z;
  }
  return out;
}

/// Normalizes each row over its columns; the row max is subtracted first.
inline Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out(i, j) = std::exp(a(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= z;
  }
  return out;
}

inline Matrix sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Matrix(1, 1, s);
}

inline Matrix mean(const Matrix& a) {
  if (a.empty()) throw ShapeError("mean of empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

/// Running sum down the rows of each column.
inline Matrix cumsum(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 1; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += out(i - 1, j);
  return out;
}

/// Row differences: out(i) = a(i+1) - a(i); result has rows-1 rows.
inline Matrix diff_rows(const Matrix& a) {
  if (a.rows() < 1) throw ShapeError("diff_rows of empty matrix");
  Matrix out(a.rows() - 1, a.cols());
  for (std::size_t i = 0; i + 1 < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i + 1, j) - a(i, j);
  return out;
}

/// Stacks `b` below `a`.
inline Matrix vcat(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("vcat: " + a.shape_string() + " / " + b.shape_string());
  std::vector<double> data(a.values());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

/// Places `b` to the right of `a`.
inline Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("hcat: " + a.shape_string() + " | " + b.shape_string());
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
  }
  return out;
}

inline Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of " + a.shape_string());
  }
  Matrix out(count, a.cols());
  std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols()), count * a.cols(),
              out.data().begin());
  return out;
}

/// out(i, j) = a(i) - b(j) for column vectors a (n x 1) and b (m x 1).
inline Matrix outer_sub(const Matrix& a, const Matrix& b) {
  if (a.cols() != 1 || b.cols() != 1) {
    throw ShapeError("outer_sub expects column vectors, got " + a.shape_string() + ", " +
                     b.shape_string());
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = a[i] - b[j];
  return out;
}

/// Row lookup: out(r) = table(ids[r]).
inline Matrix gather_rows(const Matrix& table, std::span<const std::size_t> ids) {
  Matrix out(ids.size(), table.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= table.rows()) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[r]) + " out of " + table.shape_string());
    }
    for (std::size_t j = 0; j < table.cols(); ++j) out(r, j) = table(ids[r], j);
  }
  return out;
}

/// out(i) = a(i - offset) when that row exists, zero otherwise.
inline Matrix shift_rows(const Matrix& a, long offset) {
  Matrix out(a.rows(), a.cols());
  const long n = static_cast<long>(a.rows());
  for (long i = 0; i < n; ++i) {
    const long src = i - offset;
    if (src < 0 || src >= n) continue;
    for (std::size_t j = 0; j < a.cols(); ++j)
      out(static_cast<std::size_t>(i), j) = a(static_cast<std::size_t>(src), j);
  }
  return out;
}

inline Matrix stop_gradient(const Matrix& a) { return a; }

/// Wraps a constant in the operand type of `like` (identity for plain matrices).
inline Matrix constant_like(const Matrix&, Matrix value) { return value; }

inline const Matrix& value_of(const Matrix& m) { return m; }

}  // namespace imv
