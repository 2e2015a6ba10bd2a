#pragma once

// Block-level reverse-mode differentiation.
//
// A Tape is an append-only list of nodes. Each node owns its forward value and
// a closure that pushes the node's incoming gradient onto its inputs. Nodes are
// appended after their inputs, so a single reverse sweep visits every node
// once in a valid order.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "imv/error.hpp"
#include "imv/numerics/matrix.hpp"
#include "imv/numerics/ops.hpp"

namespace imv::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Input values of one piecewise-linear node and the kink locations of its
/// activation; gradcheck uses these to exclude finite differences that
/// straddle a kink.
struct KinkRecord {
  std::size_t node;
  std::vector<double> inputs;
  std::vector<double> kinks;  // ascending
};

class Tape {
public:
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Matrix value) { return push("variable", std::move(value), true, {}); }

  /// Leaf that is treated as a constant.
  Var constant(Matrix value) { return push("constant", std::move(value), false, {}); }

  /// Appends an operation node. `backward` is dropped when no input needs a
  /// gradient. Throws NumericError carrying the node index if `value` has a
  /// non-finite entry.
  Var push(const char* op, Matrix value, bool requires_grad, Backward backward) {
    const std::size_t id = nodes_.size();
    if (!value.all_finite()) {
      throw NumericError(std::string("non-finite value produced by ") + op, id);
    }
    nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad ? std::move(backward) : Backward{},
                          requires_grad});
    return Var(this, id);
  }

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }

  /// Gradient accumulated on a node; zeros when nothing reached it.
  const Matrix& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.empty() && !n.value.empty()) {
      n.grad = Matrix::zeros(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Adds `g` into the gradient of node `id`. No-op for constants.
  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!g.same_shape(n.value)) {
      throw ShapeError("gradient shape " + g.shape_string() + " for node of shape " +
                       n.value.shape_string());
    }
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
  }

  /// Reverse sweep seeded with `seed` (defaults to ones, i.e. the gradient of
  /// the sum of the output's entries).
  void backward(const Var& out, const Matrix& seed) {
    accumulate(out.id(), seed);
    for (std::size_t k = out.id() + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.backward || n.grad.empty()) continue;
      const Matrix g = n.grad;
      if (!g.all_finite()) throw NumericError("non-finite gradient", k);
      n.backward(*this, g);
    }
  }

  void backward(const Var& out) {
    backward(out, Matrix::ones(out.value().rows(), out.value().cols()));
  }

  void zero_grad() {
    for (Node& n : nodes_) n.grad = Matrix{};
  }

  void record_kinks(std::size_t node, const Matrix& inputs, std::vector<double> kinks) {
    kinks_.push_back(KinkRecord{node, inputs.values(), std::move(kinks)});
  }

  std::span<const KinkRecord> kinks() const { return kinks_; }
  std::size_t size() const noexcept { return nodes_.size(); }

private:
  struct Node {
    Matrix value;
    mutable Matrix grad;
    Backward backward;
    bool requires_grad;
  };

  std::vector<Node> nodes_;
  std::vector<KinkRecord> kinks_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

inline const Matrix& value_of(const Var& v) { return v.value(); }

inline Var constant_like(const Var& like, Matrix value) { return like.tape().constant(std::move(value)); }

inline Var stop_gradient(const Var& a) { return a.tape().constant(a.value()); }

namespace detail {

inline void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
}

inline Var unary(const char* op, const Var& a, Matrix value,
                 std::function<Matrix(const Matrix& g)> dinput) {
  const std::size_t ia = a.id();
  return a.tape().push(op, std::move(value), a.requires_grad(),
                       [ia, dinput = std::move(dinput)](Tape& t, const Matrix& g) {
                         t.accumulate(ia, dinput(g));
                       });
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push("matmul", imv::matmul(a.value(), b.value()),
                       a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, const Matrix& g) {
                         if (t.requires_grad(ia)) t.accumulate(ia, imv::matmul(g, imv::transpose(t.value(ib))));
                         if (t.requires_grad(ib)) t.accumulate(ib, imv::matmul(imv::transpose(t.value(ia)), g));
                       });
}

inline Var transpose(const Var& a) {
  return detail::unary("transpose", a, imv::transpose(a.value()),
                       [](const Matrix& g) { return imv::transpose(g); });
}

inline Var add(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push("add", imv::add(a.value(), b.value()), a.requires_grad() || b.requires_grad(),
                       [ia, ib](Tape& t, const Matrix& g) {
                         t.accumulate(ia, g);
                         t.accumulate(ib, g);
                       });
}

inline Var sub(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push("sub", imv::sub(a.value(), b.value()), a.requires_grad() || b.requires_grad(),
                       [ia, ib](Tape& t, const Matrix& g) {
                         t.accumulate(ia, g);
                         t.accumulate(ib, imv::scale(g, -1.0));
                       });
}

inline Var mul(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push("mul", imv::mul(a.value(), b.value()), a.requires_grad() || b.requires_grad(),
                       [ia, ib](Tape& t, const Matrix& g) {
                         if (t.requires_grad(ia)) t.accumulate(ia, imv::mul(g, t.value(ib)));
                         if (t.requires_grad(ib)) t.accumulate(ib, imv::mul(g, t.value(ia)));
                       });
}

inline Var scale(const Var& a, double s) {
  return detail::unary("scale", a, imv::scale(a.value(), s),
                       [s](const Matrix& g) { return imv::scale(g, s); });
}

inline Var add_scalar(const Var& a, double s) {
  return detail::unary("add_scalar", a, imv::add_scalar(a.value(), s),
                       [](const Matrix& g) { return g; });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }

inline Var add_row(const Var& a, const Var& r) {
  detail::same_tape(a, r);
  const std::size_t ia = a.id(), ir = r.id();
  return a.tape().push("add_row", imv::add_row(a.value(), r.value()),
                       a.requires_grad() || r.requires_grad(), [ia, ir](Tape& t, const Matrix& g) {
                         t.accumulate(ia, g);
                         if (t.requires_grad(ir)) {
                           Matrix dr(1, g.cols());
                           for (std::size_t i = 0; i < g.rows(); ++i)
                             for (std::size_t j = 0; j < g.cols(); ++j) dr(0, j) += g(i, j);
                           t.accumulate(ir, dr);
                         }
                       });
}

inline Var scale_by(const Var& a, const Var& s) {
  detail::same_tape(a, s);
  const std::size_t ia = a.id(), is = s.id();
  return a.tape().push("scale_by", imv::scale_by(a.value(), s.value()),
                       a.requires_grad() || s.requires_grad(), [ia, is](Tape& t, const Matrix& g) {
                         const double sv = t.value(is)[0];
                         t.accumulate(ia, imv::scale(g, sv));
                         if (t.requires_grad(is)) t.accumulate(is, imv::sum(imv::mul(g, t.value(ia))));
                       });
}

inline Var divide_by(const Var& a, const Var& s) {
  detail::same_tape(a, s);
  const std::size_t ia = a.id(), is = s.id();
  return a.tape().push("divide_by", imv::divide_by(a.value(), s.value()),
                       a.requires_grad() || s.requires_grad(), [ia, is](Tape& t, const Matrix& g) {
                         const double sv = t.value(is)[0];
                         t.accumulate(ia, imv::scale(g, 1.0 / sv));
                         if (t.requires_grad(is)) {
                           t.accumulate(is, imv::scale(imv::sum(imv::mul(g, t.value(ia))), -1.0 / (sv * sv)));
                         }
                       });
}

/// ReLU with subgradient 0 at the origin.
inline Var relu(const Var& a) {
  Var out = detail::unary("relu", a, imv::relu(a.value()), [x = a.value()](const Matrix& g) {
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
    return d;
  });
  a.tape().record_kinks(out.id(), a.value(), {0.0});
  return out;
}

/// Clamp to [lo, hi] with subgradient 0 at both boundaries.
inline Var clamp(const Var& a, double lo, double hi) {
  Var out = detail::unary("clamp", a, imv::clamp(a.value(), lo, hi),
                          [x = a.value(), lo, hi](const Matrix& g) {
                            Matrix d(g.rows(), g.cols());
                            for (std::size_t i = 0; i < g.size(); ++i) d[i] = (x[i] > lo && x[i] < hi) ? g[i] : 0.0;
                            return d;
                          });
  a.tape().record_kinks(out.id(), a.value(), {lo, hi});
  return out;
}

/// |x| with subgradient 0 at the origin.
inline Var abs(const Var& a) {
  Var out = detail::unary("abs", a, imv::abs(a.value()), [x = a.value()](const Matrix& g) {
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
    return d;
  });
  a.tape().record_kinks(out.id(), a.value(), {0.0});
  return out;
}

inline Var square(const Var& a) {
  return detail::unary("square", a, imv::square(a.value()), [x = a.value()](const Matrix& g) {
    return imv::scale(imv::mul(g, x), 2.0);
  });
}

inline Var exp(const Var& a) {
  Matrix y = imv::exp(a.value());
  return detail::unary("exp", a, y, [y](const Matrix& g) { return imv::mul(g, y); });
}

inline Var log(const Var& a) {
  return detail::unary("log", a, imv::log(a.value()), [x = a.value()](const Matrix& g) {
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / x[i];
    return d;
  });
}

inline Var softplus(const Var& a) {
  return detail::unary("softplus", a, imv::softplus(a.value()), [x = a.value()](const Matrix& g) {
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * imv::sigmoid(x[i]);
    return d;
  });
}

inline Var softmax_cols(const Var& a) {
  Matrix y = imv::softmax_cols(a.value());
  return detail::unary("softmax_cols", a, y, [y](const Matrix& g) {
    Matrix d(g.rows(), g.cols());
    for (std::size_t j = 0; j < g.cols(); ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < g.rows(); ++i) dot += g(i, j) * y(i, j);
      for (std::size_t i = 0; i < g.rows(); ++i) d(i, j) = y(i, j) * (g(i, j) - dot);
    }
    return d;
  });
}

inline Var softmax_rows(const Var& a) {
  Matrix y = imv::softmax_rows(a.value());
  return detail::unary("softmax_rows", a, y, [y](const Matrix& g) {
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - dot);
    }
    return d;
  });
}

inline Var sum(const Var& a) {
  return detail::unary("sum", a, imv::sum(a.value()), [r = a.rows(), c = a.cols()](const Matrix& g) {
    return Matrix(r, c, g[0]);
  });
}

inline Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return detail::unary("mean", a, imv::mean(a.value()), [r = a.rows(), c = a.cols(), n](const Matrix& g) {
    return Matrix(r, c, g[0] / n);
  });
}

/// Backward of a running sum is the reversed running sum of the incoming gradient.
inline Var cumsum(const Var& a) {
  return detail::unary("cumsum", a, imv::cumsum(a.value()), [](const Matrix& g) {
    Matrix d = g;
    for (std::size_t i = g.rows(); i-- > 1;)
      for (std::size_t j = 0; j < g.cols(); ++j) d(i - 1, j) += d(i, j);
    return d;
  });
}

inline Var diff_rows(const Var& a) {
  return detail::unary("diff_rows", a, imv::diff_rows(a.value()), [r = a.rows()](const Matrix& g) {
    Matrix d(r, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) {
        d(i + 1, j) += g(i, j);
        d(i, j) -= g(i, j);
      }
    }
    return d;
  });
}

inline Var vcat(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id(), ra = a.rows(), rb = b.rows();
  return a.tape().push("vcat", imv::vcat(a.value(), b.value()), a.requires_grad() || b.requires_grad(),
                       [ia, ib, ra, rb](Tape& t, const Matrix& g) {
                         t.accumulate(ia, imv::slice_rows(g, 0, ra));
                         t.accumulate(ib, imv::slice_rows(g, ra, rb));
                       });
}

inline Var hcat(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id(), ca = a.cols(), cb = b.cols();
  return a.tape().push("hcat", imv::hcat(a.value(), b.value()), a.requires_grad() || b.requires_grad(),
                       [ia, ib, ca, cb](Tape& t, const Matrix& g) {
                         Matrix ga(g.rows(), ca), gb(g.rows(), cb);
                         for (std::size_t i = 0; i < g.rows(); ++i) {
                           for (std::size_t j = 0; j < ca; ++j) ga(i, j) = g(i, j);
                           for (std::size_t j = 0; j < cb; ++j) gb(i, j) = g(i, ca + j);
                         }
                         t.accumulate(ia, ga);
                         t.accumulate(ib, gb);
                       });
}

inline Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  return detail::unary("slice_rows", a, imv::slice_rows(a.value(), begin, count),
                       [begin, r = a.rows()](const Matrix& g) {
                         Matrix d(r, g.cols());
                         for (std::size_t i = 0; i < g.rows(); ++i)
                           for (std::size_t j = 0; j < g.cols(); ++j) d(begin + i, j) = g(i, j);
                         return d;
                       });
}

inline Var outer_sub(const Var& a, const Var& b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push("outer_sub", imv::outer_sub(a.value(), b.value()),
                       a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, const Matrix& g) {
                         Matrix da(g.rows(), 1), db(g.cols(), 1);
                         for (std::size_t i = 0; i < g.rows(); ++i) {
                           for (std::size_t j = 0; j < g.cols(); ++j) {
                             da[i] += g(i, j);
                             db[j] -= g(i, j);
                           }
                         }
                         t.accumulate(ia, da);
                         t.accumulate(ib, db);
                       });
}

inline Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return detail::unary("gather_rows", table, imv::gather_rows(table.value(), ids),
                       [idx, r = table.rows()](const Matrix& g) {
                         Matrix d(r, g.cols());
                         for (std::size_t k = 0; k < idx.size(); ++k)
                           for (std::size_t j = 0; j < g.cols(); ++j) d(idx[k], j) += g(k, j);
                         return d;
                       });
}

inline Var shift_rows(const Var& a, long offset) {
  return detail::unary("shift_rows", a, imv::shift_rows(a.value(), offset),
                       [offset](const Matrix& g) { return imv::shift_rows(g, -offset); });
}

/// Outputs of `f` on fresh variables, plus the gradient of the sum of all
/// output entries with respect to each input.
struct ForwardBackward {
  Matrix output;
  std::vector<Matrix> gradients;
};

template <class F>
ForwardBackward forward_backward(F&& f, std::span<const Matrix> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Matrix& m : inputs) {
    if (!m.all_finite()) throw NumericError("forward_backward: non-finite input");
    vars.push_back(tape.variable(m));
  }
  Var out = f(tape, std::span<const Var>(vars));
  tape.backward(out);
  ForwardBackward result{out.value(), {}};
  for (const Var& v : vars) result.gradients.push_back(v.grad());
  return result;
}

}  // namespace imv::ad

namespace imv {
using ad::Tape;
using ad::Var;
}  // namespace imv
