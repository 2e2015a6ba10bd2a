#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "imv/error.hpp"
#include "imv/numerics/matrix.hpp"
#include "imv/numerics/tape.hpp"

namespace imv {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Kink-op inputs closer than this to a kink count as sitting on it.
  double kink_margin = 1e-6;
  /// Lower bound on the relative-error denominator. Entries whose gradient is
  /// exactly zero by cancellation would otherwise divide roundoff by ~0.
  double denominator_floor = 1e-3;
  /// Outputs are reduced to a scalar with fixed random weights drawn from this
  /// seed, so normalized outputs (softmax columns) do not cancel to a constant.
  std::uint64_t projection_seed = 0x1d2c3b4a;
  bool random_projection = true;
};

struct GradCheckReport {
  std::string op;
  double tolerance = 0.0;
  double max_relative_error = 0.0;
  /// Per input: |analytic - numeric| / max(|analytic|, |numeric|, floor).
  std::vector<Matrix> errors;
  /// Per input: 1 where the element was skipped because a finite difference
  /// would straddle a ReLU/clamp/abs kink.
  std::vector<Matrix> excluded;
  std::size_t excluded_count = 0;
  std::size_t checked_count = 0;
  bool pass = false;
};

namespace detail {

struct Evaluation {
  Matrix output;
  std::vector<ad::KinkRecord> kinks;
};

template <class F>
Evaluation evaluate(F& f, std::span<const Matrix> inputs) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(inputs.size());
  for (const Matrix& m : inputs) vars.push_back(tape.variable(m));
  ad::Var out = f(tape, std::span<const ad::Var>(vars));
  const auto k = tape.kinks();
  return {out.value(), std::vector<ad::KinkRecord>(k.begin(), k.end())};
}

/// Region index of `v` relative to ascending kinks: even = strictly between
/// kinks, odd = within `margin` of one.
inline int kink_region(double v, const std::vector<double>& kinks, double margin) {
  int below = 0;
  for (std::size_t i = 0; i < kinks.size(); ++i) {
    if (std::abs(v - kinks[i]) <= margin) return static_cast<int>(2 * i + 1);
    if (v > kinks[i]) ++below;
  }
  return 2 * below;
}

inline bool straddles_kink(const Evaluation& base, const Evaluation& plus, const Evaluation& minus,
                           double margin) {
  if (plus.kinks.size() != base.kinks.size() || minus.kinks.size() != base.kinks.size()) return true;
  for (std::size_t r = 0; r < base.kinks.size(); ++r) {
    const auto& b = base.kinks[r];
    const auto& p = plus.kinks[r];
    const auto& m = minus.kinks[r];
    if (p.inputs.size() != b.inputs.size() || m.inputs.size() != b.inputs.size()) return true;
    for (std::size_t i = 0; i < b.inputs.size(); ++i) {
      const int rb = kink_region(b.inputs[i], b.kinks, margin);
      if (kink_region(p.inputs[i], b.kinks, margin) != rb ||
          kink_region(m.inputs[i], b.kinks, margin) != rb) {
        return true;
      }
      if ((rb % 2 == 1) && (p.inputs[i] != b.inputs[i] || m.inputs[i] != b.inputs[i])) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Compares reverse-mode gradients of `f` against central differences
/// (f(x+h) - f(x-h)) / 2h, element by element.
///
/// `f` is called as `f(Tape&, std::span<const Var>)` and returns the output
/// node. Throws NumericError if two evaluations at the same point disagree.
template <class F>
GradCheckReport gradcheck(std::string op, F&& f, std::vector<Matrix> inputs,
                          const GradCheckOptions& opts = {}) {
  if (!(opts.step > 0.0)) throw ContractError("gradcheck: step must be positive");

  const detail::Evaluation base = detail::evaluate(f, inputs);
  if (detail::evaluate(f, inputs).output != base.output) {
    throw NumericError("gradcheck: " + op + " is not deterministic across evaluations");
  }

  Matrix weights(base.output.rows(), base.output.cols(), 1.0);
  if (opts.random_projection) {
    std::mt19937_64 rng(opts.projection_seed);
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::bernoulli_distribution sign(0.5);
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  }

  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix& m : inputs) vars.push_back(tape.variable(m));
    ad::Var out = f(tape, std::span<const ad::Var>(vars));
    tape.backward(out, weights);
    for (const ad::Var& v : vars) analytic.push_back(v.grad());
  }

  GradCheckReport report;
  report.op = std::move(op);
  report.tolerance = opts.tolerance;
  const double h = opts.step;

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix err(inputs[k].rows(), inputs[k].cols());
    Matrix skip(inputs[k].rows(), inputs[k].cols());
    for (std::size_t e = 0; e < inputs[k].size(); ++e) {
      const double x0 = inputs[k][e];
      inputs[k][e] = x0 + h;
      const detail::Evaluation plus = detail::evaluate(f, inputs);
      inputs[k][e] = x0 - h;
      const detail::Evaluation minus = detail::evaluate(f, inputs);
      inputs[k][e] = x0;

      if (detail::straddles_kink(base, plus, minus, opts.kink_margin)) {
        skip[e] = 1.0;
        ++report.excluded_count;
        continue;
      }
      // Differencing per output entry before the weighted reduction keeps the
      // cancellation error proportional to each entry, not to the total.
      double numeric = 0.0;
      for (std::size_t o = 0; o < weights.size(); ++o) {
        numeric += weights[o] * (plus.output[o] - minus.output[o]);
      }
      numeric /= 2.0 * h;
      const double a = analytic[k][e];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
      err[e] = std::abs(a - numeric) / denom;
      report.max_relative_error = std::max(report.max_relative_error, err[e]);
      ++report.checked_count;
    }
    report.errors.push_back(std::move(err));
    report.excluded.push_back(std::move(skip));
  }
  report.pass = report.max_relative_error <= opts.tolerance;
  return report;
}

}  // namespace imv
