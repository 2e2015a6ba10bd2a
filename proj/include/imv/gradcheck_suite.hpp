#pragma once

// Named gradient checks over random, seeded inputs for every differentiable
// operation of the library and for the composed toy forward pass.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "imv/aligned_position.hpp"
#include "imv/attention.hpp"
#include "imv/error.hpp"
#include "imv/monotonic.hpp"
#include "imv/numerics/gradcheck.hpp"
#include "imv/toy/trainer.hpp"

namespace imv {

inline const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops = {
      "sma_loss",       "hma_transform",     "align_from_imv", "scaled_dot_alignment",
      "density_matrix", "extract_positions", "ap_loss",        "align_from_positions",
      "toy_forward",    "toy_predictor"};
  return ops;
}

namespace detail {

class InputGen {
public:
  explicit InputGen(std::uint64_t seed) : rng_(seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL) {}

  Matrix uniform(std::size_t r, std::size_t c, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = u(rng_);
    return m;
  }
  std::size_t size(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }

private:
  std::mt19937_64 rng_;
};

}  // namespace detail

/// Runs the named check. Inputs are drawn from `seed`; sizes stay small and
/// kernel widths moderate so central differences are well conditioned.
inline GradCheckReport run_gradcheck(const std::string& op, std::uint64_t seed, const GradCheckOptions& opts = {}) {
  detail::InputGen g(seed);
  const std::size_t t1 = g.size(3, 5), t2 = g.size(t1, 7);
  const double hi = static_cast<double>(t1 - 1);

  if (op == "sma_loss") {
    const SmaWeights w{1.0, 0.7, 1.3, 0.9, seed % 2 ? BoundaryPenalty::squared : BoundaryPenalty::absolute};
    return gradcheck(op, [&](Tape&, std::span<const Var> v) { return kernels::sma_loss(v[0], t1, w); },
                     {g.uniform(t2, 1, -0.5, hi + 0.5)}, opts);
  }
  if (op == "hma_transform") {
    Matrix raw = g.uniform(t2, 1, 0.0, hi);
    if (raw[1] < raw[0]) std::swap(raw[0], raw[1]);  // some forward motion
    return gradcheck(op, [&](Tape&, std::span<const Var> v) { return kernels::hma_transform(v[0], t1); },
                     {raw}, opts);
  }
  if (op == "align_from_imv") {
    return gradcheck(op, [&](Tape&, std::span<const Var> v) { return kernels::align_from_imv(v[0], t1, 1.0); },
                     {g.uniform(t2, 1, 0.0, hi)}, opts);
  }
  if (op == "scaled_dot_alignment") {
    const std::size_t d = g.size(2, 4);
    return gradcheck(op,
                     [&](Tape&, std::span<const Var> v) { return kernels::scaled_dot_alignment(v[0], v[1]); },
                     {g.uniform(t2, d, -1.0, 1.0), g.uniform(t1, d, -1.0, 1.0)}, opts);
  }
  if (op == "density_matrix") {
    return gradcheck(op, [&](Tape&, std::span<const Var> v) { return kernels::density_matrix(v[0], t1, 1.0); },
                     {g.uniform(t2, 1, 0.0, hi)}, opts);
  }
  if (op == "extract_positions") {
    return gradcheck(op,
                     [&](Tape&, std::span<const Var> v) { return kernels::extract_positions(v[0], t1, 1.0); },
                     {g.uniform(t2, 1, 0.0, hi)}, opts);
  }
  if (op == "ap_loss") {
    return gradcheck(op, [&](Tape&, std::span<const Var> v) { return kernels::ap_loss(v[0], v[1], 1e-6); },
                     {g.uniform(t1, 1, 0.5, 3.0), g.uniform(t1, 1, 0.5, 3.0)}, opts);
  }
  if (op == "align_from_positions") {
    const double top = static_cast<double>(t2 - 1);
    return gradcheck(op,
                     [&](Tape&, std::span<const Var> v) { return kernels::align_from_positions(v[0], t2, 1.0); },
                     {g.uniform(t1, 1, 0.0, top)}, opts);
  }
  if (op == "toy_forward") {
    // Every parameter of a small model; the mode cycles with the seed. The
    // duration target is a stop-gradient of the model's own positions, which
    // finite differences would move, so that term is checked by toy_predictor.
    toy::ToyTask task;
    task.vocab = 4, task.embed_dim = 4, task.frame_dim = 3, task.min_tokens = 3, task.max_tokens = 4;
    task.max_duration = 3, task.seed = seed;
    toy::TrainConfig cfg;
    cfg.mode = seed % 3 == 0 ? toy::Mode::nm : seed % 3 == 1 ? toy::Mode::sma : toy::Mode::hma;
    cfg.sigma2 = 1.0, cfg.seed = seed, cfg.text_layers = 1, cfg.frame_layers = 1, cfg.predictor_hidden = 3;
    cfg.ap_weight = 0.0;
    const toy::ToyModel model = toy::init_model(task, cfg);
    const toy::ToyBatch batch = toy::make_batch(task, model.tables, seed);
    return gradcheck(op,
                     [&](Tape&, std::span<const Var> v) { return toy::toy_forward<Var>(model, v, batch).loss; },
                     model.params, opts);
  }
  if (op == "toy_predictor") {
    toy::ToyTask task;
    task.vocab = 4, task.embed_dim = 4;
    toy::TrainConfig cfg;
    cfg.seed = seed, cfg.predictor_hidden = 3;
    const toy::ToyModel model = toy::init_model(task, cfg);
    const std::vector<std::size_t> tokens = {0, 2, 1, 3, 2};
    const Matrix target = g.uniform(tokens.size(), 1, 0.5, 3.0);
    return gradcheck(op,
                     [&](Tape&, std::span<const Var> v) {
                       return kernels::ap_loss(toy::predict_deltas(v, std::span<const std::size_t>(tokens)),
                                               constant_like(v[0], target), cfg.ap_epsilon);
                     },
                     model.params, opts);
  }
  throw ParseError("unknown gradcheck op '" + op + "'");
}

}  // namespace imv
