#pragma once

// End-to-end toy model trained through the alignment machinery.
//
//   tokens -> embedding -> conv text encoder -> h (keys and values)
//   frames -> linear projection -> conv frame encoder -> queries
//   alpha = scaled_dot_alignment(queries, h)
//   pi = compute_imv(alpha); HMA mode replaces pi with hma_transform(pi)
//   e = extract_positions(pi); alpha' = align_from_positions(e, T2)
//   y_hat = context(alpha', h) * W + b
//
// Loss: MSE(y_hat, y) + ap_weight * ap_loss(predicted delta e, stop_grad(delta e)),
// plus sma_loss(pi) in SMA mode. NM and SMA build identical graphs.
//
// In HMA mode an example whose raw IMV never moves forward has no defined
// alignment; it is dropped from that step's loss and counted in the record.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "imv/aligned_position.hpp"
#include "imv/alignment.hpp"
#include "imv/attention.hpp"
#include "imv/error.hpp"
#include "imv/monotonic.hpp"
#include "imv/numerics/operand.hpp"
#include "imv/numerics/tape.hpp"
#include "imv/toy/task.hpp"

namespace imv::toy {

enum class Mode { nm, sma, hma };
enum class Optimizer { sgd, adam };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::nm: return "NM";
    case Mode::sma: return "SMA";
    case Mode::hma: return "HMA";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "NM" || s == "nm") return Mode::nm;
  if (s == "SMA" || s == "sma") return Mode::sma;
  if (s == "HMA" || s == "hma") return Mode::hma;
  throw ParseError("unknown mode '" + s + "' (expected NM, SMA or HMA)");
}

inline std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw ParseError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct TrainConfig {
  Mode mode = Mode::hma;
  double learning_rate = 1e-2;
  std::size_t steps = 2000;
  SmaWeights sma{};
  double ap_weight = 0.1;
  double sigma2 = 0.25;
  double ap_epsilon = 1e-6;
  std::uint64_t seed = 1;
  LogitSign logit_sign = LogitSign::positive;

  Optimizer optimizer = Optimizer::sgd;
  std::size_t batch_size = 8;
  std::size_t text_layers = 2;
  std::size_t frame_layers = 2;
  std::size_t kernel_width = 3;
  std::size_t predictor_hidden = 16;
  /// Held-out sequences scored for the final accuracy and diagonality.
  std::size_t eval_size = 32;
  double accuracy_threshold = 0.9;
  /// Steps-to-threshold uses the mean training accuracy over this many steps.
  std::size_t threshold_window = 10;

  void validate() const {
    sma.validate();
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning_rate must be positive");
    if (!(sigma2 > 0.0)) throw ContractError("sigma2 must be positive");
    if (!(ap_weight >= 0.0)) throw ContractError("ap_weight must be non-negative");
    if (!(ap_epsilon > 0.0)) throw ContractError("ap_epsilon must be positive");
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    if (kernel_width % 2 == 0) throw ContractError("kernel_width must be odd");
    if (predictor_hidden < 1) throw ContractError("predictor_hidden must be >= 1");
    if (eval_size < 1 || threshold_window < 1) throw ContractError("eval_size and threshold_window must be >= 1");
  }
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double reconstruction = 0.0;
  double ap = 0.0;
  double sma = 0.0;
  double accuracy = 0.0;
  double diagonality = 0.0;
  /// HMA examples dropped from the loss because their raw IMV never moved forward.
  std::size_t skipped = 0;
};

struct TrainReport {
  Mode mode = Mode::hma;
  std::vector<StepRecord> steps;
  /// First step whose trailing-window mean accuracy reached the threshold.
  std::optional<std::size_t> steps_to_threshold;
  double final_accuracy = 0.0;
  double final_diagonality = 0.0;
  double final_reconstruction = 0.0;
};

// ---------------------------------------------------------------- metrics

/// Fraction of tokens whose argmax-aligned frame span has its midpoint within
/// one frame of the true centre. Tokens owning no frame count as misses.
inline double alignment_accuracy(const Matrix& alpha, std::span<const double> centers) {
  const std::size_t t1 = alpha.rows(), t2 = alpha.cols();
  if (centers.size() != t1) throw ShapeError("alignment_accuracy: centre count mismatch");
  std::vector<long> first(t1, -1), last(t1, -1);
  for (std::size_t j = 0; j < t2; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t1; ++i)
      if (alpha(i, j) > alpha(best, j)) best = i;
    if (first[best] < 0) first[best] = static_cast<long>(j);
    last[best] = static_cast<long>(j);
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < t1; ++i) {
    if (first[i] < 0) continue;
    const double mid = (static_cast<double>(first[i]) + static_cast<double>(last[i]) + 1.0) / 2.0;
    if (std::abs(mid - centers[i]) <= 1.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(t1);
}

namespace detail {

inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    while (end + 1 < order.size() && x[order[end + 1]] == x[order[k]]) ++end;
    const double r = (static_cast<double>(k) + static_cast<double>(end)) / 2.0;
    for (std::size_t m = k; m <= end; ++m) rank[order[m]] = r;
    k = end + 1;
  }
  return rank;
}

}  // namespace detail

/// Spearman rank correlation; 0 when either side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  const auto ra = detail::average_ranks(a), rb = detail::average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) ma += ra[i], mb += rb[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Mean column maximum times the Spearman correlation between each column's
/// argmax and its column index. 1 for a sharp monotone alignment.
inline double diagonality(const Matrix& alpha) {
  std::vector<double> argmax(alpha.cols()), index(alpha.cols());
  double sharp = 0.0;
  for (std::size_t j = 0; j < alpha.cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < alpha.rows(); ++i)
      if (alpha(i, j) > alpha(best, j)) best = i;
    argmax[j] = static_cast<double>(best);
    index[j] = static_cast<double>(j);
    sharp += alpha(best, j);
  }
  return sharp / static_cast<double>(alpha.cols()) * spearman(argmax, index);
}

// ---------------------------------------------------------------- model

enum Param : std::size_t {
  embedding,
  frame_proj,
  frame_bias,
  decoder_w,
  decoder_b,
  pred_w1,
  pred_b1,
  pred_w2,
  pred_b2,
  fixed_param_count
};

struct ToyModel {
  ToyTask task;
  TaskTables tables;
  TrainConfig config;
  /// Fixed parameters first (see Param), then per conv layer a weight and a
  /// bias, text layers before frame layers.
  std::vector<Matrix> params;
  bool trained = false;

  std::size_t text_conv(std::size_t layer) const { return fixed_param_count + 2 * layer; }
  std::size_t frame_conv(std::size_t layer) const {
    return fixed_param_count + 2 * (config.text_layers + layer);
  }
};

inline ToyModel init_model(const ToyTask& task, const TrainConfig& cfg) {
  task.validate();
  cfg.validate();
  ToyModel m{task, task_tables(task), cfg, {}, false};
  std::mt19937_64 rng(cfg.seed * 0x2545f4914f6cdd1dULL + 7);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto randn = [&](std::size_t r, std::size_t c, double s) {
    Matrix out(r, c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = normal(rng) * s;
    return out;
  };
  const std::size_t d = task.embed_dim, f = task.frame_dim, h = cfg.predictor_hidden;
  const auto fan = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  m.params.resize(fixed_param_count);
  m.params[embedding] = randn(task.vocab, d, 1.0);
  m.params[frame_proj] = randn(f, d, fan(f));
  m.params[frame_bias] = Matrix(1, d);
  m.params[decoder_w] = randn(d, f, fan(d));
  m.params[decoder_b] = Matrix(1, f);
  m.params[pred_w1] = randn(d, h, fan(d));
  m.params[pred_b1] = Matrix(1, h);
  m.params[pred_w2] = randn(h, 1, fan(h));
  // softplus(b) starts near the mean duration.
  m.params[pred_b2] = Matrix(1, 1, std::log(std::expm1(0.5 * static_cast<double>(task.min_duration + task.max_duration))));
  const std::size_t layers = cfg.text_layers + cfg.frame_layers;
  for (std::size_t l = 0; l < layers; ++l) {
    m.params.push_back(randn(cfg.kernel_width * d, d, 0.5 * fan(cfg.kernel_width * d)));
    m.params.push_back(Matrix(1, d));
  }
  return m;
}

/// Everything the loss and the metrics need from one example.
template <Operand M>
struct ForwardResult {
  M loss;
  M reconstruction;
  M ap;
  M sma;
  M alignment;  // alpha' fed to the context map, T1 x T2
  M attention;  // alpha from the dot product
  M pi;         // raw or HMA-transformed IMV
};

namespace detail {

/// Residual same-padded 1-D convolution over rows followed by ReLU.
template <Operand M>
M conv_layer(const M& x, const M& w, const M& b, std::size_t width) {
  const long half = static_cast<long>(width / 2);
  M stacked = shift_rows(x, half);
  for (long k = half - 1; k >= -half; --k) stacked = hcat(stacked, shift_rows(x, k));
  return x + relu(add_row(matmul(stacked, w), b));
}

template <Operand M>
M mse(const M& a, const M& b) {
  return mean(square(a - b));
}

}  // namespace detail

template <Operand M>
M text_encoder(const ToyModel& model, std::span<const M> p, std::span<const std::size_t> tokens) {
  M h = gather_rows(p[embedding], tokens);
  for (std::size_t l = 0; l < model.config.text_layers; ++l) {
    const std::size_t k = model.text_conv(l);
    h = detail::conv_layer(h, p[k], p[k + 1], model.config.kernel_width);
  }
  return h;
}

template <Operand M>
M frame_encoder(const ToyModel& model, std::span<const M> p, const M& frames) {
  M q = add_row(matmul(frames, p[frame_proj]), p[frame_bias]);
  for (std::size_t l = 0; l < model.config.frame_layers; ++l) {
    const std::size_t k = model.frame_conv(l);
    q = detail::conv_layer(q, p[k], p[k + 1], model.config.kernel_width);
  }
  return q;
}

/// Per-token step length predicted from the token embeddings alone.
template <Operand M>
M predict_deltas(std::span<const M> p, std::span<const std::size_t> tokens) {
  const M emb = gather_rows(p[embedding], tokens);
  const M hidden = relu(add_row(matmul(emb, p[pred_w1]), p[pred_b1]));
  return softplus(add_row(matmul(hidden, p[pred_w2]), p[pred_b2]));
}

template <Operand M>
M decode(std::span<const M> p, const M& alignment, const M& h) {
  return add_row(matmul(kernels::context(alignment, h), p[decoder_w]), p[decoder_b]);
}

/// Training-phase forward pass for one example.
template <Operand M>
ForwardResult<M> toy_forward(const ToyModel& model, std::span<const M> p, const ToyBatch& batch) {
  const TrainConfig& cfg = model.config;
  const std::size_t t1 = batch.t1(), t2 = batch.t2();
  const M frames = constant_like(p[embedding], batch.frames);
  const M h = text_encoder(model, p, std::span<const std::size_t>(batch.tokens));
  const M queries = frame_encoder(model, p, frames);
  const M alpha = kernels::scaled_dot_alignment(queries, h, cfg.logit_sign);
  const M raw = kernels::imv(alpha);
  const M pi = cfg.mode == Mode::hma ? kernels::hma_transform(raw, t1) : raw;
  const M e = kernels::extract_positions(pi, t1, cfg.sigma2);
  const M aligned = kernels::align_from_positions(e, t2, cfg.sigma2);
  const M recon = detail::mse(decode(p, aligned, h), frames);
  // A raw IMV need not be monotone, so the target is clamped at zero before the log.
  const M target = constant_like(e, imv::relu(value_of(kernels::position_deltas(e))));
  const M ap = kernels::ap_loss(predict_deltas(p, std::span<const std::size_t>(batch.tokens)), target,
                                cfg.ap_epsilon);
  M loss = recon + ap * cfg.ap_weight;
  M sma = constant_like(p[embedding], Matrix(1, 1));
  if (cfg.mode == Mode::sma) {
    sma = kernels::sma_loss(raw, t1, cfg.sma);
    loss = loss + sma;
  }
  return {loss, recon, ap, sma, aligned, alpha, pi};
}

inline ForwardResult<Matrix> toy_forward(const ToyModel& model, const ToyBatch& batch) {
  return toy_forward<Matrix>(model, std::span<const Matrix>(model.params), batch);
}

// ---------------------------------------------------------------- training

struct EvalMetrics {
  double accuracy = 0.0;
  double diagonality = 0.0;
  double reconstruction = 0.0;
};

inline std::vector<ToyBatch> eval_set(const ToyModel& model) {
  std::vector<ToyBatch> out;
  for (std::size_t k = 0; k < model.config.eval_size; ++k)
    out.push_back(make_batch(model.task, model.tables, 0xe7a1000000ULL + model.config.seed * 1000003ULL + k));
  return out;
}

/// Degenerate HMA examples score zero accuracy and diagonality and are left
/// out of the reconstruction mean.
inline EvalMetrics evaluate(const ToyModel& model, std::span<const ToyBatch> batches) {
  EvalMetrics m;
  std::size_t scored = 0;
  for (const ToyBatch& b : batches) {
    std::optional<ForwardResult<Matrix>> r;
    try {
      r = toy_forward(model, b);
    } catch (const DegenerateImvError&) {
      continue;
    }
    m.accuracy += alignment_accuracy(r->alignment, b.centers.values());
    m.diagonality += diagonality(r->alignment);
    m.reconstruction += r->reconstruction[0];
    ++scored;
  }
  const double n = static_cast<double>(batches.size());
  m.accuracy /= n, m.diagonality /= n;
  m.reconstruction = scored ? m.reconstruction / static_cast<double>(scored) : std::nan("");
  return m;
}

namespace detail {

struct AdamState {
  std::vector<Matrix> m, v;
  std::size_t t = 0;
};

inline void apply_update(const TrainConfig& cfg, std::vector<Matrix>& params, const std::vector<Matrix>& grads,
                         AdamState& adam) {
  if (cfg.optimizer == Optimizer::sgd) {
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k].size(); ++i) params[k][i] -= cfg.learning_rate * grads[k][i];
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (adam.m.empty()) {
    for (const Matrix& p : params) {
      adam.m.emplace_back(p.rows(), p.cols());
      adam.v.emplace_back(p.rows(), p.cols());
    }
  }
  ++adam.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double g = grads[k][i];
      adam.m[k][i] = b1 * adam.m[k][i] + (1 - b1) * g;
      adam.v[k][i] = b2 * adam.v[k][i] + (1 - b2) * g * g;
      params[k][i] -= cfg.learning_rate * (adam.m[k][i] / c1) / (std::sqrt(adam.v[k][i] / c2) + eps);
    }
  }
}

inline std::string at_step(std::size_t step, const std::string& what) {
  return "step " + std::to_string(step) + ": " + what;
}

}  // namespace detail

using StepCallback = std::function<void(const StepRecord&)>;

/// Trains a fresh model. Every step draws `batch_size` new examples; the
/// record for step s holds the losses and training-batch metrics evaluated
/// before update s is applied, so steps = 0 reports the initial state only.
inline TrainReport train(ToyModel& model, const StepCallback& on_step = {}) {
  const TrainConfig& cfg = model.config;
  TrainReport report;
  report.mode = cfg.mode;
  detail::AdamState adam;
  std::vector<double> window;
  const std::size_t records = std::max<std::size_t>(cfg.steps, 1);
  for (std::size_t step = 0; step < records; ++step) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix& p : model.params) vars.push_back(tape.variable(p));
    const std::span<const ad::Var> pv(vars);
    StepRecord rec;
    rec.step = step;
    std::optional<ad::Var> total;
    const double share = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const ToyBatch batch =
          make_batch(model.task, model.tables, cfg.seed * 0x100000001b3ULL + step * cfg.batch_size + k);
      std::optional<ForwardResult<ad::Var>> r;
      try {
        r = toy_forward<ad::Var>(model, pv, batch);
      } catch (const DegenerateImvError&) {
        ++rec.skipped;
        continue;
      } catch (const NumericError& e) {
        throw e.prefixed("step " + std::to_string(step) + ": ");
      }
      total = total ? *total + r->loss : r->loss;
      rec.reconstruction += r->reconstruction.value()[0];
      rec.ap += r->ap.value()[0];
      rec.sma += r->sma.value()[0];
      rec.accuracy += alignment_accuracy(r->alignment.value(), batch.centers.values()) * share;
      rec.diagonality += diagonality(r->alignment.value()) * share;
    }
    // Losses average over the examples that ran; metrics over the whole batch.
    const std::size_t ran = cfg.batch_size - rec.skipped;
    if (ran > 0) {
      const double scale = 1.0 / static_cast<double>(ran);
      total = *total * scale;
      rec.loss = total->value()[0];
      rec.reconstruction *= scale, rec.ap *= scale, rec.sma *= scale;
      if (!std::isfinite(rec.loss)) throw NumericError(detail::at_step(step, "loss diverged"));
    }
    report.steps.push_back(rec);
    if (on_step) on_step(rec);

    window.push_back(rec.accuracy);
    if (window.size() > cfg.threshold_window) window.erase(window.begin());
    if (!report.steps_to_threshold && window.size() == cfg.threshold_window) {
      double mean = 0.0;
      for (double a : window) mean += a;
      if (mean / static_cast<double>(window.size()) >= cfg.accuracy_threshold) report.steps_to_threshold = step;
    }
    if (step >= cfg.steps || !total) continue;  // steps = 0: record only; nothing ran: no update

    try {
      tape.backward(*total);
    } catch (const NumericError& e) {
      throw e.prefixed("step " + std::to_string(step) + ": ");
    }
    std::vector<Matrix> grads;
    for (const ad::Var& v : vars) grads.push_back(v.grad());
    detail::apply_update(cfg, model.params, grads, adam);
    for (const Matrix& p : model.params)
      if (!p.all_finite()) throw NumericError(detail::at_step(step, "parameters diverged"));
  }
  const auto eval = eval_set(model);
  const EvalMetrics m = evaluate(model, eval);
  report.final_accuracy = m.accuracy;
  report.final_diagonality = m.diagonality;
  report.final_reconstruction = m.reconstruction;
  model.trained = true;
  return report;
}

inline TrainReport train(const ToyTask& task, const TrainConfig& cfg, const StepCallback& on_step = {}) {
  ToyModel model = init_model(task, cfg);
  return train(model, on_step);
}

// ---------------------------------------------------------------- inference

struct Inference {
  AlignedPositions positions;
  std::size_t t2 = 0;
  Matrix alignment;  // T1 x T2
  Matrix frames;     // T2 x F
};

/// Frames from tokens alone: predicted steps -> positions (times rate) ->
/// inferred length -> Gaussian alignment -> decoder.
inline Inference infer(const ToyModel& model, std::span<const std::size_t> tokens, double rate = 1.0) {
  if (!model.trained) throw ContractError("infer: model is not trained");
  if (tokens.empty()) throw ContractError("infer: empty token sequence");
  if (tokens.size() < 2) throw ContractError("infer: need at least two tokens to infer T2");
  for (std::size_t t : tokens)
    if (t >= model.task.vocab) throw ContractError("infer: token id out of vocabulary");
  const std::span<const Matrix> p(model.params);
  const Matrix deltas = predict_deltas(p, tokens);
  Inference out;
  out.positions = scale_positions(AlignedPositions::from_deltas(deltas.values()), rate);
  out.t2 = infer_t2(out.positions);
  out.alignment = kernels::align_from_positions(out.positions.e, out.t2, model.config.sigma2);
  out.frames = decode(p, out.alignment, text_encoder(model, p, tokens));
  return out;
}

}  // namespace imv::toy
