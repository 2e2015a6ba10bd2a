#pragma once

// Synthetic monotonic seq2seq task. Each vocabulary entry owns a random
// F-dimensional frame pattern and an integer duration; a sequence of tokens
// becomes a frame sequence by repeating each token's pattern for its duration
// and adding Gaussian noise. Durations depend only on the token, so they are
// predictable from the text side.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "imv/error.hpp"
#include "imv/numerics/matrix.hpp"

namespace imv::toy {

struct ToyTask {
  std::size_t vocab = 6;
  std::size_t embed_dim = 16;
  std::size_t frame_dim = 8;
  std::size_t min_duration = 1;
  std::size_t max_duration = 4;
  double noise = 0.1;
  std::size_t min_tokens = 4;
  std::size_t max_tokens = 8;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab < 2) throw ContractError("toy task needs vocab >= 2");
    if (min_duration < 1 || max_duration < min_duration) throw ContractError("invalid duration range");
    if (min_tokens < 2 || max_tokens < min_tokens) throw ContractError("invalid token-count range");
    if (embed_dim < 1 || frame_dim < 1) throw ContractError("dimensions must be positive");
    if (!(noise >= 0.0)) throw ContractError("noise must be non-negative");
  }
};

/// Per-vocabulary patterns and durations drawn from the task seed.
struct TaskTables {
  Matrix patterns;                   // vocab x frame_dim
  std::vector<std::size_t> duration; // per vocabulary entry
};

inline TaskTables task_tables(const ToyTask& task) {
  task.validate();
  std::mt19937_64 rng(task.seed * 0x9e3779b97f4a7c15ULL + 17);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> dur(task.min_duration, task.max_duration);
  TaskTables t{Matrix(task.vocab, task.frame_dim), std::vector<std::size_t>(task.vocab)};
  for (std::size_t i = 0; i < t.patterns.size(); ++i) t.patterns[i] = normal(rng);
  for (auto& d : t.duration) d = dur(rng);
  return t;
}

/// One paired example.
struct ToyBatch {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> durations;
  Matrix frames;        // T2 x F, noisy
  Matrix clean_frames;  // T2 x F, noise-free
  Matrix centers;       // T1 x 1, e*_i = sum_{m<=i} d_m - d_i / 2

  std::size_t t1() const noexcept { return tokens.size(); }
  std::size_t t2() const noexcept { return frames.rows(); }
};

/// Frames and centres for a given token sequence (noise drawn from `rng`).
inline ToyBatch render(const TaskTables& tables, std::vector<std::size_t> tokens, double noise,
                       std::mt19937_64& rng) {
  ToyBatch b;
  b.tokens = std::move(tokens);
  std::size_t t2 = 0;
  for (std::size_t tok : b.tokens) {
    if (tok >= tables.duration.size()) throw ContractError("token id out of vocabulary");
    b.durations.push_back(tables.duration[tok]);
    t2 += tables.duration[tok];
  }
  const std::size_t f = tables.patterns.cols();
  b.clean_frames = Matrix(t2, f);
  b.centers = Matrix(b.tokens.size(), 1);
  std::size_t row = 0;
  double end = 0.0;
  for (std::size_t i = 0; i < b.tokens.size(); ++i) {
    for (std::size_t r = 0; r < b.durations[i]; ++r, ++row)
      for (std::size_t c = 0; c < f; ++c) b.clean_frames(row, c) = tables.patterns(b.tokens[i], c);
    end += static_cast<double>(b.durations[i]);
    b.centers[i] = end - static_cast<double>(b.durations[i]) / 2.0;
  }
  b.frames = b.clean_frames;
  if (noise > 0.0) {
    std::normal_distribution<double> normal(0.0, noise);
    for (std::size_t i = 0; i < b.frames.size(); ++i) b.frames[i] += normal(rng);
  }
  return b;
}

/// Deterministic example for (task, seed).
inline ToyBatch make_batch(const ToyTask& task, const TaskTables& tables, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL);
  std::uniform_int_distribution<std::size_t> len(task.min_tokens, task.max_tokens);
  std::uniform_int_distribution<std::size_t> tok(0, task.vocab - 1);
  std::vector<std::size_t> tokens(len(rng));
  for (auto& t : tokens) t = tok(rng);
  return render(tables, std::move(tokens), task.noise, rng);
}

inline ToyBatch make_batch(const ToyTask& task, std::uint64_t seed) {
  return make_batch(task, task_tables(task), seed);
}

}  // namespace imv::toy
