#pragma once

// JSON run configuration for toy training, and the line-delimited report.
//
//   {
//     "mode": "HMA", "sigma2": 0.25, "epsilon": 1e-6, "printed_sign": false,
//     "sma": {"lambda0": 1, "lambda1": 1, "lambda2": 1, "lambda3": 1, "boundary": "squared"},
//     "seeds": {"task": 1, "train": 1},
//     "task": {"vocab": 6, "embed_dim": 16, "frame_dim": 8, "min_duration": 1, "max_duration": 4,
//              "noise": 0.1, "min_tokens": 4, "max_tokens": 8},
//     "train": {"steps": 2000, "learning_rate": 0.01, "optimizer": "sgd", "batch_size": 8, ...},
//     "report_path": "train_report.jsonl", "heatmap_path": "alignment.pgm"
//   }
//
// Every key is optional; unknown keys are rejected at every level.

#include <cstdint>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"

#include "imv/error.hpp"
#include "imv/io/matrix_io.hpp"
#include "imv/toy/trainer.hpp"

namespace imv::io {

using json = nlohmann::json;

struct RunConfig {
  toy::ToyTask task;
  toy::TrainConfig train;
  std::string report_path = "train_report.jsonl";
  std::string heatmap_path = "alignment.pgm";
};

namespace detail {

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ParseError("unknown key '" + where + "." + key + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + "." + key + " has the wrong type");
  }
}

inline void read_size(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) throw ParseError(where + "." + key + " must be a non-negative integer");
  out = v.get<std::size_t>();
}

}  // namespace detail

inline RunConfig parse_run_config(const json& doc) {
  using detail::read;
  using detail::read_size;
  detail::reject_unknown(doc,
                         {"mode", "sigma2", "epsilon", "printed_sign", "sma", "seeds", "task", "train", "report_path", "heatmap_path"},
                         "config");
  RunConfig cfg;
  auto& t = cfg.train;
  if (doc.contains("mode")) {
    if (!doc["mode"].is_string()) throw ParseError("config.mode must be a string");
    t.mode = toy::parse_mode(doc["mode"].get<std::string>());
  }
  read(doc, "sigma2", t.sigma2, "config");
  read(doc, "epsilon", t.ap_epsilon, "config");
  bool printed_sign = false;
  read(doc, "printed_sign", printed_sign, "config");
  t.logit_sign = printed_sign ? LogitSign::negated : LogitSign::positive;
  read(doc, "report_path", cfg.report_path, "config");
  read(doc, "heatmap_path", cfg.heatmap_path, "config");

  if (doc.contains("sma")) {
    const json& s = doc["sma"];
    detail::reject_unknown(s, {"lambda0", "lambda1", "lambda2", "lambda3", "boundary"}, "config.sma");
    read(s, "lambda0", t.sma.lambda0, "config.sma");
    read(s, "lambda1", t.sma.lambda1, "config.sma");
    read(s, "lambda2", t.sma.lambda2, "config.sma");
    read(s, "lambda3", t.sma.lambda3, "config.sma");
    if (s.contains("boundary")) {
      const std::string b = s["boundary"].is_string() ? s["boundary"].get<std::string>() : "";
      if (b == "squared") t.sma.boundary = BoundaryPenalty::squared;
      else if (b == "absolute") t.sma.boundary = BoundaryPenalty::absolute;
      else throw ParseError("config.sma.boundary must be \"squared\" or \"absolute\"");
    }
  }
  if (doc.contains("seeds")) {
    const json& s = doc["seeds"];
    detail::reject_unknown(s, {"task", "train"}, "config.seeds");
    read(s, "task", cfg.task.seed, "config.seeds");
    read(s, "train", t.seed, "config.seeds");
  }
  if (doc.contains("task")) {
    const json& k = doc["task"];
    detail::reject_unknown(k,
                           {"vocab", "embed_dim", "frame_dim", "min_duration", "max_duration", "noise", "min_tokens",
                            "max_tokens"},
                           "config.task");
    read_size(k, "vocab", cfg.task.vocab, "config.task");
    read_size(k, "embed_dim", cfg.task.embed_dim, "config.task");
    read_size(k, "frame_dim", cfg.task.frame_dim, "config.task");
    read_size(k, "min_duration", cfg.task.min_duration, "config.task");
    read_size(k, "max_duration", cfg.task.max_duration, "config.task");
    read(k, "noise", cfg.task.noise, "config.task");
    read_size(k, "min_tokens", cfg.task.min_tokens, "config.task");
    read_size(k, "max_tokens", cfg.task.max_tokens, "config.task");
  }
  if (doc.contains("train")) {
    const json& r = doc["train"];
    detail::reject_unknown(r,
                           {"steps", "learning_rate", "optimizer", "batch_size", "ap_weight", "text_layers",
                            "frame_layers", "kernel_width", "predictor_hidden", "eval_size", "accuracy_threshold",
                            "threshold_window"},
                           "config.train");
    read_size(r, "steps", t.steps, "config.train");
    read(r, "learning_rate", t.learning_rate, "config.train");
    if (r.contains("optimizer")) {
      if (!r["optimizer"].is_string()) throw ParseError("config.train.optimizer must be a string");
      t.optimizer = toy::parse_optimizer(r["optimizer"].get<std::string>());
    }
    read_size(r, "batch_size", t.batch_size, "config.train");
    read(r, "ap_weight", t.ap_weight, "config.train");
    read_size(r, "text_layers", t.text_layers, "config.train");
    read_size(r, "frame_layers", t.frame_layers, "config.train");
    read_size(r, "kernel_width", t.kernel_width, "config.train");
    read_size(r, "predictor_hidden", t.predictor_hidden, "config.train");
    read_size(r, "eval_size", t.eval_size, "config.train");
    read(r, "accuracy_threshold", t.accuracy_threshold, "config.train");
    read_size(r, "threshold_window", t.threshold_window, "config.train");
  }
  cfg.task.validate();
  t.validate();
  return cfg;
}

inline RunConfig read_run_config(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(doc);
}

inline RunConfig read_run_config_file(const std::string& path) {
  auto in = detail::open_in(path);
  return read_run_config(in);
}

inline json to_json(const toy::StepRecord& r) {
  return {{"step", r.step},         {"loss", r.loss},         {"reconstruction", r.reconstruction},
          {"ap", r.ap},             {"sma", r.sma},           {"accuracy", r.accuracy},
          {"diagonality", r.diagonality}, {"skipped", r.skipped}};
}

inline json summary_json(const toy::TrainReport& r) {
  json s = {{"mode", toy::to_string(r.mode)},
            {"final_accuracy", r.final_accuracy},
            {"final_diagonality", r.final_diagonality},
            {"final_reconstruction", r.final_reconstruction},
            {"steps_to_threshold", nullptr}};
  if (r.steps_to_threshold) s["steps_to_threshold"] = *r.steps_to_threshold;
  return s;
}

/// One JSON object per line: every step record, then {"summary": ...}.
inline void write_report(std::ostream& out, const toy::TrainReport& r) {
  for (const auto& rec : r.steps) out << to_json(rec).dump() << '\n';
  out << json{{"summary", summary_json(r)}}.dump() << '\n';
}

}  // namespace imv::io
