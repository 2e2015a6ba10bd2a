#pragma once

// Command-line front end. run_cli() takes the arguments after the program
// name and returns the process exit code:
//   0 ok, 2 usage or parse error, 3 contract violation, 4 numeric failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "imv/aligned_position.hpp"
#include "imv/alignment.hpp"
#include "imv/error.hpp"
#include "imv/gradcheck_suite.hpp"
#include "imv/io/config.hpp"
#include "imv/io/matrix_io.hpp"
#include "imv/monotonic.hpp"
#include "imv/toy/trainer.hpp"

namespace imv::cli {

enum ExitCode : int { ok = 0, usage = 2, contract = 3, numeric = 4 };

namespace detail {

/// T1 implied by an IMV when --t1 is absent: round(max pi) + 1.
inline std::size_t implied_t1(const Matrix& pi) {
  const double top = *std::max_element(pi.values().begin(), pi.values().end());
  return static_cast<std::size_t>(std::max(0L, std::lround(top))) + 1;
}

inline Imv load_imv(const std::string& path, const std::optional<std::size_t>& t1) {
  Matrix pi = io::read_vector_file(path);
  const std::size_t n = t1 ? *t1 : implied_t1(pi);
  return Imv(std::move(pi), n);
}

inline void emit_vector(const std::string& path, const Matrix& v, std::ostream& out) {
  if (path.empty()) io::write_vector(out, v);
  else io::write_vector_file(path, v);
}

inline void emit_matrix(const std::string& path, const Matrix& m, std::ostream& out) {
  if (path.empty()) io::write_matrix(out, m);
  else io::write_matrix_file(path, m);
}

inline void print_report(std::ostream& out, const ImvValidationReport& r) {
  out << (r.monotone_continuous ? "monotone" : "not monotone") << ", "
      << (r.complete ? "complete" : "incomplete") << '\n';
  out << "pi_0 = " << r.start << ", pi_last = " << r.end << '\n';
  for (const auto& v : r.violations) out << "  delta pi[" << v.index << "] = " << v.delta << '\n';
}

}  // namespace detail

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Index mapping vector (IMV) alignment tools", "imv"};
  app.require_subcommand(1);

  std::string alignment_path, imv_path, out_path, config_path, op;
  std::optional<std::size_t> t1;
  std::size_t oracle_t1 = 0, oracle_t2 = 0;
  double sigma2 = KernelConfig{}.sigma2;
  double rate = 1.0;
  std::uint64_t seed = 1;
  std::size_t seeds = 1;
  SmaWeights weights;
  std::string boundary = "squared";
  bool printed_sign = false;

  auto* imv_cmd = app.add_subcommand("imv", "IMV of an alignment matrix, with constraint report");
  imv_cmd->add_option("--alignment", alignment_path, "MatrixFile (T1 x T2)")->required();
  imv_cmd->add_option("--out", out_path, "output vector file")->required();

  auto* hma_cmd = app.add_subcommand("hma", "hard monotonic transform of a raw IMV");
  hma_cmd->add_option("--imv", imv_path, "raw IMV vector file")->required();
  hma_cmd->add_option("--t1", t1, "input length (default: round(max pi) + 1)");
  hma_cmd->add_option("--out", out_path, "output vector file (default: stdout)");

  auto* rec_cmd = app.add_subcommand("reconstruct", "Gaussian alignment around an IMV");
  rec_cmd->add_option("--imv", imv_path, "IMV vector file")->required();
  rec_cmd->add_option("--t1", t1, "input length (default: round(max pi) + 1)");
  rec_cmd->add_option("--sigma2", sigma2, "kernel variance");
  rec_cmd->add_option("--out", out_path, "output MatrixFile (default: stdout)");

  auto* pos_cmd = app.add_subcommand("positions", "aligned positions e of an IMV");
  pos_cmd->add_option("--imv", imv_path, "IMV vector file")->required();
  pos_cmd->add_option("--t1", t1, "input length (default: round(max pi) + 1)");
  pos_cmd->add_option("--sigma2", sigma2, "kernel variance");
  pos_cmd->add_option("--rate", rate, "multiply positions by this speech-rate factor");
  pos_cmd->add_option("--out", out_path, "output vector file (default: stdout)");

  auto* sma_cmd = app.add_subcommand("sma", "soft monotonic alignment loss of an IMV");
  sma_cmd->add_option("--imv", imv_path, "IMV vector file")->required();
  sma_cmd->add_option("--t1", t1, "input length (default: round(max pi) + 1)");
  sma_cmd->add_option("--lambda0", weights.lambda0);
  sma_cmd->add_option("--lambda1", weights.lambda1);
  sma_cmd->add_option("--lambda2", weights.lambda2);
  sma_cmd->add_option("--lambda3", weights.lambda3);
  sma_cmd->add_option("--boundary", boundary, "squared or absolute")
      ->check(CLI::IsMember({"squared", "absolute"}));

  auto* oracle_cmd = app.add_subcommand("oracle", "enumerate every monotonic path and check its IMV");
  oracle_cmd->add_option("--t1", oracle_t1)->required();
  oracle_cmd->add_option("--t2", oracle_t2)->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of a named operation");
  grad_cmd->add_option("--op", op, "operation name or 'all'")->required();
  grad_cmd->add_option("--seed", seed, "first input seed");
  grad_cmd->add_option("--seeds", seeds, "number of consecutive seeds");

  auto* train_cmd = app.add_subcommand("train-toy", "train the toy model from a JSON config");
  train_cmd->add_option("--config", config_path, "RunConfig JSON")->required();
  train_cmd->add_flag("--printed-sign", printed_sign, "negate the attention logits (overrides the config)");

  auto* heat_cmd = app.add_subcommand("heatmap", "ASCII PGM heatmap of a matrix");
  heat_cmd->add_option("--alignment", alignment_path, "MatrixFile")->required();
  heat_cmd->add_option("--out", out_path, "output .pgm")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    if (*imv_cmd) {
      const Imv pi = compute_imv(io::read_matrix_file(alignment_path));
      detail::emit_vector(out_path, pi.pi, out);
      if (pi.t2() >= 2) detail::print_report(out, validate_imv(pi));
    } else if (*hma_cmd) {
      detail::emit_vector(out_path, hma_transform(detail::load_imv(imv_path, t1)).pi, out);
    } else if (*rec_cmd) {
      detail::emit_matrix(out_path, align_from_imv(detail::load_imv(imv_path, t1), {sigma2}).matrix(), out);
    } else if (*pos_cmd) {
      const auto e = scale_positions(extract_positions(detail::load_imv(imv_path, t1), {sigma2}), rate);
      detail::emit_vector(out_path, e.e, out);
    } else if (*sma_cmd) {
      weights.boundary = boundary == "absolute" ? BoundaryPenalty::absolute : BoundaryPenalty::squared;
      out << io::detail::format(sma_loss(detail::load_imv(imv_path, t1), weights)) << '\n';
    } else if (*oracle_cmd) {
      if (oracle_t1 < 1 || oracle_t1 > oracle_t2) {
        err << "oracle: need 1 <= t1 <= t2 (got t1 = " << oracle_t1 << ", t2 = " << oracle_t2 << ")\n";
        return usage;
      }
      const auto paths = enumerate_monotonic_paths(oracle_t1, oracle_t2);
      bool pass = paths.size() == binomial(oracle_t2 - 1, oracle_t1 - 1);
      for (const auto& alpha : paths) {
        const Imv pi = compute_imv(alpha);
        for (double d : pi.deltas()) pass = pass && (d == 0.0 || d == 1.0);
        pass = pass && pi[0] == 0.0 && pi[pi.t2() - 1] == static_cast<double>(oracle_t1 - 1);
      }
      out << paths.size() << " paths, " << (pass ? "PASS" : "FAIL") << '\n';
      return pass ? ok : contract;
    } else if (*grad_cmd) {
      std::vector<std::string> names;
      if (op == "all") names = gradcheck_ops();
      else if (std::find(gradcheck_ops().begin(), gradcheck_ops().end(), op) != gradcheck_ops().end()) names = {op};
      else {
        err << "gradcheck: unknown op '" << op << "'\n";
        return usage;
      }
      bool pass = true;
      for (const auto& name : names) {
        for (std::uint64_t s = seed; s < seed + std::max<std::size_t>(seeds, 1); ++s) {
          const GradCheckReport r = run_gradcheck(name, s);
          pass = pass && r.pass;
          out << name << " seed " << s << ": " << (r.pass ? "PASS" : "FAIL") << " max_rel_err " << std::setprecision(3)
              << r.max_relative_error << " checked " << r.checked_count << " excluded " << r.excluded_count << '\n';
        }
      }
      return pass ? ok : numeric;
    } else if (*train_cmd) {
      io::RunConfig cfg = io::read_run_config_file(config_path);
      if (printed_sign) cfg.train.logit_sign = LogitSign::negated;
      toy::ToyModel model = toy::init_model(cfg.task, cfg.train);
      const toy::TrainReport report = toy::train(model);
      {
        auto f = io::detail::open_out(cfg.report_path);
        io::write_report(f, report);
      }
      // First held-out example whose alignment is defined.
      for (const auto& batch : toy::eval_set(model)) {
        try {
          io::write_pgm_file(cfg.heatmap_path, toy::toy_forward(model, batch).alignment);
          break;
        } catch (const DegenerateImvError&) {
        }
      }
      out << io::summary_json(report).dump() << '\n';
    } else if (*heat_cmd) {
      io::write_pgm_file(out_path, io::read_matrix_file(alignment_path));
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const ContractError& e) {
    err << "contract violation: " << e.what() << '\n';
    return contract;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return numeric;
  }
  return ok;
}

}  // namespace imv::cli
