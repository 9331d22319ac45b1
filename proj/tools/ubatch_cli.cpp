// ubatch: robust distribution learning from untrusted batches.
#include "ubatch/dataset_io.hpp"
#include "ubatch/errors.hpp"
#include "ubatch/filter.hpp"
#include "ubatch/harness.hpp"
#include "ubatch/knorm.hpp"
#include "ubatch/shape.hpp"
#include "ubatch/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct GenOptions {
  std::size_t n = 16;
  int k = 100;
  std::size_t batches = 20;
  double eps = 0.2;
  double delta_adv = 0.5;
  std::size_t pieces = 5;
  bool structured = false;
  std::uint64_t seed = 1;
  std::string out;
};

struct EstimateOptions {
  std::string in;
  int pieces = 5;
  int degree = 0;
  double eps = 0.4;
  double omega = 0.0;
  bool round = true;
  std::string out;
  ubatch::filter::FilterConfig filter;
};

struct ExperimentOptions {
  std::string config;
  std::string out;
  std::optional<int> threads;
  bool append = false;
};

struct OracleOptions {
  std::size_t n = 8;
  int ell = 2;
  int trials = 50;
  std::uint64_t seed = 1;
  double tol = 1e-3;
  ubatch::knorm::SolverConfig solver;
};

void add_solver_flags(CLI::App* cmd, ubatch::knorm::SolverConfig& s) {
  cmd->add_option("--max-iters", s.max_outer_iters, "Solver iteration cap per sign")
      ->capture_default_str();
  cmd->add_option("--feas-tol", s.feas_tol, "Solver primal feasibility tolerance")
      ->capture_default_str();
  cmd->add_option("--value-tol", s.value_tol,
                  "Stop when the objective gains less than this (relative) over the window")
      ->capture_default_str();
  cmd->add_option("--value-window", s.value_window, "Iterations in the stagnation window")
      ->capture_default_str();
  cmd->add_option("--dykstra-iters", s.dykstra_iters, "Dykstra sweeps for the final projection")
      ->capture_default_str();
  cmd->add_option("--step-size", s.step_size, "Initial penalty; <= 0 selects 1/|M|_F")
      ->capture_default_str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw ubatch::IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw ubatch::IoError("write to '" + path + "' failed");
}

int run_gen(const GenOptions& o) {
  ubatch::synth::Rng rng(o.seed);
  const auto pair =
      ubatch::synth::sample_target_pair(o.n, o.structured, o.pieces, o.delta_adv, rng);
  const auto data =
      ubatch::synth::generate_corrupted_dataset(pair.mu, pair.nu, o.batches, o.eps, o.k, rng);
  ubatch::write_dataset(data, o.out);
  std::cerr << "wrote " << data.num_batches() << " batches ("
            << data.ground_truth()->corrupted_indices.size() << " corrupted) to " << o.out
            << '\n';
  return kExitOk;
}

int run_estimate(const EstimateOptions& o) {
  const auto data = ubatch::read_dataset(o.in);
  const ubatch::ShapeParams shape(o.pieces, o.degree);
  auto config = o.filter;
  if (config.ell > 0) config.solver.ell = config.ell;
  const auto result = ubatch::filter::learn_with_filter(data, shape, o.eps, o.omega, config);
  json doc;
  doc["raw_estimate"] = ubatch::vector_to_json(result.raw_estimate.probs());
  doc["rounds"] = result.state.round;
  doc["stop_reason"] = ubatch::filter::to_string(result.state.stop_reason);
  doc["knorm_trace"] = result.state.knorm_trace;
  doc["negative_score_events"] = result.state.negative_score_events;
  doc["final_weights"] = ubatch::vector_to_json(result.state.weights.values());
  if (o.round) {
    doc["rounded_estimate"] =
        ubatch::vector_to_json(ubatch::shape::round_to_distribution(result.raw_estimate.probs(),
                                                                    shape)
                                   .probs());
  }
  write_text(o.out, doc.dump(2) + "\n");
  return kExitOk;
}

int run_experiment_cmd(const ExperimentOptions& o) {
  std::ifstream f(o.config);
  if (!f) throw ubatch::IoError("cannot open config '" + o.config + "'");
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ubatch::IoError("config '" + o.config + "' is not valid JSON: " + e.what());
  }
  auto configs = ubatch::harness::configs_from_json(doc);
  if (o.threads) {
    for (auto& c : configs) c.threads = *o.threads;
  }

  const bool to_stdout = o.out.empty() || o.out == "-";
  std::ofstream file;
  bool need_header = true;
  if (!to_stdout) {
    std::error_code ec;
    if (o.append && fs::exists(o.out, ec) && fs::file_size(o.out, ec) > 0) need_header = false;
    file.open(o.out, o.append ? std::ios::app : std::ios::trunc);
    if (!file) throw ubatch::IoError("cannot open '" + o.out + "' for writing");
  }
  std::ostream& out = to_stdout ? std::cout : file;
  if (need_header) ubatch::harness::write_csv_header(out);
  for (const auto& c : configs) {
    const auto records = ubatch::harness::run_experiment(c);
    ubatch::harness::write_csv_rows(out, records);
    out.flush();
    std::cerr << ubatch::harness::to_string(c.experiment_id) << '/'
              << ubatch::harness::to_string(c.experiment_type) << ": " << records.size()
              << " rows\n";
  }
  return kExitOk;
}

int run_oracle_check(const OracleOptions& o) {
  if (o.n > 16) {
    std::cerr << "oracle-check: n = " << o.n
              << " is too large for exhaustive search (n <= 16 required)\n";
    return kExitUsage;
  }
  const auto report = ubatch::knorm::oracle_check(o.n, o.ell, o.trials, o.seed, o.solver);
  const double violation = std::max({0.0, report.max_violation, report.max_planted_gap});
  std::printf("trials %d  n %zu  ell %d\n", report.trials, o.n, o.ell);
  std::printf("max dominance violation  %.3e\n", std::max(0.0, report.max_violation));
  std::printf("max planted gap          %.3e\n", std::max(0.0, report.max_planted_gap));
  std::printf("max constraint residual  %.3e\n", report.max_residual);
  std::printf("max violation            %.3e (tolerance %.1e)\n", violation, o.tol);
  return violation <= o.tol ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ubatch: robust estimation of structured distributions from untrusted batches.\n\n"
      "Dataset files are JSON objects {\"n\", \"k\", \"batches\": [[counts per bin]...],\n"
      "\"ground_truth\": {\"mu\", \"nu\", \"corrupted_indices\"}} (ground_truth optional).\n"
      "Estimates are JSON objects with raw_estimate, rounds, stop_reason, knorm_trace,\n"
      "negative_score_events, final_weights and, unless --no-round, rounded_estimate.\n"
      "Experiment CSV columns: " +
      std::string(ubatch::harness::kCsvHeader) +
      ".\n\nExit codes: 0 success, 1 check failure, 2 usage, IO or data errors."};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic eps-corrupted dataset");
  gen_cmd->add_option("--n", gen.n, "Domain size (even)")->capture_default_str();
  gen_cmd->add_option("--k", gen.k, "Batch size")->capture_default_str();
  gen_cmd->add_option("--batches", gen.batches, "Number of batches N")->capture_default_str();
  gen_cmd->add_option("--eps", gen.eps, "Corruption fraction; floor((1-eps)N) batches are clean")
      ->capture_default_str();
  gen_cmd->add_option("--delta-adv", gen.delta_adv, "TV distance of the adversary's nu from mu")
      ->capture_default_str();
  gen_cmd->add_option("--pieces", gen.pieces, "Pieces of mu when --structured")
      ->capture_default_str();
  gen_cmd->add_flag("--structured", gen.structured, "Piecewise-constant mu instead of arbitrary");
  gen_cmd->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output dataset JSON")->required();

  EstimateOptions est;
  auto* est_cmd = app.add_subcommand("estimate", "Run the filter on a dataset");
  est_cmd->add_option("--in", est.in, "Input dataset JSON")->required();
  est_cmd->add_option("--pieces", est.pieces, "Pieces s of the target shape")
      ->capture_default_str();
  est_cmd->add_option("--degree", est.degree, "Polynomial degree d of each piece")
      ->capture_default_str();
  est_cmd->add_option("--eps", est.eps, "Corruption fraction used by the threshold stop")
      ->capture_default_str();
  est_cmd->add_option("--omega", est.omega, "Diversity of honest batches")->capture_default_str();
  est_cmd->add_flag("--round,!--no-round", est.round,
                    "Also report the estimate rounded to the shape (default on)");
  est_cmd->add_option("--ell", est.filter.ell, "Sign-change budget; 0 uses 2 s (d + 1)")
      ->capture_default_str();
  est_cmd->add_option("--threshold-c", est.filter.threshold_c,
                      "C in the stop rule C (omega + (eps/k) ln(1/eps))")
      ->capture_default_str();
  est_cmd->add_flag("!--no-threshold", est.filter.use_threshold, "Disable the threshold stop");
  est_cmd->add_flag("!--no-plateau", est.filter.use_plateau, "Disable the plateau stop");
  est_cmd->add_option("--plateau-window", est.filter.plateau_window,
                      "Rounds without a new K-norm minimum before stopping")
      ->capture_default_str();
  est_cmd->add_option("--max-rounds", est.filter.max_rounds, "Round cap; 0 means N")
      ->capture_default_str();
  est_cmd->add_option("--neg-tol", est.filter.neg_tol, "Tolerance for negative scores")
      ->capture_default_str();
  add_solver_flags(est_cmd, est.filter.solver);
  est_cmd->add_option("--out", est.out, "Output estimate JSON (default stdout)");

  ExperimentOptions exp;
  int threads = 0;
  auto* exp_cmd = app.add_subcommand("experiment", "Run an experiment sweep and write CSV");
  exp_cmd->add_option("--config", exp.config,
                      "Config JSON (object or array): experiment_id, experiment_type, n, k, eps, "
                      "delta_adv, pieces, degree, ell, N, sweep, trials, base_seed, threads, "
                      "filter")
      ->required();
  exp_cmd->add_option("--out", exp.out, "Output CSV (default stdout)");
  exp_cmd->add_option("--threads", threads, "Worker threads for trials (overrides config)");
  exp_cmd->add_flag("--append", exp.append, "Append rows to an existing CSV");

  OracleOptions orc;
  auto* orc_cmd = app.add_subcommand("oracle-check", "Compare k_norm with exhaustive search");
  orc_cmd->add_option("--n", orc.n, "Dimension (<= 16)")->capture_default_str();
  orc_cmd->add_option("--ell", orc.ell, "Sign-change budget")->capture_default_str();
  orc_cmd->add_option("--trials", orc.trials, "Random matrices")->capture_default_str();
  orc_cmd->add_option("--seed", orc.seed, "RNG seed")->capture_default_str();
  orc_cmd->add_option("--tol", orc.tol, "Allowed violation")->capture_default_str();
  add_solver_flags(orc_cmd, orc.solver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*est_cmd) return run_estimate(est);
    if (*exp_cmd) {
      if (threads > 0) exp.threads = threads;
      return run_experiment_cmd(exp);
    }
    if (*orc_cmd) return run_oracle_check(orc);
  } catch (const ubatch::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
