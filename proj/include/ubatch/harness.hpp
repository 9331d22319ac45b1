#pragma once

#include "ubatch/filter.hpp"
#include "ubatch/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ubatch::harness {

enum class ExperimentId { vary_n, vary_k, vary_eps, vary_N };
// arbitrary: A_{ell/2} error on unstructured mu. structured: TV error on
// piecewise-constant mu, filter estimate rounded first.
enum class ExperimentType { arbitrary, structured };

std::string_view to_string(ExperimentId id);
std::string_view to_string(ExperimentType type);
ExperimentId parse_experiment_id(std::string_view s);
ExperimentType parse_experiment_type(std::string_view s);

struct ExperimentConfig {
  ExperimentId experiment_id = ExperimentId::vary_eps;
  ExperimentType experiment_type = ExperimentType::arbitrary;
  std::size_t n = 64;
  int k = 1000;
  double eps = 0.4;
  double delta_adv = 0.5;
  int pieces = 5;
  int degree = 0;
  int ell = 10;
  // Overrides the batch-count formula of the experiment when set.
  std::optional<std::size_t> num_batches;
  std::vector<double> sweep;
  int trials = 10;
  std::uint64_t base_seed = 1;
  int threads = 1;
  filter::FilterConfig filter;

  void validate() const;
};

/// Parameter defaults of the four sweeps (threshold stop off, plateau on).
ExperimentConfig default_config(ExperimentId id, ExperimentType type);

// floor((ell / eps^2) / (1 - eps)): total batches so that floor(ell / eps^2) are clean.
std::size_t batches_for_clean_target(int ell, double eps);
// floor(rho * ell / eps^2).
std::size_t scaled_batch_count(double rho, int ell, double eps);

struct ExperimentRecord {
  std::string experiment_id;
  std::string experiment_type;
  int trial = 0;
  std::string param_name;
  double param_value = 0.0;
  std::string estimator;  // filter, naive, oracle, reference
  double error_ak = 0.0;
  double error_tv = 0.0;
  int rounds = 0;
  std::string stop_reason;
  double runtime_ms = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr std::string_view kCsvHeader =
    "experiment_id,experiment_type,trial,param_name,param_value,estimator,error_ak,error_tv,"
    "rounds,stop_reason,runtime_ms,seed";

Histogram estimator_naive(const BatchDataset& data);
// Mean of the uncorrupted batches; needs ground truth.
Histogram estimator_oracle(const BatchDataset& data);

/// Every (trial, sweep value) point yields four rows: filter, naive, oracle, reference.
std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& config);

void write_csv_header(std::ostream& out);
void write_csv_rows(std::ostream& out, const std::vector<ExperimentRecord>& records);

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
// Accepts one config object or an array of them.
std::vector<ExperimentConfig> configs_from_json(const nlohmann::json& doc);

nlohmann::json filter_config_to_json(const filter::FilterConfig& config);
filter::FilterConfig filter_config_from_json(const nlohmann::json& doc,
                                             filter::FilterConfig base = {});

}  // namespace ubatch::harness
