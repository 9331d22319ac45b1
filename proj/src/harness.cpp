#include "ubatch/harness.hpp"

#include "ubatch/errors.hpp"
#include "ubatch/shape.hpp"
#include "ubatch/synth.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

namespace ubatch::harness {

using nlohmann::json;

std::string_view to_string(ExperimentId id) {
  switch (id) {
    case ExperimentId::vary_n: return "vary_n";
    case ExperimentId::vary_k: return "vary_k";
    case ExperimentId::vary_eps: return "vary_eps";
    case ExperimentId::vary_N: return "vary_N";
  }
  return "unknown";
}

std::string_view to_string(ExperimentType type) {
  return type == ExperimentType::arbitrary ? "arbitrary" : "structured";
}

ExperimentId parse_experiment_id(std::string_view s) {
  for (auto id : {ExperimentId::vary_n, ExperimentId::vary_k, ExperimentId::vary_eps,
                  ExperimentId::vary_N}) {
    if (s == to_string(id)) return id;
  }
  throw InvalidInput("unknown experiment_id '" + std::string(s) +
                     "' (expected vary_n, vary_k, vary_eps or vary_N)");
}

ExperimentType parse_experiment_type(std::string_view s) {
  if (s == "arbitrary" || s == "A") return ExperimentType::arbitrary;
  if (s == "structured" || s == "B") return ExperimentType::structured;
  throw InvalidInput("unknown experiment_type '" + std::string(s) +
                     "' (expected arbitrary/A or structured/B)");
}

void ExperimentConfig::validate() const {
  if (sweep.empty()) throw InvalidInput("ExperimentConfig: sweep values must be nonempty");
  if (trials < 1) throw InvalidInput("ExperimentConfig: trials must be >= 1");
  if (threads < 1) throw InvalidInput("ExperimentConfig: threads must be >= 1");
  if (n < 2) throw InvalidInput("ExperimentConfig: n must be >= 2");
  if (k < 1) throw InvalidInput("ExperimentConfig: k must be >= 1");
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidInput("ExperimentConfig: eps must lie in [0, 1)");
  if (!(delta_adv >= 0.0 && delta_adv <= 1.0))
    throw InvalidInput("ExperimentConfig: delta_adv must lie in [0, 1]");
  if (pieces < 1 || degree < 0) throw InvalidInput("ExperimentConfig: bad pieces/degree");
  if (ell < 2) throw InvalidInput("ExperimentConfig: ell must be >= 2");
  if (num_batches && *num_batches == 0) throw InvalidInput("ExperimentConfig: N must be >= 1");
  for (double v : sweep) {
    if (!std::isfinite(v)) throw InvalidInput("ExperimentConfig: non-finite sweep value");
    switch (experiment_id) {
      case ExperimentId::vary_n:
        if (v < 2 || v != std::floor(v) || (static_cast<std::size_t>(v) % 2) != 0)
          throw InvalidInput("ExperimentConfig: vary_n needs even integer n >= 2");
        break;
      case ExperimentId::vary_k:
        if (v < 1 || v != std::floor(v))
          throw InvalidInput("ExperimentConfig: vary_k needs integer k >= 1");
        break;
      case ExperimentId::vary_eps:
        if (!(v >= 0.0 && v < 1.0)) throw InvalidInput("ExperimentConfig: eps sweep outside [0, 1)");
        break;
      case ExperimentId::vary_N:
        if (!(v > 0.0)) throw InvalidInput("ExperimentConfig: rho sweep must be positive");
        break;
    }
  }
  if (experiment_id != ExperimentId::vary_n && n % 2 != 0)
    throw InvalidInput("ExperimentConfig: n must be even for the adversary");
  filter.validate();
}

std::size_t batches_for_clean_target(int ell, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidInput("batches_for_clean_target: eps in (0, 1)");
  return static_cast<std::size_t>(std::floor((ell / (eps * eps)) / (1.0 - eps) + 1e-9));
}

std::size_t scaled_batch_count(double rho, int ell, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("scaled_batch_count: eps must be positive");
  return static_cast<std::size_t>(std::floor(rho * ell / (eps * eps) + 1e-9));
}

ExperimentConfig default_config(ExperimentId id, ExperimentType type) {
  ExperimentConfig c;
  c.experiment_id = id;
  c.experiment_type = type;
  c.delta_adv = type == ExperimentType::arbitrary ? 0.5 : 0.3;
  c.filter.use_threshold = false;
  c.filter.use_plateau = true;
  switch (id) {
    case ExperimentId::vary_n:
      c.sweep = {4, 8, 16, 32, 64, 128};
      break;
    case ExperimentId::vary_k:
      c.n = 64;
      c.sweep = {1, 50, 100, 250, 500, 750, 1000};
      break;
    case ExperimentId::vary_eps:
      c.n = 64;
      c.sweep = {0.0, 0.1, 0.2, 0.3, 0.4};
      break;
    case ExperimentId::vary_N:
      c.n = 128;
      c.k = 500;
      c.sweep = {0.5, 0.75, 1.0, 1.25, 1.5};
      break;
  }
  return c;
}

Histogram estimator_naive(const BatchDataset& data) {
  if (data.num_batches() == 0) throw InvalidInput("estimator_naive: empty dataset");
  return weighted_mean(Vector::Ones(static_cast<Eigen::Index>(data.num_batches())), data);
}

Histogram estimator_oracle(const BatchDataset& data) {
  if (!data.ground_truth()) throw InvalidInput("estimator_oracle: dataset has no ground truth");
  Vector w = Vector::Ones(static_cast<Eigen::Index>(data.num_batches()));
  for (std::size_t i : data.ground_truth()->corrupted_indices) w(static_cast<Eigen::Index>(i)) = 0.0;
  if (w.sum() <= 0.0) throw DegenerateWeights("estimator_oracle: every batch is corrupted");
  return weighted_mean(w, data);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t trial_seed(std::uint64_t base, int trial) {
  return splitmix64(splitmix64(base) ^ static_cast<std::uint64_t>(trial + 1));
}

std::uint64_t point_seed(std::uint64_t trial_s, std::size_t point) {
  return splitmix64(trial_s + 0xD1B54A32D192ED03ULL * (point + 1));
}

std::string param_name(ExperimentId id) {
  switch (id) {
    case ExperimentId::vary_n: return "n";
    case ExperimentId::vary_k: return "k";
    case ExperimentId::vary_eps: return "eps";
    case ExperimentId::vary_N: return "rho";
  }
  return "";
}

// CSV cells must not carry separators or line breaks.
std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  }
  return s;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

struct Point {
  BatchDataset data;
  Histogram mu;
  double eps = 0.0;
  int k = 0;
};

class TrialRunner {
 public:
  explicit TrialRunner(const ExperimentConfig& c) : c_(c) {}

  std::vector<ExperimentRecord> run(int trial) const {
    std::vector<ExperimentRecord> out;
    const std::uint64_t ts = trial_seed(c_.base_seed, trial);
    synth::Rng trial_rng(ts);
    const bool structured = c_.experiment_type == ExperimentType::structured;

    // Per-trial state shared by the sweep points of (b), (c), (d).
    std::optional<synth::TargetPair> pair;
    std::vector<FrequencyVector> clean;
    std::string trial_failure;
    if (c_.experiment_id != ExperimentId::vary_n) {
      try {
        pair = synth::sample_target_pair(c_.n, structured, pieces(), c_.delta_adv, trial_rng);
        if (c_.experiment_id == ExperimentId::vary_eps) {
          const std::size_t n_clean =
              c_.num_batches ? *c_.num_batches
                             : static_cast<std::size_t>(
                                   std::floor(c_.ell / (c_.eps * c_.eps) + 1e-9));
          clean.reserve(n_clean);
          for (std::size_t i = 0; i < n_clean; ++i)
            clean.push_back(synth::sample_multinomial(pair->mu, c_.k, trial_rng));
        }
      } catch (const std::exception& e) {
        trial_failure = e.what();
      }
    }

    for (std::size_t p = 0; p < c_.sweep.size(); ++p) {
      const double value = c_.sweep[p];
      const std::uint64_t ps = point_seed(ts, p);
      ExperimentRecord base;
      base.experiment_id = std::string(to_string(c_.experiment_id));
      base.experiment_type = std::string(to_string(c_.experiment_type));
      base.trial = trial;
      base.param_name = param_name(c_.experiment_id);
      base.param_value = value;
      base.seed = ps;

      std::optional<Point> point;
      std::string failure = trial_failure;
      if (failure.empty()) {
        try {
          point = make_point(value, ps, pair, clean);
        } catch (const std::exception& e) {
          failure = e.what();
        }
      }
      if (!point) {
        for (const char* est : {"filter", "naive", "oracle", "reference"}) {
          out.push_back(failed(base, est, failure));
        }
        continue;
      }
      score_point(*point, base, out);
    }
    return out;
  }

 private:
  std::size_t pieces() const { return static_cast<std::size_t>(c_.pieces); }

  Point make_point(double value, std::uint64_t seed, const std::optional<synth::TargetPair>& pair,
                   const std::vector<FrequencyVector>& clean) const {
    synth::Rng rng(seed);
    const bool structured = c_.experiment_type == ExperimentType::structured;
    Point pt;
    pt.eps = c_.eps;
    pt.k = c_.k;
    switch (c_.experiment_id) {
      case ExperimentId::vary_n: {
        const auto n = static_cast<std::size_t>(value);
        auto fresh = synth::sample_target_pair(n, structured, pieces(), c_.delta_adv, rng);
        const std::size_t N = c_.num_batches.value_or(batches_for_clean_target(c_.ell, c_.eps));
        pt.data = synth::generate_corrupted_dataset(fresh.mu, fresh.nu, N, c_.eps, c_.k, rng);
        pt.mu = fresh.mu;
        break;
      }
      case ExperimentId::vary_k: {
        pt.k = static_cast<int>(value);
        const std::size_t N = c_.num_batches.value_or(batches_for_clean_target(c_.ell, c_.eps));
        pt.data = synth::generate_corrupted_dataset(pair->mu, pair->nu, N, c_.eps, pt.k, rng);
        pt.mu = pair->mu;
        break;
      }
      case ExperimentId::vary_eps: {
        pt.eps = value;
        const auto extra = static_cast<std::size_t>(
            std::floor(value * static_cast<double>(clean.size()) / (1.0 - value) + 1e-9));
        std::vector<FrequencyVector> bad;
        bad.reserve(extra);
        for (std::size_t i = 0; i < extra; ++i)
          bad.push_back(synth::sample_multinomial(pair->nu, c_.k, rng));
        pt.data = synth::assemble_dataset(pair->mu, pair->nu, clean, std::move(bad), c_.k, rng);
        pt.mu = pair->mu;
        break;
      }
      case ExperimentId::vary_N: {
        const std::size_t N = std::max<std::size_t>(1, scaled_batch_count(value, c_.ell, c_.eps));
        pt.data = synth::generate_corrupted_dataset(pair->mu, pair->nu, N, c_.eps, c_.k, rng);
        pt.mu = pair->mu;
        break;
      }
    }
    return pt;
  }

  ExperimentRecord failed(const ExperimentRecord& base, const char* estimator,
                          const std::string& why) const {
    ExperimentRecord r = base;
    r.estimator = estimator;
    r.error_ak = std::numeric_limits<double>::quiet_NaN();
    r.error_tv = std::numeric_limits<double>::quiet_NaN();
    r.stop_reason = "failed: " + sanitize(why);
    return r;
  }

  void score(ExperimentRecord& r, const Vector& estimate, const Histogram& mu) const {
    r.error_ak = shape::ak_distance(estimate, mu.probs(), std::max(1, c_.ell / 2));
    r.error_tv = tv_distance(estimate, mu.probs());
  }

  void score_point(const Point& pt, const ExperimentRecord& base,
                   std::vector<ExperimentRecord>& out) const {
    const ShapeParams shape(c_.pieces, c_.degree);
    {
      ExperimentRecord r = base;
      r.estimator = "filter";
      const auto start = std::chrono::steady_clock::now();
      try {
        filter::FilterConfig fc = c_.filter;
        fc.ell = c_.ell;
        fc.solver.ell = c_.ell;
        const auto result = filter::learn_with_filter(pt.data, shape, pt.eps, 0.0, fc);
        Vector estimate = result.raw_estimate.probs();
        if (c_.experiment_type == ExperimentType::structured) {
          estimate = shape::round_to_distribution(estimate, shape).probs();
        }
        r.runtime_ms = elapsed_ms(start);
        score(r, estimate, pt.mu);
        r.rounds = result.state.round;
        r.stop_reason = std::string(filter::to_string(result.state.stop_reason));
      } catch (const std::exception& e) {
        r = failed(base, "filter", e.what());
        r.runtime_ms = elapsed_ms(start);
      }
      out.push_back(std::move(r));
    }
    for (const char* name : {"naive", "oracle"}) {
      ExperimentRecord r = base;
      r.estimator = name;
      const auto start = std::chrono::steady_clock::now();
      try {
        const Histogram est = std::string_view(name) == "naive" ? estimator_naive(pt.data)
                                                                : estimator_oracle(pt.data);
        r.runtime_ms = elapsed_ms(start);
        score(r, est.probs(), pt.mu);
      } catch (const std::exception& e) {
        r = failed(base, name, e.what());
      }
      out.push_back(std::move(r));
    }
    ExperimentRecord ref = base;
    ref.estimator = "reference";
    ref.error_ak = ref.error_tv = pt.eps / std::sqrt(static_cast<double>(pt.k));
    out.push_back(std::move(ref));
  }

  const ExperimentConfig& c_;
};

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const TrialRunner runner(config);
  std::vector<std::vector<ExperimentRecord>> per_trial(static_cast<std::size_t>(config.trials));
  const int workers = std::min(config.threads, config.trials);
  if (workers <= 1) {
    for (int t = 0; t < config.trials; ++t) per_trial[static_cast<std::size_t>(t)] = runner.run(t);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int t = next++; t < config.trials; t = next++) {
          try {
            per_trial[static_cast<std::size_t>(t)] = runner.run(t);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }
  std::vector<ExperimentRecord> out;
  for (auto& rows : per_trial) {
    for (auto& r : rows) out.push_back(std::move(r));
  }
  return out;
}

void write_csv_header(std::ostream& out) { out << kCsvHeader << '\n'; }

void write_csv_rows(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  for (const auto& r : records) {
    out << r.experiment_id << ',' << r.experiment_type << ',' << r.trial << ',' << r.param_name
        << ',' << format_double(r.param_value) << ',' << r.estimator << ','
        << format_double(r.error_ak) << ',' << format_double(r.error_tv) << ',' << r.rounds << ','
        << sanitize(r.stop_reason) << ',' << format_double(r.runtime_ms) << ',' << r.seed << '\n';
  }
  if (!out) throw IoError("write_csv_rows: stream write failed");
}

nlohmann::json filter_config_to_json(const filter::FilterConfig& c) {
  return json{{"use_threshold", c.use_threshold},
              {"threshold_c", c.threshold_c},
              {"use_plateau", c.use_plateau},
              {"plateau_window", c.plateau_window},
              {"max_rounds", c.max_rounds},
              {"neg_tol", c.neg_tol},
              {"solver",
               {{"step_size", c.solver.step_size},
                {"max_outer_iters", c.solver.max_outer_iters},
                {"dykstra_iters", c.solver.dykstra_iters},
                {"feas_tol", c.solver.feas_tol},
                {"value_tol", c.solver.value_tol},
                {"value_window", c.solver.value_window}}}};
}

filter::FilterConfig filter_config_from_json(const nlohmann::json& doc, filter::FilterConfig c) {
  if (!doc.is_object()) throw InvalidInput("filter config must be a JSON object");
  c.use_threshold = doc.value("use_threshold", c.use_threshold);
  c.threshold_c = doc.value("threshold_c", c.threshold_c);
  c.use_plateau = doc.value("use_plateau", c.use_plateau);
  c.plateau_window = doc.value("plateau_window", c.plateau_window);
  c.max_rounds = doc.value("max_rounds", c.max_rounds);
  c.neg_tol = doc.value("neg_tol", c.neg_tol);
  if (doc.contains("solver")) {
    const auto& s = doc.at("solver");
    c.solver.step_size = s.value("step_size", c.solver.step_size);
    c.solver.max_outer_iters = s.value("max_outer_iters", c.solver.max_outer_iters);
    c.solver.dykstra_iters = s.value("dykstra_iters", c.solver.dykstra_iters);
    c.solver.feas_tol = s.value("feas_tol", c.solver.feas_tol);
    c.solver.value_tol = s.value("value_tol", c.solver.value_tol);
    c.solver.value_window = s.value("value_window", c.solver.value_window);
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  json j{{"experiment_id", to_string(c.experiment_id)},
         {"experiment_type", to_string(c.experiment_type)},
         {"n", c.n},
         {"k", c.k},
         {"eps", c.eps},
         {"delta_adv", c.delta_adv},
         {"pieces", c.pieces},
         {"degree", c.degree},
         {"ell", c.ell},
         {"sweep", c.sweep},
         {"trials", c.trials},
         {"base_seed", c.base_seed},
         {"threads", c.threads},
         {"filter", filter_config_to_json(c.filter)}};
  j["N"] = c.num_batches ? json(*c.num_batches) : json(nullptr);
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InvalidInput("experiment config must be a JSON object");
  try {
    const auto id = parse_experiment_id(doc.at("experiment_id").get<std::string>());
    const auto type = parse_experiment_type(doc.value("experiment_type", std::string("arbitrary")));
    ExperimentConfig c = default_config(id, type);
    c.n = doc.value("n", c.n);
    c.k = doc.value("k", c.k);
    c.eps = doc.value("eps", c.eps);
    c.delta_adv = doc.value("delta_adv", c.delta_adv);
    c.pieces = doc.value("pieces", c.pieces);
    c.degree = doc.value("degree", c.degree);
    c.ell = doc.value("ell", c.ell);
    if (doc.contains("N") && !doc.at("N").is_null()) c.num_batches = doc.at("N").get<std::size_t>();
    if (doc.contains("sweep")) c.sweep = doc.at("sweep").get<std::vector<double>>();
    c.trials = doc.value("trials", c.trials);
    c.base_seed = doc.value("base_seed", c.base_seed);
    c.threads = doc.value("threads", c.threads);
    if (doc.contains("filter")) c.filter = filter_config_from_json(doc.at("filter"), c.filter);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("experiment config: ") + e.what());
  }
}

std::vector<ExperimentConfig> configs_from_json(const nlohmann::json& doc) {
  std::vector<ExperimentConfig> out;
  if (doc.is_array()) {
    for (const auto& item : doc) out.push_back(config_from_json(item));
  } else {
    out.push_back(config_from_json(doc));
  }
  if (out.empty()) throw InvalidInput("experiment config: empty array");
  return out;
}

}  // namespace ubatch::harness
