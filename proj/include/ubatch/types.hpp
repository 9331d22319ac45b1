#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ubatch {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kSimplexTol = 1e-9;

/// Probability vector over the domain [n]. Holds the true distribution, the
/// adversary's distribution and every estimate produced by the library.
class Histogram {
 public:
  Histogram() = default;
  // Throws InvalidInput unless probs is nonnegative and sums to 1 within 1e-9.
  explicit Histogram(Vector probs);

  static Histogram uniform(std::size_t n);
  static Histogram point_mass(std::size_t n, std::size_t at);

  const Vector& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(probs_.size()); }
  double operator[](std::size_t a) const { return probs_(static_cast<Eigen::Index>(a)); }

 private:
  Vector probs_;
};

/// Normalized histogram of one batch of k draws. Entries are multiples of 1/k.
class FrequencyVector {
 public:
  FrequencyVector() = default;
  FrequencyVector(Vector freqs, int k);

  const Vector& freqs() const noexcept { return freqs_; }
  int k() const noexcept { return k_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(freqs_.size()); }
  // Integer counts k * freqs, rounded.
  std::vector<long> counts() const;

 private:
  Vector freqs_;
  int k_ = 0;
};

FrequencyVector frequency_from_counts(std::span<const long> counts, int k);

/// Synthetic-run metadata: which batches the adversary supplied.
struct GroundTruth {
  Histogram mu;
  Histogram nu;
  std::vector<std::size_t> corrupted_indices;  // sorted ascending
};

class BatchDataset {
 public:
  BatchDataset() = default;
  BatchDataset(std::vector<FrequencyVector> batches, int k,
               std::optional<GroundTruth> ground_truth = std::nullopt);

  std::size_t num_batches() const noexcept { return batches_.size(); }
  std::size_t domain_size() const noexcept { return n_; }
  int k() const noexcept { return k_; }
  const std::vector<FrequencyVector>& batches() const noexcept { return batches_; }
  const FrequencyVector& batch(std::size_t i) const { return batches_.at(i); }
  const std::optional<GroundTruth>& ground_truth() const noexcept { return ground_truth_; }

  // N x n matrix whose i-th row is X_i.
  const Matrix& rows() const noexcept { return rows_; }

  bool is_corrupted(std::size_t i) const;

 private:
  std::vector<FrequencyVector> batches_;
  int k_ = 0;
  std::size_t n_ = 0;
  std::optional<GroundTruth> ground_truth_;
  Matrix rows_;
};

/// Per-batch weights with 0 <= w_i <= 1/N.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(Vector weights);

  // w_i = 1/N for every batch.
  static WeightVector uniform(std::size_t num_batches);

  const Vector& values() const noexcept { return w_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(w_.size()); }
  double operator[](std::size_t i) const { return w_(static_cast<Eigen::Index>(i)); }
  double total() const { return w_.sum(); }
  std::size_t support_size() const;

 private:
  Vector w_;
};

/// Shape class of the target: s pieces of degree d. ell = 2 s (d + 1) is the
/// sign-change budget and s (d + 1) the number of intervals used when rounding.
struct ShapeParams {
  int pieces = 5;
  int degree = 0;

  ShapeParams() = default;
  ShapeParams(int s, int d);

  int ell() const noexcept { return 2 * pieces * (degree + 1); }
  int intervals() const noexcept { return pieces * (degree + 1); }
};

/// sum_i (w_i / |w|_1) X_i. Weights may be any nonnegative vector with positive mass.
Histogram weighted_mean(const Vector& w, const BatchDataset& data);
Histogram weighted_mean(const WeightVector& w, const BatchDataset& data);

// Smallest power of two >= n (n >= 1).
std::size_t next_power_of_two(std::size_t n);

// Appends zero-probability symbols so the domain becomes a power of two.
BatchDataset pad_to_power_of_two(const BatchDataset& data);

double tv_distance(const Vector& p, const Vector& q);

}  // namespace ubatch
