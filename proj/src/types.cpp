#include "ubatch/types.hpp"

#include "ubatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ubatch {

namespace {

void check_simplex(const Vector& v, const char* what) {
  if (v.size() == 0) throw InvalidInput(std::string(what) + ": empty vector");
  for (Eigen::Index a = 0; a < v.size(); ++a) {
    if (!std::isfinite(v(a)) || v(a) < 0.0) {
      throw InvalidInput(std::string(what) + ": entry " + std::to_string(a) +
                         " is negative or not finite");
    }
  }
  if (std::abs(v.sum() - 1.0) > kSimplexTol) {
    throw InvalidInput(std::string(what) + ": entries sum to " + std::to_string(v.sum()));
  }
}

}  // namespace

Histogram::Histogram(Vector probs) : probs_(std::move(probs)) {
  check_simplex(probs_, "Histogram");
}

Histogram Histogram::uniform(std::size_t n) {
  if (n == 0) throw InvalidInput("Histogram::uniform: n must be positive");
  return Histogram(Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
}

Histogram Histogram::point_mass(std::size_t n, std::size_t at) {
  if (at >= n) throw InvalidInput("Histogram::point_mass: index out of range");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(n));
  v(static_cast<Eigen::Index>(at)) = 1.0;
  return Histogram(std::move(v));
}

FrequencyVector::FrequencyVector(Vector freqs, int k) : freqs_(std::move(freqs)), k_(k) {
  if (k_ <= 0) throw InvalidInput("FrequencyVector: batch size must be positive");
  check_simplex(freqs_, "FrequencyVector");
  for (Eigen::Index a = 0; a < freqs_.size(); ++a) {
    const double scaled = freqs_(a) * k_;
    if (std::abs(scaled - std::round(scaled)) > kSimplexTol * std::max(1, k_)) {
      throw InvalidInput("FrequencyVector: entry " + std::to_string(a) +
                         " is not a multiple of 1/k");
    }
  }
}

std::vector<long> FrequencyVector::counts() const {
  std::vector<long> out(size());
  for (std::size_t a = 0; a < out.size(); ++a) {
    out[a] = std::lround(freqs_(static_cast<Eigen::Index>(a)) * k_);
  }
  return out;
}

FrequencyVector frequency_from_counts(std::span<const long> counts, int k) {
  if (k <= 0) throw InvalidInput("frequency_from_counts: k must be positive");
  if (counts.empty()) throw InvalidInput("frequency_from_counts: empty counts");
  long total = 0;
  Vector freqs(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t a = 0; a < counts.size(); ++a) {
    if (counts[a] < 0) throw InvalidInput("frequency_from_counts: negative count");
    total += counts[a];
    freqs(static_cast<Eigen::Index>(a)) = static_cast<double>(counts[a]) / k;
  }
  if (total != k) {
    throw InvalidInput("frequency_from_counts: counts sum to " + std::to_string(total) +
                       ", expected " + std::to_string(k));
  }
  return FrequencyVector(std::move(freqs), k);
}

BatchDataset::BatchDataset(std::vector<FrequencyVector> batches, int k,
                           std::optional<GroundTruth> ground_truth)
    : batches_(std::move(batches)), k_(k), ground_truth_(std::move(ground_truth)) {
  if (batches_.empty()) throw InvalidInput("BatchDataset: no batches");
  n_ = batches_.front().size();
  rows_.resize(static_cast<Eigen::Index>(batches_.size()), static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < batches_.size(); ++i) {
    if (batches_[i].size() != n_) throw InvalidInput("BatchDataset: batches differ in domain size");
    if (batches_[i].k() != k_) throw InvalidInput("BatchDataset: batches differ in batch size");
    rows_.row(static_cast<Eigen::Index>(i)) = batches_[i].freqs().transpose();
  }
  if (ground_truth_) {
    auto& idx = ground_truth_->corrupted_indices;
    std::sort(idx.begin(), idx.end());
    if (std::adjacent_find(idx.begin(), idx.end()) != idx.end()) {
      throw InvalidInput("BatchDataset: duplicate corrupted index");
    }
    if (!idx.empty() && idx.back() >= batches_.size()) {
      throw InvalidInput("BatchDataset: corrupted index out of range");
    }
    if (ground_truth_->mu.size() != n_ || ground_truth_->nu.size() != n_) {
      throw InvalidInput("BatchDataset: ground truth has wrong domain size");
    }
  }
}

bool BatchDataset::is_corrupted(std::size_t i) const {
  if (!ground_truth_) return false;
  const auto& idx = ground_truth_->corrupted_indices;
  return std::binary_search(idx.begin(), idx.end(), i);
}

WeightVector::WeightVector(Vector weights) : w_(std::move(weights)) {
  const double cap = 1.0 / static_cast<double>(std::max<Eigen::Index>(1, w_.size()));
  for (Eigen::Index i = 0; i < w_.size(); ++i) {
    if (!(w_(i) >= 0.0) || w_(i) > cap) {
      throw InvalidInput("WeightVector: weight " + std::to_string(i) + " outside [0, 1/N]");
    }
  }
}

WeightVector WeightVector::uniform(std::size_t num_batches) {
  if (num_batches == 0) throw InvalidInput("WeightVector::uniform: no batches");
  return WeightVector(Vector::Constant(static_cast<Eigen::Index>(num_batches),
                                       1.0 / static_cast<double>(num_batches)));
}

std::size_t WeightVector::support_size() const {
  return static_cast<std::size_t>((w_.array() > 0.0).count());
}

ShapeParams::ShapeParams(int s, int d) : pieces(s), degree(d) {
  if (s < 1) throw InvalidInput("ShapeParams: pieces must be positive");
  if (d < 0) throw InvalidInput("ShapeParams: degree must be nonnegative");
}

Histogram weighted_mean(const Vector& w, const BatchDataset& data) {
  if (static_cast<std::size_t>(w.size()) != data.num_batches()) {
    throw InvalidInput("weighted_mean: weight count does not match batch count");
  }
  if ((w.array() < 0.0).any()) throw InvalidInput("weighted_mean: negative weight");
  const double total = w.sum();
  if (!(total > 0.0)) throw DegenerateWeights("weighted_mean: weights have zero mass");
  Vector mean = data.rows().transpose() * (w / total);
  return Histogram(std::move(mean));
}

Histogram weighted_mean(const WeightVector& w, const BatchDataset& data) {
  return weighted_mean(w.values(), data);
}

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

BatchDataset pad_to_power_of_two(const BatchDataset& data) {
  const std::size_t n = data.domain_size();
  const std::size_t padded = next_power_of_two(n);
  if (padded == n) return data;
  auto pad = [&](const Vector& v) {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(padded));
    out.head(static_cast<Eigen::Index>(n)) = v;
    return out;
  };
  std::vector<FrequencyVector> batches;
  batches.reserve(data.num_batches());
  for (const auto& b : data.batches()) batches.emplace_back(pad(b.freqs()), b.k());
  std::optional<GroundTruth> gt;
  if (data.ground_truth()) {
    const auto& g = *data.ground_truth();
    gt = GroundTruth{Histogram(pad(g.mu.probs())), Histogram(pad(g.nu.probs())),
                     g.corrupted_indices};
  }
  return BatchDataset(std::move(batches), data.k(), std::move(gt));
}

double tv_distance(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw InvalidInput("tv_distance: length mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

}  // namespace ubatch
