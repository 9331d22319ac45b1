#pragma once

#include "ubatch/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>

namespace ubatch::synth {

using Rng = std::mt19937_64;

struct AdversaryParams {
  double delta_adv = 0.5;  // target TV distance between mu and nu
  double eps = 0.4;        // corruption fraction

  void validate() const;
};

// iid uniform(0, 1) entries, normalized.
Histogram random_arbitrary_mu(std::size_t n, Rng& rng);

// `pieces` constant runs: breakpoints are a uniform subset of the n - 1 gaps,
// levels iid uniform(0, 1), then normalized.
Histogram random_piecewise_mu(std::size_t n, std::size_t pieces, Rng& rng);

/// Adds 2 delta / n to the n/2 smallest entries of mu and removes it from the
/// n/2 largest (value order, index tie-break). Returns nullopt when that would
/// make an entry negative, in which case the caller should resample mu.
std::optional<Histogram> adversarial_target(const Histogram& mu, double delta_adv);

FrequencyVector sample_multinomial(const Histogram& mu, int k, Rng& rng);

// floor((1 - eps) N), robust to the representation error of eps.
std::size_t clean_count(std::size_t num_batches, double eps);

/// Optional per-batch drift for omega-diverse clean batches: returns mu_i.
using CleanDrift = std::function<Histogram(const Histogram& mu, Rng& rng)>;

/// floor((1 - eps) N) batches from Mul_k(mu), the rest from Mul_k(nu), in a
/// random order; the corrupted positions are recorded as ground truth.
BatchDataset generate_corrupted_dataset(const Histogram& mu, const Histogram& nu,
                                        std::size_t num_batches, double eps, int k, Rng& rng,
                                        const CleanDrift& drift = {});

/// Clean batches plus `num_corrupted` batches from nu, shuffled together.
BatchDataset assemble_dataset(const Histogram& mu, const Histogram& nu,
                              std::vector<FrequencyVector> clean,
                              std::vector<FrequencyVector> corrupted, int k, Rng& rng);

/// Draws (mu, nu) for an experiment, resampling mu until the adversary's
/// perturbation is a valid distribution.
struct TargetPair {
  Histogram mu;
  Histogram nu;
  int resamples = 0;
};
TargetPair sample_target_pair(std::size_t n, bool structured, std::size_t pieces,
                              double delta_adv, Rng& rng, int max_attempts = 10000);

}  // namespace ubatch::synth
