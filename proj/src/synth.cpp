#include "ubatch/synth.hpp"

#include "ubatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ubatch::synth {

void AdversaryParams::validate() const {
  if (!(eps >= 0.0 && eps < 0.5)) throw InvalidInput("AdversaryParams: eps must lie in [0, 1/2)");
  if (!(delta_adv >= 0.0 && delta_adv <= 1.0)) {
    throw InvalidInput("AdversaryParams: delta_adv must lie in [0, 1]");
  }
}

Histogram random_arbitrary_mu(std::size_t n, Rng& rng) {
  if (n < 2) throw InvalidInput("random_arbitrary_mu: n must be at least 2");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index a = 0; a < v.size(); ++a) v(a) = unif(rng);
  return Histogram(v / v.sum());
}

Histogram random_piecewise_mu(std::size_t n, std::size_t pieces, Rng& rng) {
  if (pieces < 1 || pieces > n) throw InvalidInput("random_piecewise_mu: need 1 <= pieces <= n");
  // Gap g sits between symbols g and g + 1.
  std::vector<std::size_t> gaps(n - 1);
  std::iota(gaps.begin(), gaps.end(), std::size_t{0});
  for (std::size_t c = 0; c + 1 < pieces; ++c) {
    std::uniform_int_distribution<std::size_t> pick(c, n - 2);
    std::swap(gaps[c], gaps[pick(rng)]);
  }
  std::vector<std::size_t> cuts(gaps.begin(), gaps.begin() + static_cast<long>(pieces - 1));
  std::sort(cuts.begin(), cuts.end());

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  std::size_t begin = 0;
  for (std::size_t p = 0; p < pieces; ++p) {
    const std::size_t end = p + 1 < pieces ? cuts[p] + 1 : n;
    const double level = unif(rng);
    for (std::size_t a = begin; a < end; ++a) v(static_cast<Eigen::Index>(a)) = level;
    begin = end;
  }
  return Histogram(v / v.sum());
}

std::optional<Histogram> adversarial_target(const Histogram& mu, double delta_adv) {
  const std::size_t n = mu.size();
  if (n % 2 != 0) throw InvalidInput("adversarial_target: n must be even");
  if (!(delta_adv >= 0.0 && delta_adv <= 1.0)) {
    throw InvalidInput("adversarial_target: delta_adv must lie in [0, 1]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mu[a] < mu[b]; });
  const double shift = 2.0 * delta_adv / static_cast<double>(n);
  Vector nu = mu.probs();
  for (std::size_t r = 0; r < n; ++r) {
    const auto a = static_cast<Eigen::Index>(order[r]);
    nu(a) += r < n / 2 ? shift : -shift;
    if (nu(a) < 0.0) return std::nullopt;
  }
  return Histogram(std::move(nu));
}

FrequencyVector sample_multinomial(const Histogram& mu, int k, Rng& rng) {
  if (k <= 0) throw InvalidInput("sample_multinomial: k must be positive");
  const Vector& p = mu.probs();
  std::discrete_distribution<std::size_t> draw(p.data(), p.data() + p.size());
  std::vector<long> counts(mu.size(), 0);
  for (int j = 0; j < k; ++j) ++counts[draw(rng)];
  return frequency_from_counts(counts, k);
}

std::size_t clean_count(std::size_t num_batches, double eps) {
  return static_cast<std::size_t>(
      std::floor((1.0 - eps) * static_cast<double>(num_batches) + 1e-9));
}

BatchDataset assemble_dataset(const Histogram& mu, const Histogram& nu,
                              std::vector<FrequencyVector> clean,
                              std::vector<FrequencyVector> corrupted, int k, Rng& rng) {
  const std::size_t total = clean.size() + corrupted.size();
  std::vector<std::size_t> perm(total);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  // Batch drawn as number j lands at position perm[j].
  std::vector<FrequencyVector> batches(total);
  std::vector<std::size_t> corrupted_at;
  for (std::size_t j = 0; j < total; ++j) {
    if (j < clean.size()) {
      batches[perm[j]] = std::move(clean[j]);
    } else {
      batches[perm[j]] = std::move(corrupted[j - clean.size()]);
      corrupted_at.push_back(perm[j]);
    }
  }
  return BatchDataset(std::move(batches), k, GroundTruth{mu, nu, std::move(corrupted_at)});
}

BatchDataset generate_corrupted_dataset(const Histogram& mu, const Histogram& nu,
                                        std::size_t num_batches, double eps, int k, Rng& rng,
                                        const CleanDrift& drift) {
  if (mu.size() != nu.size()) throw InvalidInput("generate_corrupted_dataset: domain mismatch");
  if (num_batches == 0) throw InvalidInput("generate_corrupted_dataset: no batches requested");
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidInput("generate_corrupted_dataset: eps out of range");
  const std::size_t n_clean = clean_count(num_batches, eps);
  std::vector<FrequencyVector> clean;
  std::vector<FrequencyVector> corrupted;
  clean.reserve(n_clean);
  for (std::size_t i = 0; i < n_clean; ++i) {
    clean.push_back(drift ? sample_multinomial(drift(mu, rng), k, rng)
                          : sample_multinomial(mu, k, rng));
  }
  for (std::size_t i = n_clean; i < num_batches; ++i) {
    corrupted.push_back(sample_multinomial(nu, k, rng));
  }
  return assemble_dataset(mu, nu, std::move(clean), std::move(corrupted), k, rng);
}

TargetPair sample_target_pair(std::size_t n, bool structured, std::size_t pieces,
                              double delta_adv, Rng& rng, int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Histogram mu = structured ? random_piecewise_mu(n, std::min(pieces, n), rng)
                              : random_arbitrary_mu(n, rng);
    if (auto nu = adversarial_target(mu, delta_adv)) {
      return {std::move(mu), std::move(*nu), attempt};
    }
  }
  throw Error("sample_target_pair: no valid (mu, nu) after " + std::to_string(max_attempts) +
              " attempts; delta_adv too large for n = " + std::to_string(n));
}

}  // namespace ubatch::synth
