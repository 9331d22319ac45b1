#include "ubatch/dataset_io.hpp"
#include "ubatch/errors.hpp"
#include "ubatch/filter.hpp"
#include "ubatch/shape.hpp"
#include "ubatch/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace ubatch;
using namespace ubatch::synth;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("random_arbitrary_mu") {
  Rng a(5), b(5);
  const auto mu = random_arbitrary_mu(16, a);
  CHECK(std::abs(mu.probs().sum() - 1.0) < 1e-12);
  CHECK(mu.probs() == random_arbitrary_mu(16, b).probs());
  // Each entry has mean 1/n; average many draws of the first entry.
  Rng rng(6);
  const int draws = 20000;
  double sum = 0, sum_sq = 0;
  for (int t = 0; t < draws; ++t) {
    const double x = random_arbitrary_mu(8, rng)[0];
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  CHECK(std::abs(mean - 1.0 / 8) <= 3 * se);
}

TEST_CASE("random_piecewise_mu") {
  Rng rng(8);
  CHECK((random_piecewise_mu(10, 1, rng).probs().array() - 0.1).abs().maxCoeff() < 1e-15);
  for (int t = 0; t < 20; ++t) {
    const auto mu = random_piecewise_mu(32, 5, rng);
    int changes = 0;
    for (Eigen::Index i = 1; i < 32; ++i) changes += mu.probs()(i) != mu.probs()(i - 1);
    CHECK(changes <= 4);
    CHECK(shape::fit_piecewise_constant(mu.probs(), 5).cost < 1e-25);
  }
  CHECK_THROWS_AS(random_piecewise_mu(4, 5, rng), InvalidInput);
}

TEST_CASE("adversarial_target") {
  const Histogram mu(vec({0.1, 0.2, 0.3, 0.4}));
  const auto nu = adversarial_target(mu, 0.2);
  REQUIRE(nu.has_value());
  CHECK((nu->probs() - vec({0.2, 0.3, 0.2, 0.3})).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(tv_distance(mu.probs(), nu->probs()) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(adversarial_target(mu, 0.0)->probs() == mu.probs());
  // 2 * 0.5 / 4 = 0.25 > 0.3 - ... makes the third entry negative
  CHECK_FALSE(adversarial_target(Histogram(vec({0.1, 0.1, 0.2, 0.6})), 0.5).has_value());
  CHECK_THROWS_AS(adversarial_target(Histogram::uniform(3), 0.1), InvalidInput);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto pair = sample_target_pair(16, t % 2 == 0, 5, 0.5, rng);
    CHECK(std::abs(tv_distance(pair.mu.probs(), pair.nu.probs()) - 0.5) < 1e-12);
  }
}

TEST_CASE("clean counts and dataset generation") {
  CHECK(clean_count(10, 0.25) == 7);
  CHECK(clean_count(20, 0.2) == 16);
  CHECK(clean_count(5, 0.0) == 5);
  Rng rng(1);
  const auto pair = sample_target_pair(8, false, 1, 0.5, rng);
  const auto data = generate_corrupted_dataset(pair.mu, pair.nu, 10, 0.25, 30, rng);
  CHECK(data.num_batches() == 10);
  CHECK(data.ground_truth()->corrupted_indices.size() == 3);
  const auto clean = generate_corrupted_dataset(pair.mu, pair.nu, 10, 0.0, 30, rng);
  CHECK(clean.ground_truth()->corrupted_indices.empty());
  const auto point = generate_corrupted_dataset(Histogram::point_mass(4, 2), Histogram::uniform(4),
                                                6, 0.5, 9, rng);
  for (std::size_t i = 0; i < 6; ++i) {
    if (!point.is_corrupted(i)) CHECK(point.batch(i).freqs() == Histogram::point_mass(4, 2).probs());
  }
}

TEST_CASE("generation is reproducible") {
  auto make = [] {
    Rng rng(42);
    const auto pair = sample_target_pair(16, true, 5, 0.3, rng);
    return dataset_to_json(generate_corrupted_dataset(pair.mu, pair.nu, 25, 0.4, 100, rng)).dump();
  };
  CHECK(make() == make());
}

TEST_CASE("multinomial draws") {
  Rng rng(9);
  CHECK(sample_multinomial(Histogram::point_mass(5, 1), 7, rng).freqs() ==
        Histogram::point_mass(5, 1).probs());
  const auto f = sample_multinomial(Histogram::uniform(6), 13, rng);
  CHECK(f.k() == 13);
  long total = 0;
  for (long c : f.counts()) total += c;
  CHECK(total == 13);
}

TEST_CASE("multinomial moments match mu and B") {
  Rng rng(10);
  const Histogram mu(vec({0.05, 0.1, 0.15, 0.2, 0.2, 0.15, 0.1, 0.05}));
  const int k = 50, draws = 200000;
  Vector mean = Vector::Zero(8);
  Matrix second = Matrix::Zero(8, 8);
  for (int t = 0; t < draws; ++t) {
    const Vector x = sample_multinomial(mu, k, rng).freqs() - mu.probs();
    mean += x;
    second.noalias() += x * x.transpose();
  }
  mean /= draws;
  second /= draws;
  CHECK(mean.cwiseAbs().maxCoeff() <= 5e-4);
  CHECK((second - filter::compute_B(mu, k)).cwiseAbs().maxCoeff() <= 5e-4);
}

TEST_CASE("clean drift hook") {
  Rng rng(11);
  const auto pair = sample_target_pair(8, false, 1, 0.2, rng);
  int calls = 0;
  const CleanDrift drift = [&](const Histogram& mu, Rng&) {
    ++calls;
    return mu;
  };
  generate_corrupted_dataset(pair.mu, pair.nu, 10, 0.3, 20, rng, drift);
  CHECK(calls == 7);
  AdversaryParams bad;
  bad.eps = 0.7;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}
