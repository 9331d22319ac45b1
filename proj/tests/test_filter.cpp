#include "ubatch/errors.hpp"
#include "ubatch/filter.hpp"
#include "ubatch/shape.hpp"
#include "ubatch/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ubatch;
using namespace ubatch::filter;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

BatchDataset singletons() {
  const std::vector<long> a{1, 0}, b{0, 1};
  return BatchDataset({frequency_from_counts(a, 1), frequency_from_counts(b, 1)}, 1);
}

}  // namespace

TEST_CASE("compute_B examples") {
  CHECK(compute_B(Histogram::point_mass(3, 0), 7).cwiseAbs().maxCoeff() == 0.0);
  Matrix half(2, 2);
  half << 0.25, -0.25, -0.25, 0.25;
  CHECK((compute_B(Histogram(vec({0.5, 0.5})), 1) - half).cwiseAbs().maxCoeff() < 1e-15);
  Matrix b37(2, 2);
  b37 << 0.021, -0.021, -0.021, 0.021;
  CHECK((compute_B(Histogram(vec({0.3, 0.7})), 10) - b37).cwiseAbs().maxCoeff() < 1e-15);
  const Matrix b = compute_B(Histogram(vec({0.1, 0.2, 0.3, 0.4})), 3);
  CHECK(b.rowwise().sum().cwiseAbs().maxCoeff() < 1e-15);
  CHECK((b - b.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("compute_M examples") {
  const auto two = compute_M(WeightVector::uniform(2), singletons());
  Matrix a(2, 2);
  a << 0.25, -0.25, -0.25, 0.25;
  CHECK((two.a - a).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((two.b - a).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(two.m.cwiseAbs().maxCoeff() < 1e-15);

  const std::vector<long> c{3, 1, 0, 4};
  const BatchDataset same({frequency_from_counts(c, 8), frequency_from_counts(c, 8),
                           frequency_from_counts(c, 8)},
                          8);
  const auto m = compute_M(WeightVector::uniform(3), same);
  CHECK(m.a.cwiseAbs().maxCoeff() < 1e-15);
  CHECK((m.m + compute_B(Histogram(same.batch(0).freqs()), 8)).cwiseAbs().maxCoeff() < 1e-15);

  // Raw weights scale A by |w|_1; normalized weights do not.
  const WeightVector half(vec({0.25, 0.25}));
  const auto norm = compute_M(half, singletons(), WeightNormalization::normalized);
  const auto raw = compute_M(half, singletons(), WeightNormalization::raw);
  CHECK((raw.a - 0.5 * norm.a).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(compute_M(WeightVector(vec({0, 0})), singletons()), DegenerateWeights);
}

TEST_CASE("decomposition identity") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const auto pair = synth::sample_target_pair(8, false, 1, 0.2, rng);
    const auto data = synth::generate_corrupted_dataset(pair.mu, pair.nu, 15, 0.2, 30, rng);
    Vector w(15);
    for (auto& x : w) x = u(rng) / 15.0;
    Vector nu(8);
    for (auto& x : nu) x = u(rng);
    Matrix s(8, 8);
    for (Eigen::Index i = 0; i < 8; ++i)
      for (Eigen::Index j = 0; j < 8; ++j) s(i, j) = g(rng);
    s = 0.5 * (s + s.transpose()).eval();
    CHECK(std::abs(decomposition_gap(w, data, nu, s)) < 1e-10);
  }
}

TEST_CASE("compute_scores") {
  const auto data = singletons();
  const auto s = compute_scores(WeightVector::uniform(2), data, Matrix::Identity(2, 2));
  CHECK(s.tau(0) == doctest::Approx(0.5));
  CHECK(s.tau(1) == doctest::Approx(0.5));
  CHECK_FALSE(s.has_negative);
  const std::vector<long> c{1, 1};
  const BatchDataset centered({frequency_from_counts(c, 2)}, 2);
  CHECK(compute_scores(WeightVector::uniform(1), centered, Matrix::Identity(2, 2)).tau(0) == 0.0);
  Matrix neg = -Matrix::Identity(2, 2);
  CHECK(compute_scores(WeightVector::uniform(2), data, neg).has_negative);
}

TEST_CASE("one_d_filter examples") {
  const double third = 1.0 / 3.0;
  const auto w1 = one_d_filter(vec({1, 2, 4}), WeightVector(vec({third, third, third})));
  CHECK(w1[0] == doctest::Approx(0.25));
  CHECK(w1[1] == doctest::Approx(1.0 / 6.0));
  CHECK(w1[2] == 0.0);
  const auto w2 = one_d_filter(vec({0, 5}), WeightVector(vec({0.5, 0.5})));
  CHECK(w2[0] == 0.5);
  CHECK(w2[1] == 0.0);
  const auto w3 = one_d_filter(vec({3, 3}), WeightVector(vec({0.5, 0.5})));
  CHECK(w3.support_size() == 0);
  CHECK_THROWS_AS(one_d_filter(vec({0, 0}), WeightVector(vec({0.5, 0.5}))), NoProgress);
  CHECK_THROWS_AS(one_d_filter(vec({-1, 2}), WeightVector(vec({0.5, 0.5}))), InvalidInput);
  // Unsupported entries do not enter tau_max.
  const auto w4 = one_d_filter(vec({100, 1, 2}), WeightVector(vec({0, third, third})));
  CHECK(w4[1] == doctest::Approx(third / 2));
}

TEST_CASE("one_d_filter removes more bad than good mass") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  while (checked < 300) {
    const int n = 2 + static_cast<int>(rng() % 20);
    Vector tau(n), w(n);
    std::vector<bool> bad(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      tau(i) = u(rng) < 0.2 ? 0.0 : u(rng);
      w(i) = u(rng) < 0.15 ? 0.0 : u(rng) / n;
      bad[static_cast<std::size_t>(i)] = u(rng) < 0.4;
    }
    double good_mass = 0, bad_mass = 0;
    for (int i = 0; i < n; ++i) (bad[static_cast<std::size_t>(i)] ? bad_mass : good_mass) += w(i) * tau(i);
    if (!(good_mass < bad_mass)) continue;
    const WeightVector before(w);
    const auto after = one_d_filter(tau, before);
    double good_drop = 0, bad_drop = 0;
    for (int i = 0; i < n; ++i) {
      CHECK(after[static_cast<std::size_t>(i)] <= before[static_cast<std::size_t>(i)]);
      (bad[static_cast<std::size_t>(i)] ? bad_drop : good_drop) +=
          before[static_cast<std::size_t>(i)] - after[static_cast<std::size_t>(i)];
    }
    CHECK(after.support_size() < before.support_size());
    CHECK(good_drop < bad_drop);
    ++checked;
  }
}

TEST_CASE("stopping threshold") {
  CHECK(stopping_threshold(0.4, 0.0, 1000, 2.0) ==
        doctest::Approx(2.0 * 0.4 / 1000 * std::log(2.5)));
  CHECK(stopping_threshold(0.0, 0.01, 10, 2.0) == doctest::Approx(0.02));
  CHECK_THROWS_AS(stopping_threshold(0.1, 0.0, 0, 2.0), InvalidInput);
}

TEST_CASE("filter on clean data stays near the empirical mean") {
  synth::Rng rng(2024);
  const Histogram mu = synth::random_arbitrary_mu(16, rng);
  const auto data = synth::generate_corrupted_dataset(mu, mu, 50, 0.0, 1000, rng);
  const auto result = learn_with_filter(data, ShapeParams(5, 0), 0.0, 0.0);
  const Vector empirical = weighted_mean(WeightVector::uniform(50), data).probs();
  CHECK((result.raw_estimate.probs() - empirical).lpNorm<1>() <= 0.05);
  CHECK(std::abs(result.raw_estimate.probs().sum() - 1.0) < 1e-12);
}

TEST_CASE("threshold stop keeps most of the mass on clean data") {
  // At N = 60 sampling noise alone exceeds the threshold; N = 200 is enough at n = 16.
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    synth::Rng rng(seed);
    const Histogram mu = synth::random_arbitrary_mu(16, rng);
    const auto data = synth::generate_corrupted_dataset(mu, mu, 200, 0.0, 1000, rng);
    FilterConfig config;
    config.use_plateau = false;
    const double eps = 0.1;
    const auto result = learn_with_filter(data, ShapeParams(5, 0), eps, 0.0, config);
    CHECK(result.state.weights.total() >= 1.0 - 2.0 * eps);
  }
}

TEST_CASE("identical batches stop immediately") {
  const std::vector<long> c{10, 30, 0, 60};
  std::vector<FrequencyVector> batches(20, frequency_from_counts(c, 100));
  const BatchDataset data(std::move(batches), 100);
  const auto result = learn_with_filter(data, ShapeParams(2, 0), 0.1, 0.0);
  CHECK(result.state.round == 0);
  CHECK((result.raw_estimate.probs() - data.batch(0).freqs()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("planted corruption loses more bad than good weight") {
  synth::Rng rng(314);
  const auto pair = synth::sample_target_pair(32, false, 1, 0.5, rng);
  const auto data = synth::generate_corrupted_dataset(pair.mu, pair.nu, 104, 0.4, 1000, rng);
  const auto result = learn_with_filter(data, ShapeParams(5, 0), 0.4, 0.0);
  const double inv = 1.0 / 104.0;
  double good_drop = 0, bad_drop = 0;
  for (std::size_t i = 0; i < 104; ++i) {
    (data.is_corrupted(i) ? bad_drop : good_drop) += inv - result.state.weights[i];
  }
  CHECK(bad_drop > good_drop);
  // Loop invariants.
  CHECK(result.state.knorm_trace.size() == static_cast<std::size_t>(result.state.round) + 1);
  for (double v : result.state.knorm_trace) CHECK(std::isfinite(v));
  for (std::size_t r = 1; r < result.state.support_trace.size(); ++r)
    CHECK(result.state.support_trace[r] < result.state.support_trace[r - 1]);
  const double naive = shape::ak_distance(weighted_mean(WeightVector::uniform(104), data).probs(),
                                          pair.mu.probs(), 5);
  CHECK(shape::ak_distance(result.raw_estimate.probs(), pair.mu.probs(), 5) < naive);
}

TEST_CASE("non power-of-two domains are padded and truncated") {
  synth::Rng rng(7);
  const auto pair = synth::sample_target_pair(6, false, 1, 0.3, rng);
  const auto data = synth::generate_corrupted_dataset(pair.mu, pair.nu, 30, 0.2, 200, rng);
  const auto result = learn_with_filter(data, ShapeParams(2, 0), 0.2, 0.0);
  CHECK(result.raw_estimate.size() == 6);
}

TEST_CASE("round cap and validation") {
  synth::Rng rng(70);
  const auto pair = synth::sample_target_pair(8, false, 1, 0.5, rng);
  const auto data = synth::generate_corrupted_dataset(pair.mu, pair.nu, 30, 0.3, 500, rng);
  FilterConfig config;
  config.use_threshold = false;
  config.use_plateau = false;
  config.max_rounds = 2;
  const auto result = learn_with_filter(data, ShapeParams(2, 0), 0.3, 0.0, config);
  CHECK(result.state.round <= 2);
  CHECK((result.state.stop_reason == StopReason::max_rounds ||
         result.state.stop_reason == StopReason::negative_scores ||
         result.state.stop_reason == StopReason::support_exhausted));
  CHECK_THROWS_AS(learn_with_filter(data, ShapeParams(2, 0), 0.6, 0.0), InvalidInput);
  CHECK_THROWS_AS(learn_with_filter(data, ShapeParams(2, 0), 0.2, -1.0), InvalidInput);
  FilterConfig bad;
  bad.plateau_window = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  CHECK(to_string(StopReason::support_exhausted) == "support_exhausted");
}
