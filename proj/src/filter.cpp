#include "ubatch/filter.hpp"

#include "ubatch/errors.hpp"
#include "ubatch/haar.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace ubatch::filter {

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::threshold: return "threshold";
    case StopReason::plateau: return "plateau";
    case StopReason::negative_scores: return "negative_scores";
    case StopReason::support_exhausted: return "support_exhausted";
    case StopReason::max_rounds: return "max_rounds";
  }
  return "unknown";
}

void FilterConfig::validate() const {
  solver.validate();
  if (!(threshold_c >= 0.0)) throw InvalidInput("FilterConfig: threshold_c must be nonnegative");
  if (plateau_window < 1) throw InvalidInput("FilterConfig: plateau_window must be positive");
  if (max_rounds < 0) throw InvalidInput("FilterConfig: max_rounds must be nonnegative");
  if (!(neg_tol >= 0.0)) throw InvalidInput("FilterConfig: neg_tol must be nonnegative");
  if (ell < 0) throw InvalidInput("FilterConfig: ell must be nonnegative");
}

Matrix compute_B(const Histogram& nu, int k) {
  if (k <= 0) throw InvalidInput("compute_B: k must be positive");
  const Vector& p = nu.probs();
  Matrix b = -p * p.transpose();
  b.diagonal() += p;
  return b / static_cast<double>(k);
}

namespace {

Matrix centered_rows(const BatchDataset& data, const Histogram& center) {
  return data.rows().rowwise() - center.probs().transpose();
}

}  // namespace

MomentMatrices compute_M(const WeightVector& w, const BatchDataset& data,
                         WeightNormalization normalization) {
  if (w.size() != data.num_batches()) {
    throw InvalidInput("compute_M: weight count does not match batch count");
  }
  Histogram center = weighted_mean(w, data);
  const Matrix xc = centered_rows(data, center);
  Vector coef = w.values();
  if (normalization == WeightNormalization::normalized) coef /= w.total();
  MomentMatrices out{xc.transpose() * coef.asDiagonal() * xc, compute_B(center, data.k()), {},
                     std::move(center)};
  out.a = 0.5 * (out.a + out.a.transpose());
  out.m = out.a - out.b;
  return out;
}

Scores compute_scores(const WeightVector& w, const BatchDataset& data, const Matrix& sigma,
                      double neg_tol) {
  const auto n = static_cast<Eigen::Index>(data.domain_size());
  if (sigma.rows() != n || sigma.cols() != n) throw InvalidInput("compute_scores: size mismatch");
  const Histogram center = weighted_mean(w, data);
  const Matrix xc = centered_rows(data, center);
  Scores out;
  out.tau = (xc * sigma).cwiseProduct(xc).rowwise().sum();
  for (Eigen::Index i = 0; i < out.tau.size(); ++i) {
    if (w[static_cast<std::size_t>(i)] > 0.0 && out.tau(i) < -neg_tol) out.has_negative = true;
  }
  return out;
}

WeightVector one_d_filter(const Vector& tau, const WeightVector& w) {
  if (static_cast<std::size_t>(tau.size()) != w.size()) {
    throw InvalidInput("one_d_filter: score count does not match weight count");
  }
  double tau_max = 0.0;
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    if (w[static_cast<std::size_t>(i)] <= 0.0) continue;
    if (!(tau(i) >= 0.0)) {
      throw InvalidInput("one_d_filter: negative score on supported batch " + std::to_string(i));
    }
    tau_max = std::max(tau_max, tau(i));
  }
  if (!(tau_max > 0.0)) throw NoProgress("one_d_filter: every supported score is zero");
  Vector next = w.values();
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    if (next(i) <= 0.0) continue;
    next(i) = std::max(0.0, (1.0 - tau(i) / tau_max) * next(i));
  }
  return WeightVector(std::move(next));
}

double decomposition_gap(const Vector& w, const BatchDataset& data, const Vector& nu,
                         const Matrix& sigma) {
  const Histogram center = weighted_mean(w, data);
  const Matrix about_nu = data.rows().rowwise() - nu.transpose();
  const Matrix about_center = centered_rows(data, center);
  const Vector lhs_terms = (about_nu * sigma).cwiseProduct(about_nu).rowwise().sum();
  const Vector rhs_terms = (about_center * sigma).cwiseProduct(about_center).rowwise().sum();
  const Vector shift = center.probs() - nu;
  return w.dot(lhs_terms) - w.dot(rhs_terms) - w.sum() * shift.dot(sigma * shift);
}

double stopping_threshold(double eps, double omega, int k, double c) {
  if (k <= 0) throw InvalidInput("stopping_threshold: k must be positive");
  const double eps_term = eps > 0.0 ? (eps / k) * std::log(1.0 / eps) : 0.0;
  return c * (omega + eps_term);
}

FilterResult learn_with_filter(const BatchDataset& data, const ShapeParams& shape, double eps,
                               double omega, const FilterConfig& config) {
  config.validate();
  if (!(eps >= 0.0 && eps < 0.5)) throw InvalidInput("learn_with_filter: eps must lie in [0, 1/2)");
  if (!(omega >= 0.0)) throw InvalidInput("learn_with_filter: omega must be nonnegative");

  const std::size_t n = data.domain_size();
  const BatchDataset padded = pad_to_power_of_two(data);
  const haar::Basis basis = haar::basis_for_size(padded.domain_size());
  knorm::SolverConfig solver_config = config.solver;
  solver_config.ell = config.ell > 0 ? config.ell : shape.ell();
  knorm::KNormSolver solver(basis, solver_config);

  const double threshold = stopping_threshold(eps, omega, data.k(), config.threshold_c);
  const int max_rounds =
      config.max_rounds > 0 ? config.max_rounds : static_cast<int>(data.num_batches());

  FilterState state;
  state.weights = WeightVector::uniform(data.num_batches());
  double best = std::numeric_limits<double>::infinity();
  int rounds_without_new_min = 0;

  while (true) {
    const MomentMatrices moments = compute_M(state.weights, padded);
    const knorm::KNormResult kn = solver.solve(moments.m);
    state.knorm_trace.push_back(kn.value);

#ifndef NDEBUG
    {
      const Vector nu = Vector::Constant(moments.m.rows(), 1.0 / static_cast<double>(moments.m.rows()));
      const double gap = decomposition_gap(state.weights.values(), padded, nu, kn.test.sigma);
      assert(std::abs(gap) <= 1e-9 * std::max(1.0, kn.test.sigma.cwiseAbs().sum()));
    }
#endif

    // Above the threshold the maximizer has <M, S> > 0, so only the excess
    // direction is tested and scored; a variance deficit is not filtered.
    if (config.use_threshold && kn.excess_value < threshold) {
      state.stop_reason = StopReason::threshold;
      break;
    }
    if (kn.value < best) {
      best = kn.value;
      rounds_without_new_min = 0;
    } else if (config.use_plateau && ++rounds_without_new_min >= config.plateau_window) {
      state.stop_reason = StopReason::plateau;
      break;
    }
    if (state.round >= max_rounds) {
      state.stop_reason = StopReason::max_rounds;
      break;
    }

    Scores scores = compute_scores(state.weights, padded, kn.excess_sigma, config.neg_tol);
    if (scores.has_negative) {
      ++state.negative_score_events;
      state.stop_reason = StopReason::negative_scores;
      break;
    }
    // Scores within neg_tol of zero are round-off of a PSD quadratic form.
    scores.tau = scores.tau.cwiseMax(0.0);

    WeightVector next;
    try {
      next = one_d_filter(scores.tau, state.weights);
    } catch (const NoProgress&) {
      // Nothing left to separate: every supported batch sits on the mean.
      state.stop_reason = StopReason::plateau;
      break;
    }
    if (next.support_size() == 0) {
      state.stop_reason = StopReason::support_exhausted;
      break;
    }
    state.weights = std::move(next);
    state.support_trace.push_back(state.weights.support_size());
    ++state.round;
  }

  const Histogram mean = weighted_mean(state.weights, padded);
  Vector raw = mean.probs().head(static_cast<Eigen::Index>(n));
  raw /= raw.sum();
  return {Histogram(std::move(raw)), std::move(state)};
}

}  // namespace ubatch::filter
