#pragma once

#include "ubatch/knorm.hpp"
#include "ubatch/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace ubatch::filter {

/// Second-moment matrices of the weighted batches about their weighted mean.
struct MomentMatrices {
  Matrix a;       // sum_i w_i (X_i - center)(X_i - center)^T
  Matrix b;       // multinomial covariance of Mul_k(center)
  Matrix m;       // a - b
  Histogram center;
};

enum class WeightNormalization { normalized, raw };

enum class StopReason { threshold, plateau, negative_scores, support_exhausted, max_rounds };

std::string_view to_string(StopReason reason);

struct FilterConfig {
  knorm::SolverConfig solver;
  // Stop when the K-norm drops below threshold_c (omega + (eps / k) ln(1 / eps)).
  bool use_threshold = true;
  double threshold_c = 2.0;
  // Stop once the K-norm has failed to reach a new minimum for plateau_window
  // consecutive rounds.
  bool use_plateau = true;
  int plateau_window = 1;
  // 0 means one round per batch.
  int max_rounds = 0;
  // Scores below -neg_tol on supported batches end the run.
  double neg_tol = 1e-8;
  // Sign-change budget; 0 derives ell = 2 s (d + 1) from the shape.
  int ell = 0;

  void validate() const;
};

struct FilterState {
  WeightVector weights;
  int round = 0;
  std::vector<double> knorm_trace;
  StopReason stop_reason = StopReason::max_rounds;
  int negative_score_events = 0;
  // Support size of the weights after each downweighting round.
  std::vector<std::size_t> support_trace;
};

struct FilterResult {
  Histogram raw_estimate;
  FilterState state;
};

struct Scores {
  Vector tau;
  bool has_negative = false;
};

/// (1/k)(diag(nu) - nu nu^T).
Matrix compute_B(const Histogram& nu, int k);

MomentMatrices compute_M(const WeightVector& w, const BatchDataset& data,
                         WeightNormalization normalization = WeightNormalization::normalized);

/// tau_i = (X_i - mu(w))^T Sigma (X_i - mu(w)) for every batch.
Scores compute_scores(const WeightVector& w, const BatchDataset& data, const Matrix& sigma,
                      double neg_tol = 1e-8);

/// w'_i = (1 - tau_i / tau_max) w_i with tau_max over the support of w.
WeightVector one_d_filter(const Vector& tau, const WeightVector& w);

/// LHS minus RHS of the identity
///   sum w_i <(X_i - nu)^2, S> = sum w_i <(X_i - mu(w))^2, S> + |w|_1 <(mu(w) - nu)^2, S>.
double decomposition_gap(const Vector& w, const BatchDataset& data, const Vector& nu,
                         const Matrix& sigma);

double stopping_threshold(double eps, double omega, int k, double c);

/// Iterative soft filtering. The domain is zero-padded to a power of two for
/// the Haar basis and the estimate truncated back.
FilterResult learn_with_filter(const BatchDataset& data, const ShapeParams& shape, double eps,
                               double omega, const FilterConfig& config = {});

}  // namespace ubatch::filter
