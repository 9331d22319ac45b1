#pragma once

#include "ubatch/haar.hpp"
#include "ubatch/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ubatch::knorm {

/// Hyperparameters for the first-order K-norm solver.
struct SolverConfig {
  // Initial ascent step; <= 0 selects 1 / |M|_F.
  double step_size = 0.0;
  int max_outer_iters = 500;
  int dykstra_iters = 100;
  double feas_tol = 1e-6;
  // Stop once the objective improved by less than value_tol (relative) over
  // the last value_window outer iterations.
  double value_tol = 1e-4;
  int value_window = 25;
  // Sign-change budget of the test vectors being relaxed.
  int ell = 10;

  void validate() const;
};

/// Right-hand sides of the constraint set for a given (n, ell).
struct Budgets {
  double sparsity = 1.0;  // s = ell log2(n) + 1
  double l1 = 1.0;        // weighted l1,1 bound on H S H^T, s^2
  double frob_sq = 1.0;   // weighted squared Frobenius bound on H S H^T, s^2
};

Budgets budgets_for(std::size_t n, int ell);

/// Nonnegative violation of each constraint: entrywise max, weighted l1,1,
/// weighted Frobenius^2, weighted max, PSD (negated smallest eigenvalue).
struct Residuals {
  std::array<double, 5> values{};
  double max() const;
};

struct TestMatrix {
  Matrix sigma;
  Residuals residuals;
};

struct SolverReport {
  double value = 0.0;
  int iterations = 0;
  Residuals residuals;
  bool converged = false;
  // Objective after every outer iteration of the winning ascent.
  std::vector<double> trace;
};

struct KNormResult {
  double value = 0.0;
  TestMatrix test;
  SolverReport report;
  // Best S for <M, S> alone: the excess-variance direction the filter scores with.
  double excess_value = 0.0;
  Matrix excess_sigma;
};

struct ProjectionResult {
  TestMatrix test;
  bool converged = false;
  int rounds = 0;
};

Residuals measure_residuals(const haar::Basis& basis, const Matrix& sigma, const Budgets& budgets);

// Euclidean projection of y onto {x : sum c_i |x_i| <= radius}, c_i > 0.
std::vector<double> project_weighted_l1_ball(std::span<const double> y, std::span<const double> c,
                                             double radius);
// Euclidean projection of y onto {x : sum c_i x_i^2 <= radius}, c_i > 0.
std::vector<double> project_weighted_l2_ball(std::span<const double> y, std::span<const double> c,
                                             double radius);

// The five single-constraint projections, all in the original (Sigma) domain.
Matrix project_constraint_c1(const Matrix& sigma);
Matrix project_constraint_c2(const haar::Basis& basis, const Matrix& sigma, double budget);
Matrix project_constraint_c3(const haar::Basis& basis, const Matrix& sigma, double budget);
Matrix project_constraint_c4(const haar::Basis& basis, const Matrix& sigma);
Matrix project_constraint_c5(const Matrix& sigma);

/// Dykstra's alternating projections over the five constraints, followed by a
/// radial shrink of the (PSD) iterate so that the returned matrix lies in K.
/// `converged` reports whether Dykstra itself reached feas_tol.
ProjectionResult project_K(const haar::Basis& basis, const Matrix& sigma,
                           const SolverConfig& config);

/// Reusable K-norm solver. Successive solve() calls warm-start from the
/// previous ADMM state, which pays off inside the filter loop where M(w)
/// changes a little per round.
class KNormSolver {
 public:
  KNormSolver(const haar::Basis& basis, SolverConfig config);

  KNormResult solve(const Matrix& m);
  // Drop warm-start state.
  void reset();

  const SolverConfig& config() const noexcept { return config_; }
  const Budgets& budgets() const noexcept { return budgets_; }

  // Consensus ADMM iterate for one sign of the objective (transform domain).
  struct AdmmState {
    Matrix z;
    std::array<Matrix, 5> x;
    std::array<Matrix, 5> u;
    double rho = 0.0;
  };

 private:
  const haar::Basis* basis_;
  SolverConfig config_;
  Budgets budgets_;
  std::optional<AdmmState> plus_;
  std::optional<AdmmState> minus_;
};

/// Lower bound on sup_{S in K} |<M, S>| by consensus ADMM on <M, S> and
/// <-M, S>. The returned test matrix is feasible.
KNormResult k_norm(const haar::Basis& basis, const Matrix& m, const SolverConfig& config);

/// max |v^T M v| over v in {+-1}^n with at most ell sign changes (n <= 16).
double brute_force_k_norm(const Matrix& m, int ell);

struct OracleCheckReport {
  int trials = 0;
  // max over random symmetric M of brute_force_k_norm(M) - k_norm(M), floored at 0
  double max_violation = 0.0;
  double max_residual = 0.0;
  // max over planted M = v v^T of n^2 - k_norm(M), floored at 0
  double max_planted_gap = 0.0;
};

/// Solver against exhaustive search on `trials` random symmetric matrices
/// (iid N(0, 1), symmetrized) and as many planted v v^T with v in V^n_ell.
OracleCheckReport oracle_check(std::size_t n, int ell, int trials, std::uint64_t seed,
                               SolverConfig config = {});

}  // namespace ubatch::knorm
