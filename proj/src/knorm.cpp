#include "ubatch/knorm.hpp"

#include "ubatch/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace ubatch::knorm {

namespace {

constexpr int kRootFindIters = 200;
constexpr double kRootFindTol = 1e-10;

std::span<const double> flat(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

Matrix unflat(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Constraint 2 in the transform domain, weights c_ab = h_a h_b.
Matrix l1_in_transform(const Matrix& l, const Matrix& hh, double budget) {
  if (hh.cwiseProduct(l).cwiseAbs().sum() <= budget) return l;
  return unflat(project_weighted_l1_ball(flat(l), flat(hh), budget), l.rows(), l.cols());
}

// Constraint 3 in the transform domain, weights h_a^2 h_b^2.
Matrix l2_in_transform(const Matrix& l, const Matrix& hh, double budget) {
  const Matrix c = hh.cwiseProduct(hh);
  if (c.cwiseProduct(l.cwiseProduct(l)).sum() <= budget) return l;
  return unflat(project_weighted_l2_ball(flat(l), flat(c), budget), l.rows(), l.cols());
}

// Constraint 4 in the transform domain: |L_ab| <= 1 / (h_a h_b).
Matrix max_in_transform(const Matrix& l, const Matrix& hh) {
  const Matrix bound = hh.cwiseInverse();
  return l.cwiseMin(bound).cwiseMax(-bound);
}

Matrix psd_clip(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) throw SolverError("PSD projection: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() >= 0.0) return s;
  const Vector clipped = es.eigenvalues().cwiseMax(0.0);
  return symmetrize(es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose());
}

double smallest_eigenvalue(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw SolverError("eigenvalue computation failed");
  return es.eigenvalues().minCoeff();
}

struct CheapResiduals {
  double max_abs = 0.0;
  haar::WeightedNorms norms;
};

CheapResiduals cheap_residuals(const haar::Basis& basis, const Matrix& sigma, const Matrix& l) {
  return {sigma.cwiseAbs().maxCoeff(), haar::weighted_matrix_norms(basis, l)};
}

bool within_tolerance(const CheapResiduals& r, const Budgets& b, double tol) {
  return r.max_abs - 1.0 <= tol && r.norms.l11_h - b.l1 <= tol &&
         r.norms.frob_sq_h - b.frob_sq <= tol && r.norms.max_h - 1.0 <= tol;
}

struct DykstraOutcome {
  Matrix sigma;
  bool converged = false;
  int rounds = 0;
};

// Dykstra over c1..c5 then a radial shrink; c5 runs last so the iterate is PSD
// and shrinking toward 0 keeps it in the cone while restoring c1..c4.
DykstraOutcome dykstra(const haar::Basis& basis, const Matrix& start, const Budgets& budgets,
                       const SolverConfig& config) {
  const Matrix& hh = basis.weight_outer();
  const auto n = start.rows();
  Matrix sigma = symmetrize(start);
  Matrix inc1 = Matrix::Zero(n, n);
  Matrix inc2 = Matrix::Zero(n, n);
  Matrix inc3 = Matrix::Zero(n, n);
  Matrix inc4 = Matrix::Zero(n, n);
  Matrix inc5 = Matrix::Zero(n, n);
  Matrix l;
  DykstraOutcome out;
  CheapResiduals res;
  for (int round = 1; round <= config.dykstra_iters; ++round) {
    Matrix y = sigma + inc1;
    sigma = y.cwiseMin(1.0).cwiseMax(-1.0);
    inc1 = y - sigma;

    l = basis.forward_matrix(sigma);
    y = l + inc2;
    l = l1_in_transform(y, hh, budgets.l1);
    inc2 = y - l;

    y = l + inc3;
    l = l2_in_transform(y, hh, budgets.frob_sq);
    inc3 = y - l;

    y = l + inc4;
    l = max_in_transform(y, hh);
    inc4 = y - l;

    y = l + inc5;
    l = psd_clip(y);
    inc5 = y - l;

    sigma = symmetrize(basis.inverse_matrix(l));
    out.rounds = round;
    res = cheap_residuals(basis, sigma, l);
    if (within_tolerance(res, budgets, config.feas_tol)) {
      out.converged = true;
      break;
    }
  }

  double scale = 1.0;
  if (res.max_abs > 1.0) scale = std::min(scale, 1.0 / res.max_abs);
  if (res.norms.l11_h > budgets.l1) scale = std::min(scale, budgets.l1 / res.norms.l11_h);
  if (res.norms.frob_sq_h > budgets.frob_sq) {
    scale = std::min(scale, std::sqrt(budgets.frob_sq / res.norms.frob_sq_h));
  }
  if (res.norms.max_h > 1.0) scale = std::min(scale, 1.0 / res.norms.max_h);
  out.sigma = scale < 1.0 ? Matrix(scale * sigma) : sigma;
  return out;
}

void require_square(const haar::Basis& basis, const Matrix& m, const char* what) {
  const auto n = static_cast<Eigen::Index>(basis.size());
  if (m.rows() != n || m.cols() != n) {
    throw InvalidInput(std::string(what) + ": expected a " + std::to_string(n) + "x" +
                       std::to_string(n) + " matrix");
  }
}

struct Ascent {
  Matrix sigma;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

double shrink_factor(const CheapResiduals& res, const Budgets& budgets) {
  double scale = 1.0;
  if (res.max_abs > 1.0) scale = std::min(scale, 1.0 / res.max_abs);
  if (res.norms.l11_h > budgets.l1) scale = std::min(scale, budgets.l1 / res.norms.l11_h);
  if (res.norms.frob_sq_h > budgets.frob_sq) {
    scale = std::min(scale, std::sqrt(budgets.frob_sq / res.norms.frob_sq_h));
  }
  if (res.norms.max_h > 1.0) scale = std::min(scale, 1.0 / res.norms.max_h);
  return scale;
}

// Returns a point of K built from the transform-domain iterate l: its PSD part
// shrunk radially until c1..c4 hold, or v v^T for the sign vector closest to
// its leading eigenvector, whichever scores higher on `direction`.
Matrix certify(const haar::Basis& basis, const Matrix& l, const Budgets& budgets,
               const Matrix& direction, int ell) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(l));
  if (es.info() != Eigen::Success) throw SolverError("certify: eigendecomposition failed");
  const Vector clipped = es.eigenvalues().cwiseMax(0.0);
  const Matrix psd =
      symmetrize(es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose());
  Matrix sigma = symmetrize(basis.inverse_matrix(psd));
  const double scale = shrink_factor(cheap_residuals(basis, sigma, psd), budgets);
  if (scale < 1.0) sigma *= scale;

  const Vector lead = basis.inverse(es.eigenvectors().col(es.eigenvectors().cols() - 1));
  const Vector v = haar::to_vector(haar::best_sign_vector(lead, ell));
  if (v.dot(direction * v) > direction.cwiseProduct(sigma).sum()) {
    Matrix rank_one = v * v.transpose();
    const double s1 = shrink_factor(
        cheap_residuals(basis, rank_one, basis.forward_matrix(rank_one)), budgets);
    if (s1 < 1.0) rank_one *= s1;
    if (direction.cwiseProduct(rank_one).sum() > direction.cwiseProduct(sigma).sum()) {
      return rank_one;
    }
  }
  return sigma;
}

constexpr int kBlocks = 5;
constexpr double kRelax = 1.6;
constexpr int kRhoUpdateEvery = 10;

// Consensus ADMM for max <D, S> over the intersection of the five sets, run in
// the transform domain L = H S H^T where four of the five projections are
// entrywise. The best certified iterate is kept, so the trace is monotone.
Ascent ascend(const haar::Basis& basis, const Matrix& direction, const Budgets& budgets,
              const SolverConfig& config, std::optional<KNormSolver::AdmmState>& state) {
  const Matrix& hh = basis.weight_outer();
  const double n = static_cast<double>(basis.size());
  const double fro = direction.norm();
  const Matrix dl = basis.forward_matrix(direction);

  auto project = [&](int j, const Matrix& y) -> Matrix {
    switch (j) {
      case 0: return basis.forward_matrix(basis.inverse_matrix(y).cwiseMin(1.0).cwiseMax(-1.0));
      case 1: return l1_in_transform(y, hh, budgets.l1);
      case 2: return l2_in_transform(y, hh, budgets.frob_sq);
      case 3: return max_in_transform(y, hh);
      default: return psd_clip(y);
    }
  };

  Ascent a;
  if (!state) {
    // Cold start aligned with the objective.
    state.emplace();
    state->rho = config.step_size > 0.0 ? 1.0 / config.step_size : fro / n;
    state->z = (n / fro) * dl;
    for (int j = 0; j < kBlocks; ++j) {
      state->x[j] = project(j, state->z);
      state->u[j] = Matrix::Zero(state->z.rows(), state->z.cols());
    }
    a.sigma = certify(basis, state->z, budgets, direction, config.ell);
  } else {
    a.sigma = certify(basis, state->x[kBlocks - 1], budgets, direction, config.ell);
  }
  a.value = direction.cwiseProduct(a.sigma).sum();
  a.trace.push_back(a.value);

  Matrix& z = state->z;
  auto& x = state->x;
  auto& u = state->u;
  double& rho = state->rho;
  for (int it = 1; it <= config.max_outer_iters; ++it) {
    const Matrix z_prev = z;
    z = dl / (kBlocks * rho);
    for (int j = 0; j < kBlocks; ++j) z += (x[j] - u[j]) / kBlocks;
    double primal_sq = 0.0;
    for (int j = 0; j < kBlocks; ++j) {
      const Matrix zr = kRelax * z + (1.0 - kRelax) * x[j];
      x[j] = project(j, zr + u[j]);
      const Matrix gap = z - x[j];
      u[j] += zr - x[j];
      primal_sq += gap.squaredNorm();
    }
    const double primal = std::sqrt(primal_sq);
    const double dual = rho * std::sqrt(double{kBlocks}) * (z - z_prev).norm();

    // The PSD block's iterate is (nearly) in the cone; certify it.
    Matrix cand = certify(basis, x[kBlocks - 1], budgets, direction, config.ell);
    const double value = direction.cwiseProduct(cand).sum();
    if (value > a.value) {
      a.sigma = std::move(cand);
      a.value = value;
    }
    a.trace.push_back(a.value);
    a.iterations = it;

    if (it % kRhoUpdateEvery != 0) {
    } else if (primal > 10.0 * dual) {
      rho *= 2.0;
      for (auto& uj : u) uj *= 0.5;
    } else if (dual > 10.0 * primal) {
      rho *= 0.5;
      for (auto& uj : u) uj *= 2.0;
    }

    if (it >= config.value_window && primal <= config.feas_tol * std::max(1.0, z.norm())) {
      const double before =
          a.trace[a.trace.size() - 1 - static_cast<std::size_t>(config.value_window)];
      if (a.value - before <= config.value_tol * std::abs(a.value)) {
        a.converged = true;
        break;
      }
    }
  }
  return a;
}

}  // namespace

void SolverConfig::validate() const {
  if (step_size < 0.0) throw InvalidInput("SolverConfig: step_size must be nonnegative");
  if (max_outer_iters < 0) throw InvalidInput("SolverConfig: max_outer_iters must be nonnegative");
  if (dykstra_iters < 1) throw InvalidInput("SolverConfig: dykstra_iters must be positive");
  if (!(feas_tol > 0.0)) throw InvalidInput("SolverConfig: feas_tol must be positive");
  if (!(value_tol > 0.0)) throw InvalidInput("SolverConfig: value_tol must be positive");
  if (value_window < 1) throw InvalidInput("SolverConfig: value_window must be positive");
  if (ell < 0) throw InvalidInput("SolverConfig: ell must be nonnegative");
}

Budgets budgets_for(std::size_t n, int ell) {
  if (n == 0) throw InvalidInput("budgets_for: n must be positive");
  Budgets b;
  b.sparsity = ell * std::log2(static_cast<double>(n)) + 1.0;
  b.l1 = b.sparsity * b.sparsity;
  b.frob_sq = b.sparsity * b.sparsity;
  return b;
}

double Residuals::max() const { return *std::max_element(values.begin(), values.end()); }

Residuals measure_residuals(const haar::Basis& basis, const Matrix& sigma, const Budgets& budgets) {
  require_square(basis, sigma, "measure_residuals");
  const auto norms = haar::weighted_matrix_norms(basis, basis.forward_matrix(sigma));
  Residuals r;
  r.values[0] = std::max(0.0, sigma.cwiseAbs().maxCoeff() - 1.0);
  r.values[1] = std::max(0.0, norms.l11_h - budgets.l1);
  r.values[2] = std::max(0.0, norms.frob_sq_h - budgets.frob_sq);
  r.values[3] = std::max(0.0, norms.max_h - 1.0);
  r.values[4] = std::max(0.0, -smallest_eigenvalue(symmetrize(sigma)));
  return r;
}

std::vector<double> project_weighted_l1_ball(std::span<const double> y, std::span<const double> c,
                                             double radius) {
  if (y.size() != c.size()) throw InvalidInput("project_weighted_l1_ball: length mismatch");
  if (radius < 0.0) throw InvalidInput("project_weighted_l1_ball: negative radius");
  double norm = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(c[i] > 0.0)) throw InvalidInput("project_weighted_l1_ball: weights must be positive");
    norm += c[i] * std::abs(y[i]);
  }
  std::vector<double> out(y.begin(), y.end());
  if (norm <= radius) return out;

  // The shrinkage sum_i c_i max(|y_i| - lambda c_i, 0) is piecewise linear in
  // lambda with breakpoints |y_i| / c_i; walk them from the largest down.
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(y[a]) * c[b] > std::abs(y[b]) * c[a];
  });
  double weighted_abs = 0.0;
  double weight_sq = 0.0;
  double lambda = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    const std::size_t i = order[j];
    weighted_abs += c[i] * std::abs(y[i]);
    weight_sq += c[i] * c[i];
    lambda = (weighted_abs - radius) / weight_sq;
    const double next = j + 1 < order.size()
                            ? std::abs(y[order[j + 1]]) / c[order[j + 1]]
                            : 0.0;
    if (lambda >= next) break;
  }
  lambda = std::max(lambda, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double mag = std::max(std::abs(y[i]) - lambda * c[i], 0.0);
    out[i] = std::copysign(mag, y[i]);
  }
  return out;
}

std::vector<double> project_weighted_l2_ball(std::span<const double> y, std::span<const double> c,
                                             double radius) {
  if (y.size() != c.size()) throw InvalidInput("project_weighted_l2_ball: length mismatch");
  if (radius < 0.0) throw InvalidInput("project_weighted_l2_ball: negative radius");
  double norm = 0.0;
  double upper_sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(c[i] > 0.0)) throw InvalidInput("project_weighted_l2_ball: weights must be positive");
    norm += c[i] * y[i] * y[i];
    upper_sq += y[i] * y[i] / c[i];
  }
  std::vector<double> out(y.begin(), y.end());
  if (norm <= radius) return out;
  if (radius == 0.0) return std::vector<double>(y.size(), 0.0);

  auto shrunk_norm = [&](double lambda) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double x = y[i] / (1.0 + lambda * c[i]);
      acc += c[i] * x * x;
    }
    return acc;
  };
  // sum c y^2 / (1 + lambda c)^2 < sum y^2 / (lambda^2 c), so this bracket is feasible.
  double lo = 0.0;
  double hi = std::sqrt(upper_sq / radius);
  bool done = false;
  for (int it = 0; it < kRootFindIters; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (shrunk_norm(mid) > radius) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= kRootFindTol * std::max(1.0, hi)) {
      done = true;
      break;
    }
  }
  if (!done) throw SolverError("project_weighted_l2_ball: root find did not converge");
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] / (1.0 + hi * c[i]);
  return out;
}

Matrix project_constraint_c1(const Matrix& sigma) { return sigma.cwiseMin(1.0).cwiseMax(-1.0); }

Matrix project_constraint_c2(const haar::Basis& basis, const Matrix& sigma, double budget) {
  require_square(basis, sigma, "project_constraint_c2");
  const Matrix l = basis.forward_matrix(sigma);
  if (haar::weighted_matrix_norms(basis, l).l11_h <= budget) return sigma;
  return basis.inverse_matrix(l1_in_transform(l, basis.weight_outer(), budget));
}

Matrix project_constraint_c3(const haar::Basis& basis, const Matrix& sigma, double budget) {
  require_square(basis, sigma, "project_constraint_c3");
  const Matrix l = basis.forward_matrix(sigma);
  if (haar::weighted_matrix_norms(basis, l).frob_sq_h <= budget) return sigma;
  return basis.inverse_matrix(l2_in_transform(l, basis.weight_outer(), budget));
}

Matrix project_constraint_c4(const haar::Basis& basis, const Matrix& sigma) {
  require_square(basis, sigma, "project_constraint_c4");
  const Matrix l = basis.forward_matrix(sigma);
  if (haar::weighted_matrix_norms(basis, l).max_h <= 1.0) return sigma;
  return basis.inverse_matrix(max_in_transform(l, basis.weight_outer()));
}

Matrix project_constraint_c5(const Matrix& sigma) { return psd_clip(symmetrize(sigma)); }

ProjectionResult project_K(const haar::Basis& basis, const Matrix& sigma,
                           const SolverConfig& config) {
  config.validate();
  require_square(basis, sigma, "project_K");
  const Budgets budgets = budgets_for(basis.size(), config.ell);
  DykstraOutcome d = dykstra(basis, sigma, budgets, config);
  ProjectionResult out;
  out.test.residuals = measure_residuals(basis, d.sigma, budgets);
  out.test.sigma = std::move(d.sigma);
  out.converged = d.converged;
  out.rounds = d.rounds;
  return out;
}

KNormSolver::KNormSolver(const haar::Basis& basis, SolverConfig config)
    : basis_(&basis), config_(config), budgets_(budgets_for(basis.size(), config.ell)) {
  config_.validate();
}

void KNormSolver::reset() {
  plus_.reset();
  minus_.reset();
}

KNormResult KNormSolver::solve(const Matrix& m) {
  require_square(*basis_, m, "k_norm");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidInput("k_norm: matrix is not symmetric");
  }
  const auto n = m.rows();

  KNormResult out;
  if (m.norm() == 0.0) {
    out.test.sigma = Matrix::Zero(n, n);
    out.excess_sigma = Matrix::Zero(n, n);
    out.report.converged = true;
    out.report.trace = {0.0};
    return out;
  }

  const Matrix sym = symmetrize(m);
  Ascent plus = ascend(*basis_, sym, budgets_, config_, plus_);
  Ascent minus = ascend(*basis_, -sym, budgets_, config_, minus_);
  Ascent& best = minus.value > plus.value ? minus : plus;
  out.excess_value = plus.value;
  out.excess_sigma = plus.sigma;

  out.value = std::max(0.0, best.value);
  out.test.residuals = measure_residuals(*basis_, best.sigma, budgets_);
  out.test.sigma = std::move(best.sigma);
  out.report.value = out.value;
  out.report.iterations = plus.iterations + minus.iterations;
  out.report.residuals = out.test.residuals;
  out.report.converged = plus.converged && minus.converged &&
                         out.test.residuals.max() <= config_.feas_tol;
  out.report.trace = std::move(best.trace);
  return out;
}

KNormResult k_norm(const haar::Basis& basis, const Matrix& m, const SolverConfig& config) {
  KNormSolver solver(basis, config);
  return solver.solve(m);
}

double brute_force_k_norm(const Matrix& m, int ell) {
  const auto n = static_cast<std::size_t>(m.rows());
  if (m.rows() != m.cols()) throw InvalidInput("brute_force_k_norm: matrix must be square");
  if (n > 16) throw InvalidInput("brute_force_k_norm: refused for n > 16");
  double best = 0.0;
  for (const auto& v : haar::enumerate_sign_vectors(n, ell)) {
    const Vector x = haar::to_vector(v);
    best = std::max(best, std::abs(x.dot(m * x)));
  }
  return best;
}

OracleCheckReport oracle_check(std::size_t n, int ell, int trials, std::uint64_t seed,
                               SolverConfig config) {
  if (n > 16) throw InvalidInput("oracle_check: n = " + std::to_string(n) +
                                 " exceeds 16, exhaustive search refused");
  if (trials < 1) throw InvalidInput("oracle_check: trials must be >= 1");
  config.ell = ell;
  config.validate();
  const haar::Basis basis = haar::basis_for_size(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> changes(0, std::min<int>(ell, static_cast<int>(n) - 1));
  const auto dim = static_cast<Eigen::Index>(n);
  OracleCheckReport report;
  report.trials = trials;
  for (int t = 0; t < trials; ++t) {
    Matrix a(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
      for (Eigen::Index j = 0; j < dim; ++j) a(i, j) = gauss(rng);
    const Matrix m = 0.5 * (a + a.transpose());
    const KNormResult got = k_norm(basis, m, config);
    report.max_violation =
        std::max(report.max_violation, brute_force_k_norm(m, ell) - got.value);
    report.max_residual = std::max(report.max_residual, got.test.residuals.max());

    const Vector v = haar::to_vector(haar::random_sign_vector(n, changes(rng), rng));
    const KNormResult planted = k_norm(basis, v * v.transpose(), config);
    report.max_planted_gap =
        std::max(report.max_planted_gap, static_cast<double>(n * n) - planted.value);
    report.max_residual = std::max(report.max_residual, planted.test.residuals.max());
  }
  return report;
}

}  // namespace ubatch::knorm
