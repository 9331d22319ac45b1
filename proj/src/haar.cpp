#include "ubatch/haar.hpp"

#include "ubatch/errors.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numeric>

namespace ubatch::haar {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

}  // namespace

Basis::Basis(int m) : m_(m) {
  if (m < 0) throw InvalidInput("haar::Basis: level count must be nonnegative");
  if (m > kMaxLevels) {
    throw ResourceError("haar::Basis: n = 2^" + std::to_string(m) + " exceeds the supported 2^" +
                        std::to_string(kMaxLevels));
  }
  n_ = std::size_t{1} << m;
  h_.resize(static_cast<Eigen::Index>(n_));
  for (std::size_t nu = 0; nu < n_; ++nu) {
    const int level = std::max(0, level_of(nu));
    h_(static_cast<Eigen::Index>(nu)) = std::pow(2.0, -0.5 * (m_ - level));
  }
  hh_ = h_ * h_.transpose();
}

int Basis::level_of(std::size_t nu) const {
  if (nu >= n_) throw InvalidInput("haar::Basis::level_of: row out of range");
  if (nu == 0) return -1;
  // Rows [2^i, 2^{i+1}) hold level i; row 1 is the mother (i = 0).
  int level = 0;
  while ((std::size_t{2} << level) <= nu) ++level;
  return level;
}

std::vector<std::size_t> Basis::level_rows(int level) const {
  std::vector<std::size_t> rows;
  if (level == -1) {
    rows.push_back(0);
  } else if (level >= 0 && level < m_) {
    const std::size_t begin = std::size_t{1} << level;
    for (std::size_t nu = begin; nu < 2 * begin; ++nu) rows.push_back(nu);
  } else {
    throw InvalidInput("haar::Basis::level_rows: no such level");
  }
  return rows;
}

Matrix Basis::dense() const {
  Matrix h(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  Vector e = Vector::Zero(static_cast<Eigen::Index>(n_));
  for (std::size_t c = 0; c < n_; ++c) {
    e.setZero();
    e(static_cast<Eigen::Index>(c)) = 1.0;
    h.col(static_cast<Eigen::Index>(c)) = forward(e);
  }
  return h;
}

// Each pass splits the active prefix into sums and differences of adjacent
// pairs; after m passes x holds (father, mother, level 1, ..., level m-1).
void Basis::forward_inplace(double* x, double* scratch) const {
  for (std::size_t len = n_; len >= 2; len /= 2) {
    const std::size_t half = len / 2;
    for (std::size_t j = 0; j < half; ++j) {
      const double a = x[2 * j];
      const double b = x[2 * j + 1];
      scratch[j] = (a + b) * kInvSqrt2;
      scratch[half + j] = (a - b) * kInvSqrt2;
    }
    std::copy(scratch, scratch + len, x);
  }
}

void Basis::inverse_inplace(double* y, double* scratch) const {
  for (std::size_t len = 2; len <= n_; len *= 2) {
    const std::size_t half = len / 2;
    for (std::size_t j = 0; j < half; ++j) {
      const double s = y[j];
      const double d = y[half + j];
      scratch[2 * j] = (s + d) * kInvSqrt2;
      scratch[2 * j + 1] = (s - d) * kInvSqrt2;
    }
    std::copy(scratch, scratch + len, y);
  }
}

Vector Basis::forward(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != n_) {
    throw InvalidInput("haar::forward: expected length " + std::to_string(n_));
  }
  Vector out = x;
  std::vector<double> scratch(n_);
  forward_inplace(out.data(), scratch.data());
  return out;
}

Vector Basis::inverse(const Vector& y) const {
  if (static_cast<std::size_t>(y.size()) != n_) {
    throw InvalidInput("haar::inverse: expected length " + std::to_string(n_));
  }
  Vector out = y;
  std::vector<double> scratch(n_);
  inverse_inplace(out.data(), scratch.data());
  return out;
}

Matrix Basis::forward_matrix(const Matrix& s) const {
  if (static_cast<std::size_t>(s.rows()) != n_ || static_cast<std::size_t>(s.cols()) != n_) {
    throw InvalidInput("haar::forward_matrix: expected a square matrix of size " +
                       std::to_string(n_));
  }
  // Column-major: transforming every column gives H S; transposing and
  // repeating gives (H (H S)^T)^T = H S H^T.
  Matrix out = s;
  std::vector<double> scratch(n_);
  for (Eigen::Index c = 0; c < out.cols(); ++c) forward_inplace(out.col(c).data(), scratch.data());
  out.transposeInPlace();
  for (Eigen::Index c = 0; c < out.cols(); ++c) forward_inplace(out.col(c).data(), scratch.data());
  out.transposeInPlace();
  return out;
}

Matrix Basis::inverse_matrix(const Matrix& l) const {
  if (static_cast<std::size_t>(l.rows()) != n_ || static_cast<std::size_t>(l.cols()) != n_) {
    throw InvalidInput("haar::inverse_matrix: expected a square matrix of size " +
                       std::to_string(n_));
  }
  Matrix out = l;
  std::vector<double> scratch(n_);
  for (Eigen::Index c = 0; c < out.cols(); ++c) inverse_inplace(out.col(c).data(), scratch.data());
  out.transposeInPlace();
  for (Eigen::Index c = 0; c < out.cols(); ++c) inverse_inplace(out.col(c).data(), scratch.data());
  out.transposeInPlace();
  return out;
}

Basis basis_for_size(std::size_t n) {
  if (n == 0 || (n & (n - 1)) != 0) {
    throw InvalidInput("haar: domain size " + std::to_string(n) + " is not a power of two");
  }
  int m = 0;
  while ((std::size_t{1} << m) < n) ++m;
  return Basis(m);
}

WeightedNorms weighted_matrix_norms(const Basis& basis, const Matrix& l) {
  const auto n = static_cast<Eigen::Index>(basis.size());
  if (l.rows() != n || l.cols() != n) {
    throw InvalidInput("haar::weighted_matrix_norms: size mismatch");
  }
  const Matrix weighted = basis.weight_outer().cwiseProduct(l).cwiseAbs();
  WeightedNorms out;
  out.l11_h = weighted.sum();
  out.frob_sq_h = weighted.squaredNorm();
  out.max_h = weighted.maxCoeff();
  return out;
}

int count_sign_changes(const SignVector& v) {
  int changes = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 1 && v[i] != -1) {
      throw InvalidInput("count_sign_changes: entry " + std::to_string(i) + " is not +1 or -1");
    }
    if (i > 0 && v[i] != v[i - 1]) ++changes;
  }
  return changes;
}

std::vector<SignVector> enumerate_sign_vectors(std::size_t n, int ell) {
  if (n == 0 || n > 16) throw InvalidInput("enumerate_sign_vectors: n must be in [1, 16]");
  std::vector<SignVector> out;
  SignVector v(n);
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << n); ++mask) {
    int changes = 0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = ((mask >> i) & 1u) ? -1 : 1;
      if (i > 0 && v[i] != v[i - 1]) ++changes;
    }
    if (changes <= ell) out.push_back(v);
  }
  return out;
}

SignVector random_sign_vector(std::size_t n, int changes, std::mt19937_64& rng) {
  if (n == 0) throw InvalidInput("random_sign_vector: n must be positive");
  if (changes < 0 || static_cast<std::size_t>(changes) > n - 1) {
    throw InvalidInput("random_sign_vector: change count out of range");
  }
  std::vector<std::size_t> positions(n - 1);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `changes` slots are a uniform subset.
  for (int c = 0; c < changes; ++c) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(c), n - 2);
    std::swap(positions[static_cast<std::size_t>(c)], positions[pick(rng)]);
  }
  std::vector<bool> flip(n, false);
  for (int c = 0; c < changes; ++c) flip[positions[static_cast<std::size_t>(c)] + 1] = true;
  SignVector v(n);
  int sign = std::uniform_int_distribution<int>(0, 1)(rng) ? 1 : -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (flip[i]) sign = -sign;
    v[i] = sign;
  }
  return v;
}

Vector to_vector(const SignVector& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

SignVector best_sign_vector(const Vector& u, int ell) {
  const auto n = static_cast<std::size_t>(u.size());
  if (n == 0) throw InvalidInput("best_sign_vector: empty input");
  if (ell < 0) throw InvalidInput("best_sign_vector: ell must be nonnegative");
  const auto budget = static_cast<std::size_t>(std::min<long>(ell, static_cast<long>(n) - 1));
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  // score[c][s]: best prefix total using c changes and ending with sign s (0: +1, 1: -1).
  std::vector<std::array<double, 2>> score(budget + 1, {kNegInf, kNegInf});
  // switched[a][c][s]: whether the best path into (a, c, s) changed sign at a.
  std::vector<std::vector<std::array<bool, 2>>> switched(
      n, std::vector<std::array<bool, 2>>(budget + 1, {false, false}));
  score[0] = {u(0), -u(0)};
  for (std::size_t a = 1; a < n; ++a) {
    const double x = u(static_cast<Eigen::Index>(a));
    auto next = score;
    for (std::size_t c = 0; c <= budget; ++c) {
      for (int s = 0; s < 2; ++s) {
        const double gain = s == 0 ? x : -x;
        double stay = score[c][s];
        double flip = c > 0 ? score[c - 1][1 - s] : kNegInf;
        const bool use_flip = flip > stay;
        next[c][s] = (use_flip ? flip : stay) + gain;
        switched[a][c][s] = use_flip;
      }
    }
    score = std::move(next);
  }
  std::size_t best_c = 0;
  int best_s = 0;
  for (std::size_t c = 0; c <= budget; ++c) {
    for (int s = 0; s < 2; ++s) {
      if (score[c][s] > score[best_c][best_s]) {
        best_c = c;
        best_s = s;
      }
    }
  }
  SignVector v(n);
  for (std::size_t a = n; a-- > 0;) {
    v[a] = best_s == 0 ? 1 : -1;
    if (a > 0 && switched[a][best_c][best_s]) {
      --best_c;
      best_s = 1 - best_s;
    }
  }
  return v;
}

}  // namespace ubatch::haar
