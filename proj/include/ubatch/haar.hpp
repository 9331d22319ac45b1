#pragma once

#include "ubatch/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace ubatch::haar {

inline constexpr int kMaxLevels = 14;

struct WeightedNorms {
  double l11_h = 0.0;     // sum h_a h_b |L_ab|
  double frob_sq_h = 0.0; // sum h_a^2 h_b^2 L_ab^2
  double max_h = 0.0;     // max h_a h_b |L_ab|
};

/// Orthonormal Haar basis of R^n, n = 2^m. Row order: father, mother, then
/// psi_{i,j} by increasing level i and position j. Row nu carries weight
/// h_nu = 2^{-(m-i)/2}; both level-0 rows use i = 0.
class Basis {
 public:
  explicit Basis(int m);

  int levels() const noexcept { return m_; }
  std::size_t size() const noexcept { return n_; }
  const Vector& weights() const noexcept { return h_; }
  // Outer product h h^T, cached for the weighted matrix norms.
  const Matrix& weight_outer() const noexcept { return hh_; }

  // Level label of row nu: -1 for the father, 0 for the mother, else i.
  int level_of(std::size_t nu) const;
  // Row indices T_i for level label i (see level_of).
  std::vector<std::size_t> level_rows(int level) const;

  // Dense H; O(n^2) memory, intended for tests and small n.
  Matrix dense() const;

  Vector forward(const Vector& x) const;
  Vector inverse(const Vector& y) const;

  // H S H^T and H^T L H via the butterfly on columns then rows.
  Matrix forward_matrix(const Matrix& s) const;
  Matrix inverse_matrix(const Matrix& l) const;

 private:
  void forward_inplace(double* x, double* scratch) const;
  void inverse_inplace(double* y, double* scratch) const;

  int m_;
  std::size_t n_;
  Vector h_;
  Matrix hh_;
};

// Basis for n = 2^m; throws InvalidInput unless n is a power of two.
Basis basis_for_size(std::size_t n);

WeightedNorms weighted_matrix_norms(const Basis& basis, const Matrix& l);

using SignVector = std::vector<int>;

// Number of i with v[i+1] != v[i]. Entries must be +1 or -1.
int count_sign_changes(const SignVector& v);

// Every v in {+1,-1}^n with at most ell sign changes, ordered by bit pattern.
// Limited to n <= 16.
std::vector<SignVector> enumerate_sign_vectors(std::size_t n, int ell);

// Uniform starting sign and `changes` distinct change positions.
SignVector random_sign_vector(std::size_t n, int changes, std::mt19937_64& rng);

Vector to_vector(const SignVector& v);

// argmax of <v, u> over v with at most ell sign changes (exact DP, O(n ell)).
SignVector best_sign_vector(const Vector& u, int ell);

}  // namespace ubatch::haar
