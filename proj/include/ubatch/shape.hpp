#pragma once

#include "ubatch/types.hpp"

#include <vector>

namespace ubatch::shape {

/// max over unions S of at most K disjoint intervals of |sum_{a in S} (mu_a - nu_a)|.
/// Inputs need not be normalized.
double ak_distance(const Vector& mu, const Vector& nu, int max_intervals);

// Largest total of at most K disjoint subarrays of d (empty selection allowed).
double max_k_disjoint_subarrays(const Vector& d, int max_intervals);

struct SegmentFit {
  Vector fitted;
  // 0-based start index of every segment after the first.
  std::vector<std::size_t> breakpoints;
  double cost = 0.0;  // residual sum of squares
};

/// Least-squares fit by at most `pieces` constant segments (exact DP). Ties go
/// to fewer pieces, then to the lexicographically earliest breakpoints.
SegmentFit fit_piecewise_constant(const Vector& x, int pieces);

/// As above with a degree-d polynomial per segment.
SegmentFit fit_piecewise_polynomial(const Vector& x, int pieces, int degree);

/// Shape-constrained rounding of a raw estimate: segment fit, clip at 0, renormalize.
Histogram round_to_distribution(const Vector& raw, const ShapeParams& shape);

}  // namespace ubatch::shape
