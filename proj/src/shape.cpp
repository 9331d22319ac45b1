#include "ubatch/shape.hpp"

#include "ubatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace ubatch::shape {

double max_k_disjoint_subarrays(const Vector& d, int max_intervals) {
  if (max_intervals < 1) throw InvalidInput("max_k_disjoint_subarrays: K must be at least 1");
  const auto kmax = static_cast<std::size_t>(max_intervals);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  // closed[j]: best total with j intervals, none open at the current symbol.
  // open[j]: best total with j intervals, the j-th ending at the current symbol.
  std::vector<double> closed(kmax + 1, kNegInf);
  std::vector<double> open(kmax + 1, kNegInf);
  closed[0] = 0.0;
  for (Eigen::Index a = 0; a < d.size(); ++a) {
    for (std::size_t j = kmax; j >= 1; --j) {
      open[j] = std::max(open[j], closed[j - 1]) + d(a);
      closed[j] = std::max(closed[j], open[j]);
    }
  }
  return *std::max_element(closed.begin(), closed.end());
}

double ak_distance(const Vector& mu, const Vector& nu, int max_intervals) {
  if (mu.size() != nu.size()) throw InvalidInput("ak_distance: length mismatch");
  if (max_intervals < 1) throw InvalidInput("ak_distance: K must be at least 1");
  const Vector d = mu - nu;
  return std::max(max_k_disjoint_subarrays(d, max_intervals),
                  max_k_disjoint_subarrays(-d, max_intervals));
}

namespace {

using CostFn = std::function<double(std::size_t, std::size_t)>;

// Exact segmentation DP over suffixes: best[j][i] is the cheapest cover of
// [i, n) by exactly j segments.
std::vector<std::size_t> segment(std::size_t n, std::size_t pieces, const CostFn& cost,
                                 double tie_tol, double& total) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  pieces = std::min(pieces, n);
  std::vector<std::vector<double>> seg(n, std::vector<double>(n + 1, kInf));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = i + 1; e <= n; ++e) seg[i][e] = cost(i, e);
  }
  std::vector<std::vector<double>> best(pieces + 1, std::vector<double>(n + 1, kInf));
  best[0][n] = 0.0;
  for (std::size_t j = 1; j <= pieces; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double b = kInf;
      for (std::size_t e = i + 1; e <= n; ++e) {
        if (best[j - 1][e] < kInf) b = std::min(b, seg[i][e] + best[j - 1][e]);
      }
      best[j][i] = b;
    }
  }
  double optimum = kInf;
  for (std::size_t j = 1; j <= pieces; ++j) optimum = std::min(optimum, best[j][0]);
  std::size_t used = 1;
  while (best[used][0] > optimum + tie_tol) ++used;

  std::vector<std::size_t> starts;
  std::size_t i = 0;
  for (std::size_t j = used; j >= 1; --j) {
    for (std::size_t e = i + 1; e <= n; ++e) {
      if (best[j - 1][e] < kInf && seg[i][e] + best[j - 1][e] <= best[j][i] + tie_tol) {
        if (e < n) starts.push_back(e);
        i = e;
        break;
      }
    }
  }
  total = best[used][0];
  return starts;
}

double tie_tolerance(const Vector& x) { return 1e-12 * (1.0 + x.squaredNorm()); }

void check_fit_args(const Vector& x, int pieces) {
  if (x.size() == 0) throw InvalidInput("segment fit: empty input");
  if (pieces < 1) throw InvalidInput("segment fit: pieces must be at least 1");
  if (!x.allFinite()) throw InvalidInput("segment fit: input is not finite");
}

// Least-squares polynomial on x[i, e) evaluated at the same points.
Vector poly_segment(const Vector& x, std::size_t i, std::size_t e, int degree) {
  const auto len = static_cast<Eigen::Index>(e - i);
  const auto cols = std::min<Eigen::Index>(degree + 1, len);
  Matrix vander(len, cols);
  const double mid = 0.5 * static_cast<double>(len - 1);
  for (Eigen::Index r = 0; r < len; ++r) {
    double t = static_cast<double>(r) - mid;
    double p = 1.0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      vander(r, c) = p;
      p *= t;
    }
  }
  const Vector y = x.segment(static_cast<Eigen::Index>(i), len);
  const Vector coef = vander.colPivHouseholderQr().solve(y);
  return vander * coef;
}

}  // namespace

SegmentFit fit_piecewise_constant(const Vector& x, int pieces) {
  check_fit_args(x, pieces);
  const auto n = static_cast<std::size_t>(x.size());
  // Shift by the mean before forming prefix sums to limit cancellation.
  const double shift = x.mean();
  std::vector<double> s1(n + 1, 0.0);
  std::vector<double> s2(n + 1, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const double v = x(static_cast<Eigen::Index>(a)) - shift;
    s1[a + 1] = s1[a] + v;
    s2[a + 1] = s2[a] + v * v;
  }
  auto cost = [&](std::size_t i, std::size_t e) {
    const double len = static_cast<double>(e - i);
    const double sum = s1[e] - s1[i];
    return std::max(0.0, (s2[e] - s2[i]) - sum * sum / len);
  };
  SegmentFit out;
  double total = 0.0;
  out.breakpoints = segment(n, static_cast<std::size_t>(pieces), cost, tie_tolerance(x), total);

  out.fitted.resize(x.size());
  std::size_t begin = 0;
  for (std::size_t p = 0; p <= out.breakpoints.size(); ++p) {
    const std::size_t end = p < out.breakpoints.size() ? out.breakpoints[p] : n;
    const auto b = static_cast<Eigen::Index>(begin);
    const auto len = static_cast<Eigen::Index>(end - begin);
    out.fitted.segment(b, len).setConstant(x.segment(b, len).mean());
    begin = end;
  }
  out.cost = (x - out.fitted).squaredNorm();
  return out;
}

SegmentFit fit_piecewise_polynomial(const Vector& x, int pieces, int degree) {
  if (degree < 0) throw InvalidInput("fit_piecewise_polynomial: degree must be nonnegative");
  if (degree == 0) return fit_piecewise_constant(x, pieces);
  check_fit_args(x, pieces);
  const auto n = static_cast<std::size_t>(x.size());
  auto cost = [&](std::size_t i, std::size_t e) {
    const Vector fit = poly_segment(x, i, e, degree);
    return (x.segment(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e - i)) - fit)
        .squaredNorm();
  };
  SegmentFit out;
  double total = 0.0;
  out.breakpoints = segment(n, static_cast<std::size_t>(pieces), cost, tie_tolerance(x), total);
  out.fitted.resize(x.size());
  std::size_t begin = 0;
  for (std::size_t p = 0; p <= out.breakpoints.size(); ++p) {
    const std::size_t end = p < out.breakpoints.size() ? out.breakpoints[p] : n;
    out.fitted.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        poly_segment(x, begin, end, degree);
    begin = end;
  }
  out.cost = (x - out.fitted).squaredNorm();
  return out;
}

Histogram round_to_distribution(const Vector& raw, const ShapeParams& shape) {
  if (!raw.allFinite()) throw InvalidInput("round_to_distribution: raw estimate is not finite");
  const SegmentFit fit = shape.degree == 0
                             ? fit_piecewise_constant(raw, shape.intervals())
                             : fit_piecewise_polynomial(raw, shape.pieces, shape.degree);
  Vector clipped = fit.fitted.cwiseMax(0.0);
  const double mass = clipped.sum();
  if (!(mass > 0.0)) throw DegenerateEstimate("round_to_distribution: no positive mass after clipping");
  return Histogram(clipped / mass);
}

}  // namespace ubatch::shape
