#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazsmooth/types.hpp"

namespace hazsmooth {

// Uniform B-spline basis on [domain_lo, domain_hi] split into n_segments
// equal spans, with the knot vector extended by `degree` knots on each side.
// That extension makes the basis full-rank at the boundaries and gives
// n_segments + degree basis functions in total.
struct KnotGrid {
  double domain_lo = 0.0;
  double domain_hi = 1.0;
  int n_segments = 1;
  int degree = 3;

  double spacing() const { return (domain_hi - domain_lo) / n_segments; }
  int n_basis() const { return n_segments + degree; }

  void validate() const {
    if (!(domain_lo < domain_hi) || !std::isfinite(domain_lo) || !std::isfinite(domain_hi))
      throw std::invalid_argument("KnotGrid: domain_lo must be finite and less than domain_hi");
    if (n_segments < 1) throw std::invalid_argument("KnotGrid: n_segments must be positive");
    if (degree < 0) throw std::invalid_argument("KnotGrid: degree must be non-negative");
  }
};

struct BasisMatrix {
  Matrix values;               // n_points x n_basis, at most degree+1 nonzeros per row
  std::vector<double> points;  // evaluation points, in call order
};

// Rows of values are the signed binomial stencils of the order-th forward
// difference, e.g. order 2 over 5 coefficients starts (1, -2, 1, 0, 0).
struct DifferenceMatrix {
  int order = 0;
  Matrix values;  // (n_basis - order) x n_basis
};

// Evaluates all basis functions at each point.  Points are not restricted to
// the domain: a point outside it is evaluated on the polynomial pieces of the
// nearest boundary span, so the basis extends smoothly and still sums to one.
inline BasisMatrix build_basis(const KnotGrid& grid, std::span<const double> points) {
  grid.validate();
  const int p = grid.degree;
  const int c = grid.n_basis();
  const double h = grid.spacing();

  for (std::size_t i = 0; i < points.size(); ++i)
    if (!std::isfinite(points[i]))
      throw std::invalid_argument("build_basis: non-finite evaluation point at index " +
                                  std::to_string(i));

  // knots[i] = domain_lo + (i - degree) * h, i = 0 .. n_segments + 2*degree
  std::vector<double> knots(static_cast<std::size_t>(grid.n_segments + 2 * p) + 1);
  for (std::size_t i = 0; i < knots.size(); ++i)
    knots[i] = grid.domain_lo + (static_cast<int>(i) - p) * h;

  BasisMatrix out;
  out.points.assign(points.begin(), points.end());
  out.values = Matrix::Zero(static_cast<Eigen::Index>(points.size()), c);

  std::vector<double> N(static_cast<std::size_t>(p) + 1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = points[i];
    // Span index, clamped so out-of-domain points reuse the boundary span.
    int k = static_cast<int>(std::floor((x - grid.domain_lo) / h));
    k = std::clamp(k, 0, grid.n_segments - 1);
    const int j = k + p;  // global index of the span's left knot

    // Triangular recurrence over the degree+1 splines alive on span k.
    N[0] = 1.0;
    for (int deg = 1; deg <= p; ++deg) {
      double saved = 0.0;
      for (int r = 0; r < deg; ++r) {
        const double den = knots[j + r + 1] - knots[j + r + 1 - deg];
        const double tmp = N[r] / den;
        N[r] = saved + (knots[j + r + 1] - x) * tmp;
        saved = (x - knots[j + r + 1 - deg]) * tmp;
      }
      N[deg] = saved;
    }
    for (int r = 0; r <= p; ++r)
      out.values(static_cast<Eigen::Index>(i), k + r) = N[r];
  }
  return out;
}

// Order-d difference matrix as the d-fold product of first differences.
inline DifferenceMatrix build_difference_matrix(int n_basis, int order) {
  if (n_basis < 1) throw std::invalid_argument("build_difference_matrix: n_basis must be positive");
  if (order < 1) throw std::invalid_argument("build_difference_matrix: order must be positive");
  if (order >= n_basis) throw std::invalid_argument("penalty order too high for basis size");

  Matrix d = Matrix::Identity(n_basis, n_basis);
  for (int k = 0; k < order; ++k) {
    const Eigen::Index rows = d.rows() - 1;
    Matrix next = d.bottomRows(rows) - d.topRows(rows);
    d = std::move(next);
  }
  return {order, std::move(d)};
}

}  // namespace hazsmooth
