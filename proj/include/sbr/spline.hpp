#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sbr {

/// Equally spaced quadratic B-spline basis with knots at every integer year. The knot
/// grid extends two years beyond each end of the window, so every year in the window
/// is covered by a full partition of unity.
struct SplineBasis {
  int year_start = 0;
  int year_end = 0;
  std::vector<double> knots;
  int n_basis = 0;             ///< H
  Eigen::MatrixXd evaluations; ///< (T x H), row t holds k_h(year_start + t)
  Eigen::MatrixXd difference;  ///< ((H-1) x H) first-difference operator

  /// k_h(x) for every basis function at an arbitrary (possibly fractional) year.
  Eigen::VectorXd evaluate(double year) const;
};

/// Degree-2 B-spline B_h(x) on knots[h..h+3] by Cox-de Boor recursion.
double quadratic_bspline(std::span<const double> knots, int h, double x);

SplineBasis build_basis(int year_start, int year_end);

/// delta_t = sum_h k_h(t) alpha_h at the window year `year`.
double smoother_value(std::span<const double> alpha, const SplineBasis& basis, int year);

}  // namespace sbr
