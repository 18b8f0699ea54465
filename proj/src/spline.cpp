#include "sbr/spline.hpp"

#include <stdexcept>
#include <string>

namespace sbr {

namespace {

double cox_de_boor(std::span<const double> knots, int i, int degree, double x) {
  if (degree == 0) {
    return (knots[i] <= x && x < knots[i + 1]) ? 1.0 : 0.0;
  }
  double value = 0.0;
  const double left = knots[i + degree] - knots[i];
  if (left > 0) value += (x - knots[i]) / left * cox_de_boor(knots, i, degree - 1, x);
  const double right = knots[i + degree + 1] - knots[i + 1];
  if (right > 0) value += (knots[i + degree + 1] - x) / right * cox_de_boor(knots, i + 1, degree - 1, x);
  return value;
}

}  // namespace

double quadratic_bspline(std::span<const double> knots, int h, double x) {
  if (h < 0 || static_cast<std::size_t>(h) + 3 >= knots.size()) {
    throw std::out_of_range("basis index outside knot grid");
  }
  return cox_de_boor(knots, h, 2, x);
}

SplineBasis build_basis(int year_start, int year_end) {
  if (year_end - year_start < 1) {
    throw std::invalid_argument("spline window must span at least 2 years, got " + std::to_string(year_start) +
                                "-" + std::to_string(year_end));
  }
  SplineBasis basis;
  basis.year_start = year_start;
  basis.year_end = year_end;
  for (int k = year_start - 2; k <= year_end + 2; ++k) basis.knots.push_back(static_cast<double>(k));
  basis.n_basis = static_cast<int>(basis.knots.size()) - 3;

  const int n_years = year_end - year_start + 1;
  basis.evaluations.resize(n_years, basis.n_basis);
  for (int t = 0; t < n_years; ++t) basis.evaluations.row(t) = basis.evaluate(year_start + t).transpose();

  basis.difference = Eigen::MatrixXd::Zero(basis.n_basis - 1, basis.n_basis);
  for (int h = 0; h + 1 < basis.n_basis; ++h) {
    basis.difference(h, h) = -1.0;
    basis.difference(h, h + 1) = 1.0;
  }
  return basis;
}

Eigen::VectorXd SplineBasis::evaluate(double year) const {
  Eigen::VectorXd row(n_basis);
  for (int h = 0; h < n_basis; ++h) row(h) = cox_de_boor(knots, h, 2, year);
  return row;
}

double smoother_value(std::span<const double> alpha, const SplineBasis& basis, int year) {
  if (static_cast<int>(alpha.size()) != basis.n_basis) {
    throw std::invalid_argument("smoother_value: expected " + std::to_string(basis.n_basis) +
                                " coefficients, got " + std::to_string(alpha.size()));
  }
  if (year < basis.year_start || year > basis.year_end) throw std::out_of_range("year outside spline window");
  const auto row = basis.evaluations.row(year - basis.year_start);
  double v = 0.0;
  for (int h = 0; h < basis.n_basis; ++h) v += row(h) * alpha[h];
  return v;
}

}  // namespace sbr
