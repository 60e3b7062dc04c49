#pragma once

#include "krlx/grid.hpp"

#include <functional>
#include <string>

namespace krlx {

/// External confining potential V_e with analytic derivatives.
struct PotentialSpec {
  using Point = Eigen::VectorXd;
  int d = 1;
  std::string label;
  std::function<double(const Point&)> value;
  std::function<Point(const Point&)> gradient;
  std::function<Mat(const Point&)> hessian;  // may be empty

  /// V = sum_k omega_k^2 x_k^2 / 2 (one omega broadcasts to all axes).
  static PotentialSpec quadratic(int d, std::vector<double> omega);
  /// V = a |x|^4 / 4 + b |x|^2 / 2 with a > 0, b >= 0.
  static PotentialSpec quartic(int d, double a, double b);
  /// V = s (|x|^2 - r0^2)^2 / 4 with s > 0.
  static PotentialSpec double_well(int d, double s, double r0);

  double laplacian(const Point& x) const;
};

/// Samples V_e at the spatial cell centres.
SpatialField sample_potential(const PotentialSpec& V, const PhaseGrid& g);
/// Samples the gradient, d components.
SpatialField sample_gradient(const PotentialSpec& V, const PhaseGrid& g);
/// Cell-centre coordinates of spatial cell i.
Eigen::VectorXd cell_center(const PhaseGrid& g, Index i);

}  // namespace krlx
