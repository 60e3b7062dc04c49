#include "krlx/potential.hpp"

#include <cmath>

namespace krlx {

PotentialSpec PotentialSpec::quadratic(int d, std::vector<double> omega) {
  if (omega.size() == 1) omega.assign(d, omega[0]);
  if (static_cast<int>(omega.size()) != d) throw DomainError("quadratic potential: need 1 or d frequencies");
  Vec w2(d);
  for (int k = 0; k < d; ++k) {
    if (!(omega[k] > 0)) throw DomainError("quadratic potential: frequencies must be positive");
    w2[k] = omega[k] * omega[k];
  }
  PotentialSpec V;
  V.d = d;
  V.label = "quadratic";
  V.value = [w2](const Point& x) { return 0.5 * (w2.array() * x.array().square()).sum(); };
  V.gradient = [w2](const Point& x) -> Point { return w2.cwiseProduct(x); };
  V.hessian = [w2](const Point&) -> Mat { return w2.asDiagonal(); };
  return V;
}

PotentialSpec PotentialSpec::quartic(int d, double a, double b) {
  if (!(a > 0) || b < 0) throw DomainError("quartic potential: need a > 0 and b >= 0");
  PotentialSpec V;
  V.d = d;
  V.label = "quartic";
  V.value = [a, b](const Point& x) {
    double r2 = x.squaredNorm();
    return 0.25 * a * r2 * r2 + 0.5 * b * r2;
  };
  V.gradient = [a, b](const Point& x) -> Point { return (a * x.squaredNorm() + b) * x; };
  V.hessian = [a, b, d](const Point& x) -> Mat {
    Mat H = (a * x.squaredNorm() + b) * Mat::Identity(d, d);
    H += 2.0 * a * x * x.transpose();
    return H;
  };
  return V;
}

PotentialSpec PotentialSpec::double_well(int d, double s, double r0) {
  if (!(s > 0)) throw DomainError("double-well potential: need s > 0");
  PotentialSpec V;
  V.d = d;
  V.label = "double-well";
  V.value = [s, r0](const Point& x) {
    double q = x.squaredNorm() - r0 * r0;
    return 0.25 * s * q * q;
  };
  V.gradient = [s, r0](const Point& x) -> Point { return s * (x.squaredNorm() - r0 * r0) * x; };
  V.hessian = [s, r0, d](const Point& x) -> Mat {
    Mat H = s * (x.squaredNorm() - r0 * r0) * Mat::Identity(d, d);
    H += 2.0 * s * x * x.transpose();
    return H;
  };
  return V;
}

double PotentialSpec::laplacian(const Point& x) const {
  if (hessian) return hessian(x).trace();
  // Second-order central differences of the gradient.
  const double h = 1e-5;
  double lap = 0.0;
  for (int k = 0; k < d; ++k) {
    Point xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    lap += (gradient(xp)[k] - gradient(xm)[k]) / (2 * h);
  }
  return lap;
}

Eigen::VectorXd cell_center(const PhaseGrid& g, Index i) {
  int idx[3];
  g.xindex(i, idx);
  Eigen::VectorXd x(g.d);
  for (int k = 0; k < g.d; ++k) x[k] = g.x(idx[k]);
  return x;
}

SpatialField sample_potential(const PotentialSpec& V, const PhaseGrid& g) {
  if (V.d != g.d) throw ShapeError("sample_potential: dimension mismatch");
  SpatialField out(g, 1);
  for (Index i = 0; i < g.nxd(); ++i) out.comp[0][i] = V.value(cell_center(g, i));
  return out;
}

SpatialField sample_gradient(const PotentialSpec& V, const PhaseGrid& g) {
  if (V.d != g.d) throw ShapeError("sample_gradient: dimension mismatch");
  SpatialField out(g, g.d);
  for (Index i = 0; i < g.nxd(); ++i) {
    Eigen::VectorXd gr = V.gradient(cell_center(g, i));
    for (int k = 0; k < g.d; ++k) out.comp[k][i] = gr[k];
  }
  return out;
}

}  // namespace krlx
