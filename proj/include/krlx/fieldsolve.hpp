#pragma once

#include "krlx/grid.hpp"
#include "krlx/operators.hpp"

#include <functional>
#include <string>
#include <vector>

namespace krlx {

/// rho(x) = int f dv by the midpoint rule.
SpatialField density(const DistributionField& f);

/// |S^{d-1}|: 2, 2 pi, 4 pi.
double sphere_area(int d);

/// Free-space Green function of -Delta: -|x|/2, -(1/2pi) ln|x|, 1/(4 pi |x|).
double green(int d, double r);

/// U = G_d * rho by zero-padded FFT convolution on the doubled box.
/// The singular cell carries the lattice-corrected weight (zeta-function correction of the
/// punctured midpoint rule), which makes the quadrature fourth-order accurate for smooth rho.
SpatialField potential_from_density(const SpatialField& rho);

/// E = grad(G_d * rho) = -(1/|S^{d-1}|) x/|x|^d * rho, fourth-order differences of the
/// convolution potential (ghost layers come from the doubled box).
SpatialField field_from_density(const SpatialField& rho);

/// Potential and field from a single convolution.
void potential_and_field(const SpatialField& rho, SpatialField& U, SpatialField& E);

/// Fourth-order five-point Laplacian per axis; cells within two layers of the box face are
/// left at zero (no data outside the box).
SpatialField laplacian4(const SpatialField& U);
/// Interior mask used by laplacian4.
bool interior4(const PhaseGrid& g, Index i);

/// Replaces U in the interior by the exact solution of -laplacian4(U) = rho with the two
/// outer layers of U as Dirichlet data. Warm-started conjugate gradients.
SpatialField poisson_polish(const SpatialField& U, const SpatialField& rho, double tol);

/// sup over interior cells of |-laplacian4(U) - rho|.
double poisson_residual(const SpatialField& U, const SpatialField& rho);

/// Divergence of a d-vector field by fourth-order differences, zero in the outer two layers.
SpatialField divergence4(const SpatialField& E);

/// H^alpha norm from the spectral calculus of 1 - Delta (Dirichlet, zero extension).
double hs_norm(const SpatialField& rho, double alpha);

struct FieldBoundReport {
  std::vector<double> ratios;  // per usable sample
  std::vector<int> skipped;    // zero-norm samples
  double max_ratio = 0, min_ratio = 0;
  double refined_max_ratio = 0;  // 0 when no refinement was supplied
  double exponent = 0;           // regularity index s in ||h||_{B^s}
};

/// r = ||E_0||_inf / ||h_0||_{B^s} with s = 1/2 + eps (d = 3) or eps (d <= 2).
FieldBoundReport check_field_bounds(const std::vector<DistributionField>& samples, double eps,
                                    const WeightedOperatorSet& ops,
                                    const std::vector<DistributionField>* refined = nullptr,
                                    const WeightedOperatorSet* refined_ops = nullptr);

struct ExponentReport {
  std::vector<double> times;
  std::vector<double> values;
  double slope = 0;
  double intercept = 0;
  double target = 0;
  int usable = 0;
};

/// Produces e^{-tK0} f0 at each requested (increasing) time.
using TrajectoryFn = std::function<std::vector<DistributionField>(const DistributionField&, const std::vector<double>&)>;

/// Fits the log-log slope of ||S_0(t)||_inf, S_0 = (x/|x|^3) * int (e^{-tK0} - 1) f0 dv,
/// on log-spaced t in [1e-3, 1]; the target is a/3 - eps.
ExponentReport short_time_field_check(const DistributionField& f0, double a, double eps,
                                      const TrajectoryFn& propagate, int npoints = 10);

/// Least-squares line through (x, y); returns slope, intercept and RMS residual.
struct LineFit {
  double slope = 0, intercept = 0, rms = 0;
  int n = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> logspace(double a, double b, int n);

}  // namespace krlx
