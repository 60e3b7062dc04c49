#pragma once

#include "krlx/grid.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>

namespace krlx {

enum class Axis { x, v };

/// Quadrature of f g / M. Throws ShapeError on grid mismatch and DomainError on M <= 0.
double b_inner(const DistributionField& f, const DistributionField& g, const DistributionField& M);
double bnorm(const DistributionField& f, const DistributionField& M);

/// f - (int f) M, the B-orthogonal projection onto the zero-mass subspace.
DistributionField project_perp(const DistributionField& f, const DistributionField& M);

/// Bernoulli function z / (e^z - 1), equal to 1 at z = 0.
double bernoulli(double z);

/// Centred conservative difference along velocity axis k (zero flux through the box faces).
DistributionField diff_v(const DistributionField& f, int k);
/// Same along spatial axis k.
DistributionField diff_x(const DistributionField& f, int k);

/// Discrete Lambda_x^2, Lambda_v^2 and Lambda^2 on the space B weighted by a Maxwellian M.
///
/// Each axis carries the Scharfetter-Gummel flux J = -(B(-dpsi) f_b - B(dpsi) f_a)/h with
/// psi = -ln M, which is the forward difference of f/M weighted by a face mean of M.
/// The quadratic form is therefore exactly <f,f>_B + sum of squared fluxes, the operators are
/// B-self-adjoint, bounded below by 1, map M to M and preserve mass.
class WeightedOperatorSet {
 public:
  explicit WeightedOperatorSet(DistributionField M);

  const DistributionField& weight() const { return M_; }
  const PhaseGrid& grid() const { return M_.grid; }
  /// Spatial factor of M (density of M) and the normalized 1D velocity factor.
  const Vec& mx() const { return mx_; }
  const Vec& mv1() const { return mv1_; }
  bool x_separable() const { return xsep_; }

  DistributionField apply_lambda_sq(const DistributionField& f, Axis axis) const;
  /// Lambda^2 = Lambda_x^2 + Lambda_v^2 - 1.
  DistributionField apply_lambda_sq_full(const DistributionField& f) const;

  /// Lambda_axis^gamma f by spectral calculus; gamma in [-2, 2].
  DistributionField apply_lambda_pow(const DistributionField& f, Axis axis, double gamma) const;
  DistributionField apply_lambda_pow_full(const DistributionField& f, double gamma) const;
  /// ||Lambda_axis^gamma f||_B without transforming back.
  double lambda_pow_norm(const DistributionField& f, Axis axis, double gamma) const;
  double lambda_pow_norm_full(const DistributionField& f, double gamma) const;

  /// Lowest and highest eigenvalue of the discrete operator along an axis group.
  std::pair<double, double> spectrum_bounds(Axis axis) const;

  /// Symmetrized (M^{-1/2} . M^{1/2}) 1D matrix of Lambda^2 along a velocity axis.
  Mat velocity_matrix_sym() const;
  /// Same for the spatial operator: per-axis when separable (axis k), else the full group.
  Mat spatial_matrix_sym(int k) const;

  /// Largest grid on which fractional powers are offered.
  static constexpr Index kLanczosLimit = 100000;
  static constexpr Index kSeparableLimit = Index(1) << 25;
  static constexpr Index kDenseGroupLimit = 2048;
  static constexpr int kKrylov = 200;

 private:
  struct Spectra {
    std::vector<Mat> Qx;  // one per x-axis when separable, one for the whole group otherwise
    std::vector<Vec> lamx;
    Mat Qv;
    Vec lamv;
    Vec jointx;  // joint eigenvalue per spatial spectral index
    Vec jointv;
    bool lanczos_x = false;
  };

  void apply_axis_flux(const DistributionField& f, Axis axis, int k, Vec& out) const;
  const Spectra& spectra() const;
  void check_capability() const;
  Vec to_sym(const DistributionField& f) const;
  DistributionField from_sym(const Vec& g) const;
  void transform(Vec& g, Axis axis, bool forward) const;
  Vec lanczos_x_pow(const Vec& g, double gamma) const;
  Vec lanczos_full_pow(const Vec& g, double gamma) const;

  DistributionField M_;
  Vec sqrtM_;
  Vec mx_;
  Vec mv1_;
  bool xsep_ = false;
  // Face coefficients B(dpsi) and B(-dpsi); velocity faces j | j+1 shared by all lines,
  // spatial faces indexed by the left cell, one array per axis.
  Vec cvp_, cvm_;
  std::vector<Vec> cxp_, cxm_;
  mutable std::once_flag spectra_once_;
  mutable std::unique_ptr<Spectra> spectra_;
};

/// ||Lambda_x^alpha f||_B + ||Lambda_v^beta f||_B.
double frac_norm(const DistributionField& f, double alpha, double beta, const WeightedOperatorSet& ops);

using LinearMap = std::function<DistributionField(const DistributionField&)>;

/// Lower estimate of the B -> B norm of a linear map by power iteration on A* A.
/// Without an explicit adjoint the B-adjoint is assembled densely (at most 4096 unknowns).
/// The returned value is the running maximum of ||A f|| / ||f||, so it never exceeds the true
/// norm and is nondecreasing in iters. Returns +inf when iterates overflow.
double opnorm_estimate(const LinearMap& apply, const DistributionField& M, int iters,
                       const LinearMap& adjoint = nullptr, std::uint64_t seed = 1,
                       const DistributionField* start = nullptr);

/// Dense B-adjoint matrix helper: returns the matrix of a map in the B-orthonormal coordinates.
Mat dense_sym_matrix(const LinearMap& apply, const DistributionField& M);

/// f(A) b for symmetric A via Lanczos with full reorthogonalization.
Vec lanczos_function(const std::function<Vec(const Vec&)>& A, const Vec& b,
                     const std::function<double(double)>& fn, int m);

}  // namespace krlx
