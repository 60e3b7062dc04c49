#pragma once

#include "krlx/grid.hpp"
#include "krlx/operators.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace krlx {

/// Step size violates max|v| dt / hx <= 0.9.
struct CflError : DomainError {
  using DomainError::DomainError;
};

/// Non-finite values appeared during time stepping.
struct BlowupError : std::runtime_error {
  double time;
  BlowupError(const std::string& what, double t) : std::runtime_error(what), time(t) {}
};

enum class Limiter { minmod, none };

/// Strang splitting for the Kramers-Fokker-Planck operator with potential V:
/// half transport, exact Chang-Cooper Ornstein-Uhlenbeck step, half transport.
///
/// Transport works on u = f / M with M the discrete Maxwellian of V: fluxes are M-weighted
/// MUSCL reconstructions of u (spatial faces carry the geometric mean of M, velocity faces the
/// cumulative Gaussian flux), integrated by SSP-RK2 with substeps that keep every stage
/// nonnegative. Constant u is an exact steady state, fluxes telescope, and the velocity step
/// is the exponential of a Metzler matrix, so the scheme is conservative, positive and leaves
/// the discrete Maxwellian stationary.
class KfpPropagator {
 public:
  KfpPropagator(const PhaseGrid& g, const SpatialField& V, double dt, Limiter lim = Limiter::minmod);

  const PhaseGrid& grid() const { return g_; }
  double dt() const { return dt_; }
  Limiter limiter() const { return lim_; }
  /// Normalized discrete Maxwellian e^{-(v^2/2 + V)}/Z.
  const DistributionField& maxwellian() const { return M_; }
  /// Lazily built operator set weighted by maxwellian().
  const WeightedOperatorSet& ops() const;
  /// Force -grad V in the well-balanced discrete form, one spatial array per axis.
  const std::vector<Vec>& reference_force() const { return Fref_; }
  /// max|v| dt / hx.
  double cfl() const;

  /// One Strang step of length tau with the given force (frozen over the step).
  void step(Vec& f, double tau, const std::vector<Vec>& force) const;
  void step(Vec& f, double tau) const { step(f, tau, Fref_); }

  /// e^{-TK} f0 with steps of at most dt.
  DistributionField propagate(const DistributionField& f0, double T) const;
  /// Snapshots at increasing times (t = 0 allowed).
  std::vector<DistributionField> trajectory(const DistributionField& f0, const std::vector<double>& times) const;

  /// Individual substeps.
  void transport(Vec& f, double tau, const std::vector<Vec>& force) const;
  void ou(Vec& f, double tau) const;

  /// Semi-discrete generator of the unlimited scheme, f -> -div(flux) + OU f.
  Vec generator(const Vec& f) const;
  /// Positivity rate bound of one forward-Euler transport stage for the given force.
  double positivity_rate(const std::vector<Vec>& force) const;
  /// The 1D Chang-Cooper generator along a velocity axis.
  const Mat& ou_generator() const { return A_; }
  /// exp(tau A) by uniformization and squaring (entrywise nonnegative).
  Mat ou_matrix(double tau) const;

 private:
  void rhs(const Vec& f, const std::vector<Vec>& force, Limiter lim, Vec& out) const;
  std::shared_ptr<const Mat> cached_ou(double tau) const;

  PhaseGrid g_;
  double dt_;
  Limiter lim_;
  DistributionField M_;
  Vec Mx_;                   // spatial factor of M (cells)
  Vec Mv_;                   // velocity block factor (unnormalized Gaussian)
  std::vector<Vec> Mxf_;     // per axis, face to the right of each cell (0 on the box face)
  std::vector<Vec> Wv_;      // per velocity axis, weight of the face above each velocity cell
  std::vector<Vec> vk_;      // per axis, v_k over the velocity block
  std::vector<Vec> Fref_;
  Vec xrate_;                // spatial part of the positivity rate per cell
  std::vector<std::vector<int>> xpos_, vpos_;  // axis index of each spatial / velocity cell
  double rplus_ = 0, rminus_ = 0;
  Mat A_;

  mutable std::mutex mu_;
  mutable std::map<double, std::shared_ptr<const Mat>> ou_cache_;
  mutable std::once_flag ops_once_;
  mutable std::unique_ptr<WeightedOperatorSet> ops_;
};

/// Velocity reflection v -> -v.
DistributionField reflect_v(const DistributionField& f);

}  // namespace krlx
