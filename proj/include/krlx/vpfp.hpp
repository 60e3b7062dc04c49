#pragma once

#include "krlx/equilibrium.hpp"
#include "krlx/fieldsolve.hpp"
#include "krlx/semigroup.hpp"

#include <functional>
#include <string>
#include <vector>

namespace krlx {

/// Self-consistent stepper for the nonlinear system around an equilibrium:
/// force = F_ref(V_inf) - eps0 (E - E_inf), one Strang step per time step with the field
/// evaluated by a predictor-corrector (midpoint field).
class VpfpStepper {
 public:
  VpfpStepper(const EquilibriumState& eq, const PhaseGrid& grid, double dt, Limiter lim = Limiter::minmod);

  const KfpPropagator& propagator() const { return prop_; }
  const EquilibriumState& equilibrium() const { return eq_; }
  /// Total force for a given field E.
  std::vector<Vec> force(const SpatialField& E) const;
  void step(Vec& f, double tau) const;

 private:
  EquilibriumState eq_;
  KfpPropagator prop_;
};

struct Snapshot {
  double t;
  DistributionField f;
};

struct RunOptions {
  Limiter limiter = Limiter::minmod;
  double snapshot_dt = 0.1;  // snapshots at multiples of this (and at T)
  std::function<void(double, const DistributionField&)> on_snapshot;
};

struct VpfpTrajectory {
  std::vector<Snapshot> snaps;
  double dt = 0;
  double eps0 = 0;
  int steps = 0;
  bool renormalized = false;
};

VpfpTrajectory vpfp_run(const DistributionField& f0, const EquilibriumState& eq, double T, double dt,
                        const RunOptions& opt = {});
/// Solves the equilibrium first (default Poisson-Emden options).
VpfpTrajectory vpfp_run(const DistributionField& f0, const PotentialSpec& Ve, double eps0, double T, double dt,
                        const RunOptions& opt = {});

struct RateFit {
  double rate = 0;
  double intercept = 0;
  double residual = 0;  // RMS of the log-linear fit
  int n = 0;
  bool valid = false;
};

/// Least squares of ln y on [t0, t1] (positive entries only).
RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& y, double t0, double t1);

struct DecayOptions {
  double alpha = 0, beta = 0;
  double t_fit0 = 1.0;
  bool fractional = true;  // compute the B^{alpha,beta} distance
};

struct DecayReport {
  std::vector<double> times, b_dist, bab_dist, field_dist, entropy;
  RateFit rate_b, rate_bab, rate_field, rate_entropy;
  double mass_error = 0;
  double min_value = 0;
  double linf_ratio = 0;
  bool rates_omitted = false;
};

/// Relative entropy int f ln(f/M) with 0 ln 0 = 0.
double relative_entropy(const DistributionField& f, const DistributionField& M);

DecayReport decay_report(const VpfpTrajectory& traj, const EquilibriumState& eq, const DecayOptions& opt = {});

struct ConservationReport {
  double mass_drift = 0;
  double min_value = 0;
  double linf_ratio = 0;
};

ConservationReport conservation_check(const VpfpTrajectory& traj);

enum class PicardMode { long_time, small_time };

struct FixedPointConfig {
  double eps0 = 0.05;
  double a = 0.6;
  double alpha = 0, beta = 0;
  double delta = 0;
  double sigma = 0.5;
  double eps = 0.01;  // gamma_y = a/3 - eps
  int max_picard = 12;
  double kappa = 0;   // rate in the exponential weights (measured linear decay rate)
  double tol = 1e-13;
  PicardMode mode = PicardMode::long_time;
  Limiter limiter = Limiter::none;

  double gamma_y() const { return a / 3 - eps; }
};

/// Checks the index constraints for dimension d; returns warnings, throws DomainError on violation.
std::vector<std::string> validate_fixed_point(const FixedPointConfig& cfg, int d);

struct PicardReport {
  std::vector<double> times;
  std::vector<double> z_norm, x_norm, y_norm;  // of each iterate
  std::vector<double> diff_norm;               // ||(h_{n+1} - h_n, G_{n+1} - G_n)||_Z
  std::vector<double> q;                       // diff_norm[n+1] / diff_norm[n]
  int iterations = 0;
  bool converged = false;
  bool contracting = true;
  std::string note;
  std::vector<DistributionField> linear;  // e^{-tK} g0 at the nodes
  std::vector<DistributionField> h;       // last iterate
  std::vector<SpatialField> G;
  DistributionField reference;            // M_inf (long time) or zero (small time)
  /// f(t_n) reassembled from the last iterate.
  DistributionField solution(std::size_t n) const;
};

/// Picard iteration (h, G) -> (Phi1, Phi2) on nodes t_n = n dt, n <= T/dt, with the Duhamel
/// integral by the recursive trapezoid rule I_{n+1} = P_dt (I_n + dt/2 S_n) + dt/2 S_{n+1}.
PicardReport picard_iterate(const DistributionField& f0, const EquilibriumState& eq, const FixedPointConfig& cfg,
                            double T, double dt);

/// int_0^t (s^{-1+g1} + 1)((t-s)^{-1+g2} + 1) e^{-c(t-s)} ds.
double lemma_integral(double g1, double g2, double c, double t);
/// The integral divided by t^{-1+g1+g2} + 1 (t <= 1) or 1 (t > 1).
double lemma_ratio(double g1, double g2, double c, double t);

}  // namespace krlx
