#pragma once

#include "krlx/fieldsolve.hpp"
#include "krlx/transport.hpp"

#include <Eigen/SparseCore>

#include <complex>
#include <vector>

namespace krlx {

struct PropagatorConfig {
  SpatialField potential;
  double dt = 0.01;
  Limiter limiter = Limiter::minmod;
  std::vector<double> t_grid;
};

struct TrajectoryPoint {
  double t;
  DistributionField f;
};

/// Snapshots of e^{-tK} f0 at cfg.t_grid.
std::vector<TrajectoryPoint> kfp_propagate(const DistributionField& f0, const PropagatorConfig& cfg);

/// Standard rough probes: 1_{|v|<1/2} e^{-|x|^2/2} and the x/v swap, unit mass.
DistributionField rough_probe_v(const PhaseGrid& g);
DistributionField rough_probe_x(const PhaseGrid& g);
/// M(x,v) cos(xi x_1) and M(x,v) cos(eta v_1): plane waves in u = f/M.
DistributionField wave_probe_x(const KfpPropagator& prop, double xi);
DistributionField wave_probe_v(const KfpPropagator& prop, double eta);

struct ShortTimeOptions {
  double tv0 = 1e-3, tv1 = 1e-1;
  double tx0 = 1e-3, tx1 = 1e-1;
  int npoints = 8;
};

struct SlopeReport {
  std::vector<double> tv, nv, tx, nx;
  LineFit fit_v, fit_x;
  double target_v = 0, target_x = 0;
  double prefactor_v = 0, prefactor_x = 0;  // sup_t n(t) min(1, t^{-target})
};

/// n_v(t) = sup_probes ||Lambda_v^beta e^{-tK} f||_B / ||f||_B and n_x analogously with
/// Lambda_x^alpha; log-log slopes on log-spaced windows against -beta/2 and -3 alpha/2.
SlopeReport verify_short_time_exponents(const KfpPropagator& prop, double alpha, double beta,
                                        const std::vector<DistributionField>& probes,
                                        const ShortTimeOptions& opt = {});

struct DecayFit {
  std::vector<double> t, norm, mass;
  LineFit fit;          // of ln norm on the fit window
  double rate = 0;      // -slope
  double lambda_star = 0;  // least-damped nonzero eigenvalue of the generator (0 when unavailable)
  double ratio_kappa0 = 0;
  double max_mass = 0;
  bool degenerate = false;
};

/// Decay of ||e^{-tK} f0||_B on B-perp, fitted on [t_fit0, T].
DecayFit verify_perp_decay(const KfpPropagator& prop, const DistributionField& f0_perp, double T,
                           double kappa0 = 0, double sample_dt = 0.1, double t_fit0 = 1.0,
                           bool with_oracle = true);

struct EigenOracle {
  std::vector<std::complex<double>> eigenvalues;  // converged Ritz values near the origin
  double lambda_star = 0;                          // smallest -Re over the nonzero ones
};

/// Shift-invert Arnoldi on the assembled semi-discrete generator of the unlimited scheme.
EigenOracle least_damped_modes(const KfpPropagator& prop, int nev = 40);

/// Assembled generator (sparse, column by column).
Eigen::SparseMatrix<double> assemble_generator(const KfpPropagator& prop);

struct ConjugationReport {
  double ratio_sup = 0;  // sup ||Lambda^gamma e^{-tK} f|| / ||Lambda^gamma f||
  std::vector<double> t, cont;  // sup over probes of ||(e^{-tK} - 1) f||_B / ||f||_B
  LineFit fit;
  double target = 0;
  bool skipped = false;
};

ConjugationReport verify_conjugation_and_continuity(const KfpPropagator& prop, double gamma, double a,
                                                    const std::vector<DistributionField>& probes,
                                                    double t0 = 1e-3, double t1 = 1e-1, int npoints = 8);

}  // namespace krlx
