#pragma once

#include "krlx/grid.hpp"
#include "krlx/potential.hpp"

#include <string>
#include <utility>
#include <vector>

namespace krlx {

/// Self-consistent equilibrium: -Delta U = e^{-(Ve + eps0 U)} / int e^{-(Ve + eps0 U)}.
struct EquilibriumState {
  double eps0 = 0;
  SpatialField U_inf;   // Coulomb/Newton potential of the equilibrium density
  SpatialField V_inf;   // Ve + eps0 U_inf
  SpatialField E_inf;   // grad U_inf, from the field solver applied to the equilibrium density
  DistributionField M_inf;
  double Z = 0;          // int e^{-(v^2/2 + V_inf)} over the box
  double residual = 0;   // sup interior |-laplacian4(U) - rho|
  int iters = 0;
  std::vector<double> history;  // sup-norm fixed-point residual per iteration
  std::vector<double> polish_history;
};

/// Convergence failure that keeps the last iterate.
struct PoissonEmdenFailure : ConvergenceError {
  SpatialField last;
  PoissonEmdenFailure(const std::string& what, std::vector<double> h, SpatialField u)
      : ConvergenceError(what, std::move(h)), last(std::move(u)) {}
};

struct PoissonEmdenOptions {
  double tol = 1e-10;
  int max_iters = 200;
  double theta = 0.8;
  /// Finish with exact solves of the discrete Laplacian so the residual certificate holds.
  bool polish = true;
  /// Build M_inf on the phase grid; without it only the spatial fields and Z are filled.
  bool phase_space = true;
};

/// Damped fixed point U <- (1-theta) U + theta G * rho(U), started from the eps0 = 0 potential.
EquilibriumState solve_poisson_emden(const PotentialSpec& Ve, double eps0, const PhaseGrid& grid,
                                     const PoissonEmdenOptions& opt = {});

/// e^{-(Ve + eps0 U)} normalized to unit mass on the spatial grid.
SpatialField boltzmann_density(const Vec& Ve, double eps0, const SpatialField& U);

/// M(x,v) = e^{-(v^2/2 + V(x))} / Z; constants in V cancel.
std::pair<DistributionField, double> maxwellian(const SpatialField& V, const PhaseGrid& grid);

struct InitialPotential {
  SpatialField U0, E0;  // -Delta U0 = rho0, E0 = grad U0
  double sup_U = 0, sup_dU = 0, sup_d2U = 0;
  std::string convention = "-Delta U0 = rho0, E0 = grad U0";
};

/// Newton potential of rho0 = int f0 dv (d = 3).
InitialPotential initial_potential(const DistributionField& f0);

}  // namespace krlx
