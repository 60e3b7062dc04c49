#pragma once

#include "krlx/equilibrium.hpp"
#include "krlx/grid.hpp"
#include "krlx/potential.hpp"

#include <Eigen/SparseCore>

#include <vector>

namespace krlx {

/// Potential on the spatial grid with the derivatives the Witten operator needs.
struct WittenPotential {
  SpatialField V;     // values
  SpatialField grad;  // d components
  SpatialField lap;   // Laplacian
  SpatialField hess;  // d*d components, row-major
  bool analytic = false;

  static WittenPotential from_spec(const PotentialSpec& Ve, const PhaseGrid& grid);
  /// Finite-difference derivatives of sampled values (fourth order inside, lower order near the faces).
  static WittenPotential from_samples(const SpatialField& V);
  /// V_inf = Ve + eps0 U_inf with grad U_inf = E_inf and Delta U_inf = -rho_inf.
  static WittenPotential from_equilibrium(const PotentialSpec& Ve, const EquilibriumState& eq);

  const PhaseGrid& grid() const { return V.grid; }
  /// |grad V|^2 / 4 - Delta V / 2.
  Vec witten_potential() const;
};

using SparseMat = Eigen::SparseMatrix<double>;

/// W = -Delta + |grad V|^2/4 - Delta V/2 with the fourth-order five-point Laplacian
/// (zero outside the box). Symmetric in the flat l2 inner product.
SparseMat witten_matrix(const WittenPotential& V);
SpatialField witten_apply(const SpatialField& u, const WittenPotential& V);
SpatialField witten_apply(const SpatialField& u, const PotentialSpec& V);

struct SpectralGapReport {
  std::vector<double> eigenvalues;
  double gap = 0;
  double kappa0 = 0;
  double Ce = 0;
  double C0 = 0;
  double kappa = 0;
  double ground_state_error = 0;
  double boundary_value = 0;  // max of e^{-V/2} on the box faces relative to its max
  bool ambiguous = false;     // gap below ten eigensolver tolerances
  bool dense = true;
};

/// Lowest k eigenvalues (dense below 4000 unknowns, shift-invert Lanczos above) and the
/// derived rates kappa0 = min(gap, d/2), C0 = 64(8 + 3 Ce)/min(1, kappa0), kappa = kappa0/C0.
SpectralGapReport spectral_gap(const WittenPotential& V, int k = 4);
SpectralGapReport spectral_gap(const PotentialSpec& V, const PhaseGrid& grid, int k = 4);

/// Lowest k eigenvalues of a symmetric sparse matrix.
std::vector<double> lowest_eigenvalues(const SparseMat& A, int k, bool* dense_used = nullptr);

struct PerturbedGapReport {
  double gap_inf = 0;
  double threshold = 0;  // kappa0 / 4
  bool passes = false;
  double smallness = 0;  // sup eps0^2 |grad U|^2/4 + |eps0| |Delta U|/2
  double margin = 0;     // kappa0/8 - smallness
  SpectralGapReport report;
};

PerturbedGapReport perturbed_gap_check(const PotentialSpec& Ve, const EquilibriumState& eq,
                                       const SpectralGapReport& base);

}  // namespace krlx
