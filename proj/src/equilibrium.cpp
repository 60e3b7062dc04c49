#include "krlx/equilibrium.hpp"

#include "krlx/fieldsolve.hpp"

#include <cmath>
#include <sstream>

namespace krlx {

namespace {

double sup_diff(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

bool same_space(const PhaseGrid& a, const PhaseGrid& b) {
  return a.d == b.d && a.nx == b.nx && a.Lx == b.Lx;
}

}  // namespace

SpatialField boltzmann_density(const Vec& Ve, double eps0, const SpatialField& U) {
  const PhaseGrid& g = U.grid;
  Vec w = Ve + eps0 * U.values();
  double wmin = w.minCoeff();
  SpatialField rho(g, 1);
  rho.values() = (-(w.array() - wmin)).exp().matrix();
  double mass = rho.values().sum() * g.cellx();
  if (!(mass > 0) || !std::isfinite(mass)) throw DomainError("Boltzmann density: normalization is not finite");
  rho.values() /= mass;
  return rho;
}

EquilibriumState solve_poisson_emden(const PotentialSpec& Ve, double eps0, const PhaseGrid& grid,
                                     const PoissonEmdenOptions& opt) {
  grid.validate();
  if (Ve.d != grid.d) throw ShapeError("solve_poisson_emden: potential and grid dimensions differ");
  if (!(std::abs(eps0) <= 1.0)) throw DomainError("solve_poisson_emden: |eps0| must not exceed 1");
  if (grid.d == 2 && eps0 < 0)
    throw DomainError("solve_poisson_emden: the attractive case eps0 < 0 is not supported in d = 2");
  if (!(opt.tol > 0)) throw DomainError("solve_poisson_emden: tol must be positive");
  if (!(opt.theta > 0 && opt.theta <= 1)) throw DomainError("solve_poisson_emden: theta must lie in (0, 1]");

  const Vec ve = sample_potential(Ve, grid).values();
  EquilibriumState st;
  st.eps0 = eps0;

  SpatialField zero(grid, 1);
  SpatialField U = potential_from_density(boltzmann_density(ve, 0.0, zero));

  // Convolution phase.
  bool converged = false;
  int it = 0;
  while (it < opt.max_iters) {
    ++it;
    SpatialField T = potential_from_density(boltzmann_density(ve, eps0, U));
    double upd = sup_diff(T.values(), U.values());
    st.history.push_back(upd);
    if (!std::isfinite(upd)) break;
    if (upd < opt.tol) {
      U = std::move(T);
      converged = true;
      break;
    }
    U.values() = (1 - opt.theta) * U.values() + opt.theta * T.values();
  }
  if (!converged) {
    std::ostringstream os;
    os << "Poisson-Emden iteration did not converge in " << opt.max_iters << " iterations (eps0 = " << eps0
       << ", last update " << (st.history.empty() ? 0.0 : st.history.back()) << ")";
    throw PoissonEmdenFailure(os.str(), st.history, U);
  }

  // Polish phase: the map U -> discrete solve of -L4 T = rho(U) with boundary layers from the convolution.
  if (opt.polish) {
    converged = false;
    for (int k = 0; k < opt.max_iters; ++k) {
      SpatialField rho = boltzmann_density(ve, eps0, U);
      SpatialField T = poisson_polish(potential_from_density(rho), rho, 0.1 * opt.tol);
      double upd = sup_diff(T.values(), U.values());
      st.polish_history.push_back(upd);
      ++it;
      bool done = upd < opt.tol;
      if (done || eps0 == 0.0) {
        U = std::move(T);
        converged = true;
        break;
      }
      U.values() = (1 - opt.theta) * U.values() + opt.theta * T.values();
    }
    if (!converged) throw PoissonEmdenFailure("Poisson-Emden polish phase did not converge", st.polish_history, U);
  }

  st.iters = it;
  SpatialField rho = boltzmann_density(ve, eps0, U);
  st.residual = poisson_residual(U, rho);
  st.U_inf = U;
  st.V_inf = SpatialField(grid, 1);
  st.V_inf.values() = ve + eps0 * U.values();
  if (opt.phase_space) {
    auto [M, Z] = maxwellian(st.V_inf, grid);
    st.M_inf = std::move(M);
    st.Z = Z;
    st.E_inf = field_from_density(density(st.M_inf));
  } else {
    const Vec& vi = st.V_inf.values();
    double zv = 0;
    for (int j = 0; j < grid.nv; ++j) zv += std::exp(-0.5 * grid.v(j) * grid.v(j)) * grid.hv();
    st.Z = (-vi.array()).exp().sum() * grid.cellx() * std::pow(zv, grid.d);
    st.E_inf = field_from_density(rho);
  }
  return st;
}

std::pair<DistributionField, double> maxwellian(const SpatialField& V, const PhaseGrid& grid) {
  if (!same_space(V.grid, grid)) throw ShapeError("maxwellian: potential grid differs from phase grid");
  if (V.ncomp() != 1) throw ShapeError("maxwellian: potential must be scalar");
  const Vec& vals = V.values();
  if (!vals.allFinite()) throw DomainError("maxwellian: potential is not finite");
  double vmin = vals.minCoeff();
  Vec mx = (-(vals.array() - vmin)).exp().matrix();
  Vec mv1(grid.nv);
  for (int j = 0; j < grid.nv; ++j) mv1[j] = std::exp(-0.5 * grid.v(j) * grid.v(j));
  Vec vblock(grid.nvd());
  int idx[3];
  for (Index j = 0; j < grid.nvd(); ++j) {
    grid.vindex(j, idx);
    double p = 1.0;
    for (int k = 0; k < grid.d; ++k) p *= mv1[idx[k]];
    vblock[j] = p;
  }
  double zx = mx.sum() * grid.cellx();
  double zv = vblock.sum() * grid.cellv();
  double zs = zx * zv;
  double Z = zs * std::exp(-vmin);
  if (!(zs > 0) || !std::isfinite(zs) || !(Z > 0) || !std::isfinite(Z))
    throw DomainError("maxwellian: normalization is zero or overflows");
  mx /= zx;
  vblock /= zv;
  DistributionField M(grid);
  const Index nvd = grid.nvd();
  for (Index i = 0; i < grid.nxd(); ++i) M.values.segment(i * nvd, nvd) = mx[i] * vblock;
  return {std::move(M), Z};
}

InitialPotential initial_potential(const DistributionField& f0) {
  const PhaseGrid& g = f0.grid;
  if (g.d != 3) throw DomainError("initial_potential: only defined for d = 3");
  if (f0.values.size() && f0.values.minCoeff() < -1e-12) throw DomainError("initial_potential: f0 has negative cells");
  InitialPotential out;
  SpatialField rho = density(f0);
  potential_and_field(rho, out.U0, out.E0);
  out.sup_U = out.U0.values().cwiseAbs().maxCoeff();
  out.sup_dU = out.E0.sup_norm();
  // Hessian from central differences of E0; outer layer skipped.
  const double h = g.hx();
  double best = 0;
  int idx[3];
  for (Index i = 0; i < g.nxd(); ++i) {
    g.xindex(i, idx);
    bool inner = true;
    for (int k = 0; k < 3; ++k) inner = inner && idx[k] > 0 && idx[k] < g.nx - 1;
    if (!inner) continue;
    Mat H(3, 3);
    for (int a = 0; a < 3; ++a) {
      Index s = g.xstride(a);
      for (int b = 0; b < 3; ++b) H(b, a) = (out.E0.comp[b][i + s] - out.E0.comp[b][i - s]) / (2 * h);
    }
    best = std::max(best, H.cwiseAbs().maxCoeff());
  }
  out.sup_d2U = best;
  return out;
}

}  // namespace krlx
