#include "krlx/witten.hpp"

#include "krlx/fieldsolve.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <random>

namespace krlx {

namespace {

constexpr Index kDenseLimit = 4000;
constexpr double kEigTol = 1e-8;

Vec derivative(const Vec& u, const PhaseGrid& g, int k) {
  const int n = g.nx;
  const double h = g.hx();
  const Index s = g.xstride(k);
  Vec out(u.size());
  int idx[3];
  for (Index c = 0; c < g.nxd(); ++c) {
    g.xindex(c, idx);
    int i = idx[k];
    double val;
    if (i >= 2 && i <= n - 3) {
      val = (u[c - 2 * s] - 8 * u[c - s] + 8 * u[c + s] - u[c + 2 * s]) / (12 * h);
    } else if (i >= 1 && i <= n - 2) {
      val = (u[c + s] - u[c - s]) / (2 * h);
    } else if (i == 0) {
      val = (-3 * u[c] + 4 * u[c + s] - u[c + 2 * s]) / (2 * h);
    } else {
      val = (3 * u[c] - 4 * u[c - s] + u[c - 2 * s]) / (2 * h);
    }
    out[c] = val;
  }
  return out;
}

SpatialField hessian_of_gradient(const SpatialField& grad) {
  const PhaseGrid& g = grad.grid;
  const int d = g.d;
  SpatialField H(g, d * d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) H.comp[a * d + b] = derivative(grad.comp[a], g, b);
  // Symmetrize.
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) {
      Vec m = 0.5 * (H.comp[a * d + b] + H.comp[b * d + a]);
      H.comp[a * d + b] = m;
      H.comp[b * d + a] = m;
    }
  return H;
}

double curvature_constant(const WittenPotential& V) {
  const PhaseGrid& g = V.grid();
  const int d = g.d;
  Vec q = V.witten_potential();
  double best = -INFINITY;
  Mat H(d, d);
  for (Index c = 0; c < g.nxd(); ++c) {
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) H(a, b) = V.hess.comp[a * d + b][c];
    Mat A = H * H;
    A.diagonal().array() -= q[c];
    double top = Eigen::SelfAdjointEigenSolver<Mat>(A, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    best = std::max(best, top);
  }
  return std::max(best, 0.0);
}

}  // namespace

Vec WittenPotential::witten_potential() const {
  Vec g2 = Vec::Zero(V.grid.nxd());
  for (const Vec& c : grad.comp) g2 += c.cwiseAbs2();
  return 0.25 * g2 - 0.5 * lap.values();
}

WittenPotential WittenPotential::from_spec(const PotentialSpec& Ve, const PhaseGrid& grid) {
  if (Ve.d != grid.d) throw ShapeError("WittenPotential: dimension mismatch");
  const int d = grid.d;
  WittenPotential w;
  w.analytic = true;
  w.V = sample_potential(Ve, grid);
  w.grad = sample_gradient(Ve, grid);
  w.lap = SpatialField(grid, 1);
  if (Ve.hessian) {
    w.hess = SpatialField(grid, d * d);
    for (Index c = 0; c < grid.nxd(); ++c) {
      Mat H = Ve.hessian(cell_center(grid, c));
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) w.hess.comp[a * d + b][c] = H(a, b);
      w.lap.values()[c] = H.trace();
    }
  } else {
    for (Index c = 0; c < grid.nxd(); ++c) w.lap.values()[c] = Ve.laplacian(cell_center(grid, c));
    w.hess = hessian_of_gradient(w.grad);
  }
  return w;
}

WittenPotential WittenPotential::from_samples(const SpatialField& V) {
  const PhaseGrid& g = V.grid;
  WittenPotential w;
  w.V = V;
  w.grad = SpatialField(g, g.d);
  for (int k = 0; k < g.d; ++k) w.grad.comp[k] = derivative(V.values(), g, k);
  w.hess = hessian_of_gradient(w.grad);
  w.lap = SpatialField(g, 1);
  for (int k = 0; k < g.d; ++k) w.lap.values() += w.hess.comp[k * g.d + k];
  return w;
}

WittenPotential WittenPotential::from_equilibrium(const PotentialSpec& Ve, const EquilibriumState& eq) {
  const PhaseGrid& g = eq.U_inf.grid;
  WittenPotential w = from_spec(Ve, g);
  const double e = eq.eps0;
  w.analytic = false;
  w.V.values() += e * eq.U_inf.values();
  for (int k = 0; k < g.d; ++k) w.grad.comp[k] += e * eq.E_inf.comp[k];
  w.lap.values() -= e * density(eq.M_inf).values();
  SpatialField hu = hessian_of_gradient(eq.E_inf);
  for (int c = 0; c < g.d * g.d; ++c) w.hess.comp[c] += e * hu.comp[c];
  return w;
}

SparseMat witten_matrix(const WittenPotential& V) {
  const PhaseGrid& g = V.grid();
  const Index N = g.nxd();
  const int n = g.nx;
  const double h2 = g.hx() * g.hx();
  const Vec q = V.witten_potential();
  static const double w[5] = {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(N * (4 * g.d + 1));
  int idx[3];
  for (Index c = 0; c < N; ++c) {
    g.xindex(c, idx);
    double diag = q[c];
    for (int k = 0; k < g.d; ++k) {
      diag -= w[2] / h2;
      Index s = g.xstride(k);
      for (int o = -2; o <= 2; ++o) {
        if (o == 0) continue;
        int j = idx[k] + o;
        if (j < 0 || j >= n) continue;
        trip.emplace_back(c, c + o * s, -w[o + 2] / h2);
      }
    }
    trip.emplace_back(c, c, diag);
  }
  SparseMat A(N, N);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

SpatialField witten_apply(const SpatialField& u, const WittenPotential& V) {
  require_same_grid(u.grid, V.grid(), "witten_apply");
  if (u.ncomp() != 1) throw ShapeError("witten_apply: scalar field expected");
  SpatialField out(u.grid, 1);
  out.values() = witten_matrix(V) * u.values();
  return out;
}

SpatialField witten_apply(const SpatialField& u, const PotentialSpec& V) {
  return witten_apply(u, WittenPotential::from_spec(V, u.grid));
}

std::vector<double> lowest_eigenvalues(const SparseMat& A, int k, bool* dense_used) {
  const Index N = A.rows();
  if (k < 1 || k > N) throw DomainError("lowest_eigenvalues: bad k");
  if (N < kDenseLimit) {
    if (dense_used) *dense_used = true;
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(A), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", {});
    const Vec& ev = es.eigenvalues();
    return std::vector<double>(ev.data(), ev.data() + k);
  }
  if (dense_used) *dense_used = false;
  // Shift-invert Lanczos: the largest eigenvalues of (A - sigma)^{-1}.
  const double sigma = -0.1;
  SparseMat S = A;
  for (Index c = 0; c < N; ++c) S.coeffRef(c, c) -= sigma;
  Eigen::SimplicialLDLT<SparseMat> ldlt(S);
  if (ldlt.info() != Eigen::Success) throw ConvergenceError("shift-invert factorization failed", {});

  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  Vec q0(N);
  for (Index i = 0; i < N; ++i) q0[i] = nd(rng);
  for (int m = std::max(3 * k + 60, 100); m <= 800; m *= 2) {
    const int mm = static_cast<int>(std::min<Index>(m, N));
    Mat Q(N, mm);
    Vec alpha(mm), beta(mm);
    Q.col(0) = q0.normalized();
    int used = mm;
    for (int j = 0; j < mm; ++j) {
      Vec w = ldlt.solve(Q.col(j));
      alpha[j] = Q.col(j).dot(w);
      for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
      beta[j] = w.norm();
      if (j + 1 < mm) {
        if (beta[j] < 1e-14) {
          used = j + 1;
          break;
        }
        Q.col(j + 1) = w / beta[j];
      }
    }
    Mat T = Mat::Zero(used, used);
    for (int j = 0; j < used; ++j) {
      T(j, j) = alpha[j];
      if (j + 1 < used) T(j, j + 1) = T(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(T);
    // Largest Ritz values, with residual bounds |beta_m s_m|.
    std::vector<double> out;
    bool ok = true;
    for (int r = used - 1; r >= 0 && static_cast<int>(out.size()) < k; --r) {
      double mu = es.eigenvalues()[r];
      double res = std::abs(beta[used - 1] * es.eigenvectors()(used - 1, r));
      double lam = sigma + 1.0 / mu;
      // Residual of the original problem scales like res / mu^2.
      if (res / (mu * mu) > kEigTol) ok = false;
      out.push_back(lam);
    }
    if (ok || used == N) {
      std::sort(out.begin(), out.end());
      return out;
    }
  }
  throw ConvergenceError("shift-invert Lanczos did not converge", {});
}

SpectralGapReport spectral_gap(const WittenPotential& V, int k) {
  if (k < 2) throw DomainError("spectral_gap: k must be at least 2");
  const PhaseGrid& g = V.grid();
  SpectralGapReport rep;
  SparseMat W = witten_matrix(V);
  rep.eigenvalues = lowest_eigenvalues(W, k, &rep.dense);
  if (std::abs(rep.eigenvalues[0]) > 1e-4)
    throw DomainError("spectral_gap: ground-state eigenvalue " + std::to_string(rep.eigenvalues[0]) +
                      " exceeds 1e-4; the grid does not resolve e^{-V/2}");
  rep.gap = rep.eigenvalues[1] - rep.eigenvalues[0];
  rep.kappa0 = std::min(rep.gap, 0.5 * g.d);
  rep.ambiguous = rep.gap < 10 * kEigTol;
  rep.Ce = curvature_constant(V);
  rep.C0 = 64.0 * (8.0 + 3.0 * rep.Ce) / std::min(1.0, rep.kappa0);
  rep.kappa = rep.kappa0 / rep.C0;

  const Vec& vals = V.V.values();
  Vec phi = (-0.5 * (vals.array() - vals.minCoeff())).exp().matrix();
  rep.ground_state_error = (W * phi).norm() / phi.norm();
  double edge = 0;
  int idx[3];
  for (Index c = 0; c < g.nxd(); ++c) {
    g.xindex(c, idx);
    for (int a = 0; a < g.d; ++a)
      if (idx[a] == 0 || idx[a] == g.nx - 1) edge = std::max(edge, phi[c]);
  }
  rep.boundary_value = edge / phi.maxCoeff();
  return rep;
}

SpectralGapReport spectral_gap(const PotentialSpec& V, const PhaseGrid& grid, int k) {
  return spectral_gap(WittenPotential::from_spec(V, grid), k);
}

PerturbedGapReport perturbed_gap_check(const PotentialSpec& Ve, const EquilibriumState& eq,
                                       const SpectralGapReport& base) {
  PerturbedGapReport out;
  WittenPotential w = WittenPotential::from_equilibrium(Ve, eq);
  out.report = spectral_gap(w, static_cast<int>(std::max<std::size_t>(2, base.eigenvalues.size())));
  out.gap_inf = out.report.gap;
  out.threshold = base.kappa0 / 4;
  out.passes = out.gap_inf >= out.threshold;
  const double e = eq.eps0;
  const PhaseGrid& g = eq.U_inf.grid;
  Vec rho = density(eq.M_inf).values();
  Vec g2 = Vec::Zero(g.nxd());
  for (const Vec& c : eq.E_inf.comp) g2 += c.cwiseAbs2();
  out.smallness = (0.25 * e * e * g2 + 0.5 * std::abs(e) * rho).maxCoeff();
  out.margin = base.kappa0 / 8 - out.smallness;
  return out;
}

}  // namespace krlx
