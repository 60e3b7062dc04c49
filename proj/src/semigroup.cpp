#include "krlx/semigroup.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace krlx {

namespace {

double norm_sq_x(const PhaseGrid& g, Index c) {
  int idx[3];
  g.xindex(c, idx);
  double r = 0;
  for (int k = 0; k < g.d; ++k) r += g.x(idx[k]) * g.x(idx[k]);
  return r;
}

double norm_sq_v(const PhaseGrid& g, Index j) {
  int idx[3];
  g.vindex(j, idx);
  double r = 0;
  for (int k = 0; k < g.d; ++k) r += g.v(idx[k]) * g.v(idx[k]);
  return r;
}

DistributionField unit_mass(DistributionField f, const char* what) {
  double m = f.mass();
  if (!(m > 0)) throw DomainError(std::string(what) + ": grid too coarse for the indicator");
  f.values /= m;
  return f;
}

LineFit loglog(const std::vector<double>& t, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (y[i] > 0 && std::isfinite(y[i])) {
      lx.push_back(std::log(t[i]));
      ly.push_back(std::log(y[i]));
    }
  if (lx.size() < 2) throw DomainError("log-log fit: fewer than two usable points");
  return fit_line(lx, ly);
}

std::vector<double> merged(const std::vector<double>& a, const std::vector<double>& b) {
  std::set<double> s(a.begin(), a.end());
  s.insert(b.begin(), b.end());
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<TrajectoryPoint> kfp_propagate(const DistributionField& f0, const PropagatorConfig& cfg) {
  KfpPropagator prop(f0.grid, cfg.potential, cfg.dt, cfg.limiter);
  auto snaps = prop.trajectory(f0, cfg.t_grid);
  std::vector<TrajectoryPoint> out;
  for (std::size_t i = 0; i < snaps.size(); ++i) out.push_back({cfg.t_grid[i], std::move(snaps[i])});
  return out;
}

DistributionField rough_probe_v(const PhaseGrid& g) {
  DistributionField f(g);
  for (Index c = 0; c < g.nxd(); ++c) {
    double gx = std::exp(-0.5 * norm_sq_x(g, c));
    for (Index j = 0; j < g.nvd(); ++j) f(c, j) = norm_sq_v(g, j) < 0.25 ? gx : 0.0;
  }
  return unit_mass(std::move(f), "rough_probe_v");
}

DistributionField rough_probe_x(const PhaseGrid& g) {
  DistributionField f(g);
  for (Index c = 0; c < g.nxd(); ++c) {
    if (norm_sq_x(g, c) >= 0.25) continue;
    for (Index j = 0; j < g.nvd(); ++j) f(c, j) = std::exp(-0.5 * norm_sq_v(g, j));
  }
  return unit_mass(std::move(f), "rough_probe_x");
}

DistributionField wave_probe_x(const KfpPropagator& prop, double xi) {
  const PhaseGrid& g = prop.grid();
  DistributionField f = prop.maxwellian();
  int idx[3];
  for (Index c = 0; c < g.nxd(); ++c) {
    g.xindex(c, idx);
    f.values.segment(c * g.nvd(), g.nvd()) *= std::cos(xi * g.x(idx[0]));
  }
  return f;
}

DistributionField wave_probe_v(const KfpPropagator& prop, double eta) {
  const PhaseGrid& g = prop.grid();
  DistributionField f = prop.maxwellian();
  int idx[3];
  for (Index j = 0; j < g.nvd(); ++j) {
    g.vindex(j, idx);
    double w = std::cos(eta * g.v(idx[0]));
    for (Index c = 0; c < g.nxd(); ++c) f(c, j) *= w;
  }
  return f;
}

SlopeReport verify_short_time_exponents(const KfpPropagator& prop, double alpha, double beta,
                                        const std::vector<DistributionField>& probes,
                                        const ShortTimeOptions& opt) {
  if (alpha < 0 || alpha > 1 || beta < 0 || beta > 1)
    throw DomainError("verify_short_time_exponents: alpha and beta must lie in [0, 1]");
  if (probes.empty()) throw DomainError("verify_short_time_exponents: no probes");
  if (opt.npoints < 4) throw DomainError("verify_short_time_exponents: need at least 4 points");
  SlopeReport rep;
  rep.tv = logspace(opt.tv0, opt.tv1, opt.npoints);
  rep.tx = logspace(opt.tx0, opt.tx1, opt.npoints);
  rep.nv.assign(opt.npoints, 0.0);
  rep.nx.assign(opt.npoints, 0.0);
  rep.target_v = -beta / 2;
  rep.target_x = -1.5 * alpha;
  const std::vector<double> times = merged(rep.tv, rep.tx);
  const WeightedOperatorSet& ops = prop.ops();
  const DistributionField& M = prop.maxwellian();
  for (const DistributionField& f : probes) {
    double n0 = bnorm(f, M);
    if (!(n0 > 0)) throw DomainError("verify_short_time_exponents: probe with zero norm");
    auto traj = prop.trajectory(f, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      for (int p = 0; p < opt.npoints; ++p) {
        if (rep.tv[p] == times[i])
          rep.nv[p] = std::max(rep.nv[p], ops.lambda_pow_norm(traj[i], Axis::v, beta) / n0);
        if (rep.tx[p] == times[i])
          rep.nx[p] = std::max(rep.nx[p], ops.lambda_pow_norm(traj[i], Axis::x, alpha) / n0);
      }
    }
  }
  rep.fit_v = loglog(rep.tv, rep.nv);
  rep.fit_x = loglog(rep.tx, rep.nx);
  for (int p = 0; p < opt.npoints; ++p) {
    rep.prefactor_v = std::max(rep.prefactor_v, rep.nv[p] * std::min(1.0, std::pow(rep.tv[p], -rep.target_v)));
    rep.prefactor_x = std::max(rep.prefactor_x, rep.nx[p] * std::min(1.0, std::pow(rep.tx[p], -rep.target_x)));
  }
  return rep;
}

Eigen::SparseMatrix<double> assemble_generator(const KfpPropagator& prop) {
  const Index N = prop.grid().size();
  std::vector<Eigen::Triplet<double>> trip;
  Vec e = Vec::Zero(N);
  for (Index j = 0; j < N; ++j) {
    e[j] = 1.0;
    Vec col = prop.generator(e);
    e[j] = 0.0;
    for (Index i = 0; i < N; ++i)
      if (col[i] != 0.0) trip.emplace_back(i, j, col[i]);
  }
  Eigen::SparseMatrix<double> G(N, N);
  G.setFromTriplets(trip.begin(), trip.end());
  return G;
}

EigenOracle least_damped_modes(const KfpPropagator& prop, int nev) {
  using Cplx = std::complex<double>;
  Eigen::SparseMatrix<double> G = assemble_generator(prop);
  const Index N = G.rows();
  const double sigma = 0.01;
  Eigen::SparseMatrix<double> S = G;
  for (Index i = 0; i < N; ++i) S.coeffRef(i, i) -= sigma;
  S.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(S);
  if (lu.info() != Eigen::Success) throw ConvergenceError("least_damped_modes: factorization failed", {});

  const int m = static_cast<int>(std::min<Index>(N - 1, std::max(3 * nev, 120)));
  Mat Q(N, m + 1);
  Mat H = Mat::Zero(m + 1, m);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  Vec q(N);
  for (Index i = 0; i < N; ++i) q[i] = nd(rng);
  Q.col(0) = q.normalized();
  int used = m;
  for (int j = 0; j < m; ++j) {
    Vec w = lu.solve(Q.col(j));
    for (int pass = 0; pass < 2; ++pass) {
      Vec h = Q.leftCols(j + 1).transpose() * w;
      w -= Q.leftCols(j + 1) * h;
      H.col(j).head(j + 1) += h;
    }
    H(j + 1, j) = w.norm();
    if (H(j + 1, j) < 1e-13) {
      used = j + 1;
      break;
    }
    Q.col(j + 1) = w / H(j + 1, j);
  }
  Eigen::EigenSolver<Mat> es(H.topLeftCorner(used, used));
  if (es.info() != Eigen::Success) throw ConvergenceError("least_damped_modes: Hessenberg eigensolve failed", {});
  EigenOracle out;
  out.lambda_star = INFINITY;
  const double hlast = used < m + 1 ? H(used, used - 1) : 0.0;
  for (int r = 0; r < used; ++r) {
    Cplx theta = es.eigenvalues()[r];
    Eigen::VectorXcd y = es.eigenvectors().col(r);
    double res = std::abs(hlast * y[used - 1]) / y.norm();
    if (res > 1e-8 * std::abs(theta)) continue;
    Cplx lam = sigma + 1.0 / theta;
    out.eigenvalues.push_back(lam);
    if (std::abs(lam) > 1e-6) out.lambda_star = std::min(out.lambda_star, -lam.real());
  }
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(),
            [](Cplx a, Cplx b) { return a.real() > b.real(); });
  if (!std::isfinite(out.lambda_star)) throw ConvergenceError("least_damped_modes: no converged nonzero mode", {});
  return out;
}

DecayFit verify_perp_decay(const KfpPropagator& prop, const DistributionField& f0_perp, double T, double kappa0,
                           double sample_dt, double t_fit0, bool with_oracle) {
  if (!(T >= 5.0)) throw DomainError("verify_perp_decay: T must be at least 5");
  if (!(T > t_fit0)) throw DomainError("verify_perp_decay: T must exceed the fit start");
  const DistributionField& M = prop.maxwellian();
  DecayFit out;
  if (std::abs(f0_perp.mass()) > 1e-10 * std::max(1.0, bnorm(f0_perp, M)))
    throw DomainError("verify_perp_decay: initial datum has nonzero mass; project first");
  int n = static_cast<int>(std::llround(T / sample_dt));
  for (int i = 0; i <= n; ++i) out.t.push_back(i * T / n);
  if (bnorm(f0_perp, M) == 0.0) {
    out.degenerate = true;
    out.norm.assign(out.t.size(), 0.0);
    out.mass.assign(out.t.size(), 0.0);
    return out;
  }
  auto traj = prop.trajectory(f0_perp, out.t);
  std::vector<double> tx, ly;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    double nb = bnorm(traj[i], M);
    out.norm.push_back(nb);
    out.mass.push_back(traj[i].mass());
    out.max_mass = std::max(out.max_mass, std::abs(traj[i].mass()));
    if (out.t[i] >= t_fit0 - 1e-12 && nb > 1e-280) {
      tx.push_back(out.t[i]);
      ly.push_back(std::log(nb));
    }
  }
  if (tx.size() < 4) throw DomainError("verify_perp_decay: norm underflows inside the fit window; widen it");
  out.fit = fit_line(tx, ly);
  out.rate = -out.fit.slope;
  if (with_oracle && prop.grid().size() <= 40000) out.lambda_star = least_damped_modes(prop).lambda_star;
  if (kappa0 > 0) out.ratio_kappa0 = out.rate / kappa0;
  return out;
}

ConjugationReport verify_conjugation_and_continuity(const KfpPropagator& prop, double gamma, double a,
                                                    const std::vector<DistributionField>& probes, double t0,
                                                    double t1, int npoints) {
  if (gamma < 0 || gamma > 2) throw DomainError("verify_conjugation_and_continuity: gamma must lie in [0, 2]");
  if (a < 0 || a > 2) throw DomainError("verify_conjugation_and_continuity: a must lie in [0, 2]");
  const WeightedOperatorSet& ops = prop.ops();
  const DistributionField& M = prop.maxwellian();
  ConjugationReport rep;
  rep.target = a / 2;
  rep.t = logspace(t0, t1, npoints);
  rep.cont.assign(npoints, 0.0);
  bool any = false;
  for (const DistributionField& f : probes) {
    double n0 = bnorm(f, M);
    if (!(n0 > 0)) continue;
    double g0 = ops.lambda_pow_norm_full(f, gamma);
    auto traj = prop.trajectory(f, rep.t);
    std::vector<double> c(npoints);
    bool moves = false;
    for (int i = 0; i < npoints; ++i) {
      rep.ratio_sup = std::max(rep.ratio_sup, ops.lambda_pow_norm_full(traj[i], gamma) / g0);
      DistributionField diff(f.grid, traj[i].values - f.values);
      c[i] = bnorm(diff, M) / n0;
      moves = moves || c[i] > 1e-12;
    }
    if (!moves) continue;
    any = true;
    for (int i = 0; i < npoints; ++i) rep.cont[i] = std::max(rep.cont[i], c[i]);
  }
  if (!any) {
    rep.skipped = true;
    return rep;
  }
  rep.fit = loglog(rep.t, rep.cont);
  return rep;
}

}  // namespace krlx
