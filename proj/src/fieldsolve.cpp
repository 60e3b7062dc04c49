#include "krlx/fieldsolve.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>

namespace krlx {

namespace {

using cplx = std::complex<double>;

// Regularized lattice sums: zeta_{Z^3}(1) and d/ds zeta_{Z^2}(s)|_{s=0} for sum' |n|^{-s},
// and 2 zeta(-1) in one dimension.
constexpr double kZeta3 = -2.8372974794806;
constexpr double kZeta2Prime = -1.3105329259115093;

Index ipow(Index b, int e) {
  Index r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

void fftn(std::vector<cplx>& data, int d, Index m, bool inverse) {
  Eigen::FFT<double> fft;
  std::vector<cplx> line(m), out(m);
  for (int k = 0; k < d; ++k) {
    const Index s = ipow(m, d - 1 - k), outer = ipow(m, k);
    for (Index o = 0; o < outer; ++o)
      for (Index r = 0; r < s; ++r) {
        const Index base = o * m * s + r;
        for (Index i = 0; i < m; ++i) line[i] = data[base + i * s];
        if (inverse)
          fft.inv(out, line);
        else
          fft.fwd(out, line);
        for (Index i = 0; i < m; ++i) data[base + i * s] = out[i];
      }
  }
}

// Weight of the singular cell, expressed as a kernel value (multiplied by h^d in the sum).
double singular_kernel_value(int d, double h) {
  switch (d) {
    case 1:
      return -h / 12.0;  // h * G0 = -h^2/12, from 2 zeta(-1) = -1/6
    case 2:
      return -(std::log(h) + kZeta2Prime) / (2.0 * std::numbers::pi);
    default:
      return -kZeta3 / (4.0 * std::numbers::pi * h);
  }
}

struct GreenTable {
  int d;
  Index n, m;
  double h;
  std::vector<cplx> khat;
};

std::shared_ptr<const GreenTable> green_table(const PhaseGrid& g) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, double>, std::shared_ptr<const GreenTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(g.d, g.nx, g.Lx);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  auto t = std::make_shared<GreenTable>();
  t->d = g.d;
  t->n = g.nx;
  t->m = 2 * g.nx;
  t->h = g.hx();
  const Index total = ipow(t->m, g.d);
  t->khat.assign(total, 0.0);
  std::vector<int> idx(g.d);
  for (Index q = 0; q < total; ++q) {
    Index rem = q;
    double r2 = 0;
    for (int k = g.d - 1; k >= 0; --k) {
      Index ik = rem % t->m;
      rem /= t->m;
      double o = static_cast<double>(ik < t->n ? ik : ik - t->m);
      r2 += o * o;
    }
    t->khat[q] = r2 == 0 ? singular_kernel_value(g.d, t->h) : green(g.d, t->h * std::sqrt(r2));
  }
  fftn(t->khat, g.d, t->m, false);
  if (cache.size() > 16) cache.clear();
  cache.emplace(key, t);
  return t;
}

// Convolution on the doubled grid; returns the full periodic array (ghost cells included).
std::vector<double> convolve_full(const SpatialField& rho, const GreenTable& t) {
  const PhaseGrid& g = rho.grid;
  const Index total = ipow(t.m, g.d);
  std::vector<cplx> buf(total, 0.0);
  std::vector<int> idx(g.d);
  for (Index i = 0; i < g.nxd(); ++i) {
    g.xindex(i, idx.data());
    Index q = 0;
    for (int k = 0; k < g.d; ++k) q = q * t.m + idx[k];
    buf[q] = rho.values()[i];
  }
  fftn(buf, g.d, t.m, false);
  for (Index q = 0; q < total; ++q) buf[q] *= t.khat[q];
  fftn(buf, g.d, t.m, true);
  std::vector<double> out(total);
  const double vol = g.cellx();
  for (Index q = 0; q < total; ++q) out[q] = buf[q].real() * vol;
  return out;
}

Index full_index(const std::vector<int>& idx, int d, Index m) {
  Index q = 0;
  for (int k = 0; k < d; ++k) q = q * m + ((idx[k] % m + m) % m);
  return q;
}

}  // namespace

double sphere_area(int d) {
  switch (d) {
    case 1:
      return 2.0;
    case 2:
      return 2.0 * std::numbers::pi;
    case 3:
      return 4.0 * std::numbers::pi;
  }
  throw DomainError("sphere_area: d must be 1, 2 or 3");
}

double green(int d, double r) {
  switch (d) {
    case 1:
      return -0.5 * r;
    case 2:
      return -std::log(r) / (2.0 * std::numbers::pi);
    case 3:
      return 1.0 / (4.0 * std::numbers::pi * r);
  }
  throw DomainError("green: d must be 1, 2 or 3");
}

SpatialField density(const DistributionField& f) {
  const PhaseGrid& g = f.grid;
  SpatialField rho(g, 1);
  const Index nvd = g.nvd();
  for (Index i = 0; i < g.nxd(); ++i) rho.comp[0][i] = f.values.segment(i * nvd, nvd).sum() * g.cellv();
  return rho;
}

void potential_and_field(const SpatialField& rho, SpatialField& U, SpatialField& E) {
  const PhaseGrid& g = rho.grid;
  if (rho.ncomp() != 1) throw ShapeError("potential_and_field: density must be scalar");
  auto t = green_table(g);
  std::vector<double> full = convolve_full(rho, *t);
  U = SpatialField(g, 1);
  E = SpatialField(g, g.d);
  std::vector<int> idx(g.d), nb(g.d);
  const double c = 1.0 / (12.0 * g.hx());
  for (Index i = 0; i < g.nxd(); ++i) {
    g.xindex(i, idx.data());
    U.comp[0][i] = full[full_index(idx, g.d, t->m)];
    for (int k = 0; k < g.d; ++k) {
      auto at = [&](int o) {
        nb = idx;
        nb[k] += o;
        return full[full_index(nb, g.d, t->m)];
      };
      E.comp[k][i] = c * (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2));
    }
  }
}

SpatialField potential_from_density(const SpatialField& rho) {
  SpatialField U, E;
  potential_and_field(rho, U, E);
  return U;
}

SpatialField field_from_density(const SpatialField& rho) {
  SpatialField U, E;
  potential_and_field(rho, U, E);
  return E;
}

bool interior4(const PhaseGrid& g, Index i) {
  int idx[3];
  g.xindex(i, idx);
  for (int k = 0; k < g.d; ++k)
    if (idx[k] < 2 || idx[k] > g.nx - 3) return false;
  return true;
}

SpatialField laplacian4(const SpatialField& U) {
  const PhaseGrid& g = U.grid;
  SpatialField out(g, 1);
  const double c = 1.0 / (12.0 * g.hx() * g.hx());
  const Vec& u = U.values();
  for (Index i = 0; i < g.nxd(); ++i) {
    if (!interior4(g, i)) continue;
    double acc = 0;
    for (int k = 0; k < g.d; ++k) {
      const Index s = g.xstride(k);
      acc += -u[i + 2 * s] + 16.0 * u[i + s] - 30.0 * u[i] + 16.0 * u[i - s] - u[i - 2 * s];
    }
    out.comp[0][i] = c * acc;
  }
  return out;
}

double poisson_residual(const SpatialField& U, const SpatialField& rho) {
  SpatialField L = laplacian4(U);
  double r = 0;
  for (Index i = 0; i < U.grid.nxd(); ++i)
    if (interior4(U.grid, i)) r = std::max(r, std::abs(-L.comp[0][i] - rho.comp[0][i]));
  return r;
}

namespace {

struct PolishSystem {
  std::vector<Index> cells;  // interior cell -> grid index
  std::vector<Index> slot;   // grid index -> unknown or -1
  Eigen::SparseMatrix<double> A;
  std::unique_ptr<Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper>> cg;
};

std::shared_ptr<PolishSystem> polish_system(const PhaseGrid& g) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, double>, std::shared_ptr<PolishSystem>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(g.d, g.nx, g.Lx);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto s = std::make_shared<PolishSystem>();
  s->slot.assign(g.nxd(), -1);
  for (Index i = 0; i < g.nxd(); ++i)
    if (interior4(g, i)) {
      s->slot[i] = static_cast<Index>(s->cells.size());
      s->cells.push_back(i);
    }
  const Index n = static_cast<Index>(s->cells.size());
  const double c = 1.0 / (12.0 * g.hx() * g.hx());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * (1 + 4 * g.d));
  for (Index r = 0; r < n; ++r) {
    const Index i = s->cells[r];
    trip.emplace_back(r, r, 30.0 * c * g.d);
    for (int k = 0; k < g.d; ++k) {
      const Index st = g.xstride(k);
      const std::pair<Index, double> nbs[4] = {{i + st, -16.0 * c}, {i - st, -16.0 * c}, {i + 2 * st, c}, {i - 2 * st, c}};
      for (auto [j, w] : nbs)
        if (s->slot[j] >= 0) trip.emplace_back(r, s->slot[j], w);
    }
  }
  s->A.resize(n, n);
  s->A.setFromTriplets(trip.begin(), trip.end());
  s->cg = std::make_unique<Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper>>();
  s->cg->compute(s->A);
  s->cg->setMaxIterations(20 * static_cast<Index>(std::sqrt(double(n))) + 2000);
  if (cache.size() > 8) cache.clear();
  cache.emplace(key, s);
  return s;
}

}  // namespace

SpatialField poisson_polish(const SpatialField& U, const SpatialField& rho, double tol) {
  const PhaseGrid& g = U.grid;
  auto sys = polish_system(g);
  const Index n = static_cast<Index>(sys->cells.size());
  const double c = 1.0 / (12.0 * g.hx() * g.hx());
  const Vec& u = U.values();
  Vec b(n), x0(n);
  for (Index r = 0; r < n; ++r) {
    const Index i = sys->cells[r];
    double acc = rho.values()[i];
    for (int k = 0; k < g.d; ++k) {
      const Index st = g.xstride(k);
      const std::pair<Index, double> nbs[4] = {{i + st, -16.0 * c}, {i - st, -16.0 * c}, {i + 2 * st, c}, {i - 2 * st, c}};
      for (auto [j, w] : nbs)
        if (sys->slot[j] < 0) acc -= w * u[j];
    }
    b[r] = acc;
    x0[r] = u[i];
  }
  // Drive the sup residual below tol: the L2 residual bounds it.
  const double bn = b.norm();
  static std::mutex solve_mu;
  std::lock_guard<std::mutex> lock(solve_mu);
  sys->cg->setTolerance(bn > 0 ? std::max(0.5 * tol / bn, 1e-16) : 1e-16);
  Vec x = sys->cg->solveWithGuess(b, x0);
  SpatialField out = U;
  for (Index r = 0; r < n; ++r) out.comp[0][sys->cells[r]] = x[r];
  return out;
}

SpatialField divergence4(const SpatialField& E) {
  const PhaseGrid& g = E.grid;
  SpatialField out(g, 1);
  const double c = 1.0 / (12.0 * g.hx());
  for (Index i = 0; i < g.nxd(); ++i) {
    if (!interior4(g, i)) continue;
    double acc = 0;
    for (int k = 0; k < g.d; ++k) {
      const Index s = g.xstride(k);
      const Vec& e = E.comp[k];
      acc += -e[i + 2 * s] + 8.0 * e[i + s] - 8.0 * e[i - s] + e[i - 2 * s];
    }
    out.comp[0][i] = c * acc;
  }
  return out;
}

double hs_norm(const SpatialField& rho, double alpha) {
  const PhaseGrid& g = rho.grid;
  const int n = g.nx;
  const double ih2 = 1.0 / (g.hx() * g.hx());
  Mat L = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    L(i, i) = 2.0 * ih2;
    if (i + 1 < n) L(i, i + 1) = L(i + 1, i) = -ih2;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(L);
  Vec y = rho.values();
  std::vector<Index> dims(g.d, n);
  for (int k = 0; k < g.d; ++k) apply_along_axis(y, dims, k, es.eigenvectors().transpose());
  std::vector<int> idx(g.d);
  for (Index i = 0; i < g.nxd(); ++i) {
    g.xindex(i, idx.data());
    double lam = 1.0;
    for (int k = 0; k < g.d; ++k) lam += es.eigenvalues()[idx[k]];
    y[i] *= std::pow(lam, 0.5 * alpha);
  }
  return y.norm() * std::sqrt(g.cellx());
}

namespace {

void field_ratios(const std::vector<DistributionField>& samples, double s, const WeightedOperatorSet& ops,
                  std::vector<double>& ratios, std::vector<int>* skipped) {
  for (std::size_t q = 0; q < samples.size(); ++q) {
    double nrm = ops.lambda_pow_norm_full(samples[q], s);
    if (!(nrm > 0)) {
      if (skipped) skipped->push_back(static_cast<int>(q));
      continue;
    }
    ratios.push_back(field_from_density(density(samples[q])).sup_norm() / nrm);
  }
}

}  // namespace

FieldBoundReport check_field_bounds(const std::vector<DistributionField>& samples, double eps,
                                    const WeightedOperatorSet& ops, const std::vector<DistributionField>* refined,
                                    const WeightedOperatorSet* refined_ops) {
  if (!(eps > 0 && eps <= 0.5)) throw DomainError("check_field_bounds: eps must lie in (0, 1/2]");
  if (samples.empty()) throw DomainError("check_field_bounds: no samples");
  FieldBoundReport rep;
  rep.exponent = ops.grid().d == 3 ? 0.5 + eps : eps;
  field_ratios(samples, rep.exponent, ops, rep.ratios, &rep.skipped);
  if (!rep.ratios.empty()) {
    rep.max_ratio = *std::max_element(rep.ratios.begin(), rep.ratios.end());
    rep.min_ratio = *std::min_element(rep.ratios.begin(), rep.ratios.end());
  }
  if (refined && refined_ops) {
    std::vector<double> r2;
    field_ratios(*refined, rep.exponent, *refined_ops, r2, nullptr);
    if (!r2.empty()) rep.refined_max_ratio = *std::max_element(r2.begin(), r2.end());
  }
  return rep;
}

std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = std::exp(std::log(a) + (std::log(b) - std::log(a)) * i / std::max(1, n - 1));
  return t;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  f.n = static_cast<int>(x.size());
  if (f.n < 2) return f;
  double mx = 0, my = 0;
  for (int i = 0; i < f.n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= f.n;
  my /= f.n;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < f.n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double ss = 0;
  for (int i = 0; i < f.n; ++i) {
    double r = y[i] - (f.intercept + f.slope * x[i]);
    ss += r * r;
  }
  f.rms = std::sqrt(ss / f.n);
  return f;
}

ExponentReport short_time_field_check(const DistributionField& f0, double a, double eps,
                                      const TrajectoryFn& propagate, int npoints) {
  const PhaseGrid& g = f0.grid;
  if (g.d != 3) throw DomainError("short_time_field_check: requires d = 3");
  if (!(a > 0.5 && a < 0.75)) throw DomainError("short_time_field_check: a must lie in (1/2, 3/4)");
  ExponentReport rep;
  rep.target = a / 3.0 - eps;
  rep.times = logspace(1e-3, 1.0, npoints);
  auto traj = propagate(f0, rep.times);
  const SpatialField rho0 = density(f0);
  std::vector<double> lx, ly;
  for (std::size_t q = 0; q < traj.size(); ++q) {
    SpatialField drho = density(traj[q]);
    drho.comp[0] -= rho0.comp[0];
    // (x/|x|^d) * rho = -|S^{d-1}| E[rho]
    double s0 = sphere_area(g.d) * field_from_density(drho).sup_norm();
    rep.values.push_back(s0);
    if (std::isfinite(s0) && s0 > 1e-300) {
      lx.push_back(std::log(rep.times[q]));
      ly.push_back(std::log(s0));
    }
  }
  rep.usable = static_cast<int>(lx.size());
  if (rep.usable < 4) throw DomainError("short_time_field_check: fewer than 4 usable points for the fit");
  LineFit fit = fit_line(lx, ly);
  rep.slope = fit.slope;
  rep.intercept = fit.intercept;
  return rep;
}

}  // namespace krlx
