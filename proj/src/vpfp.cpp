#include "krlx/vpfp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace krlx {

namespace {

SpatialField field_of(const DistributionField& f) { return field_from_density(density(f)); }

double sup_field_diff(const SpatialField& a, const SpatialField& b) {
  double best = 0;
  for (Index c = 0; c < a.grid.nxd(); ++c) {
    double s = 0;
    for (int k = 0; k < a.ncomp(); ++k) {
      double d = a.comp[k][c] - b.comp[k][c];
      s += d * d;
    }
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

std::vector<double> snapshot_times(double T, double every) {
  std::vector<double> t;
  if (!(every > 0)) every = T;
  const long n = static_cast<long>(std::floor(T / every + 1e-9));
  for (long k = 0; k <= n; ++k) t.push_back(k * every);
  if (T - t.back() > 1e-12 * std::max(1.0, T)) t.push_back(T);
  return t;
}

/// S = eps0 sum_k F_k(x) d_{v_k} f.
Vec force_term(const DistributionField& f, const SpatialField& F, double eps0) {
  const PhaseGrid& g = f.grid;
  const Index nvd = g.nvd();
  Vec out = Vec::Zero(g.size());
  for (int k = 0; k < g.d; ++k) {
    DistributionField dv = diff_v(f, k);
    for (Index c = 0; c < g.nxd(); ++c) out.segment(c * nvd, nvd) += F.comp[k][c] * dv.values.segment(c * nvd, nvd);
  }
  return eps0 * out;
}

}  // namespace

VpfpStepper::VpfpStepper(const EquilibriumState& eq, const PhaseGrid& grid, double dt, Limiter lim)
    : eq_(eq), prop_(grid, eq.V_inf, dt, lim) {}

std::vector<Vec> VpfpStepper::force(const SpatialField& E) const {
  std::vector<Vec> F = prop_.reference_force();
  if (eq_.eps0 == 0.0) return F;
  for (int k = 0; k < prop_.grid().d; ++k) F[k] -= eq_.eps0 * (E.comp[k] - eq_.E_inf.comp[k]);
  return F;
}

void VpfpStepper::step(Vec& f, double tau) const {
  if (eq_.eps0 == 0.0) {
    prop_.step(f, tau);
    return;
  }
  const PhaseGrid& g = prop_.grid();
  SpatialField E0 = field_of(DistributionField(g, f));
  Vec pred = f;
  prop_.step(pred, tau, force(E0));
  SpatialField E1 = field_of(DistributionField(g, pred));
  for (int k = 0; k < g.d; ++k) E1.comp[k] = 0.5 * (E0.comp[k] + E1.comp[k]);
  prop_.step(f, tau, force(E1));
}

VpfpTrajectory vpfp_run(const DistributionField& f0, const EquilibriumState& eq, double T, double dt,
                        const RunOptions& opt) {
  if (!(T >= 0)) throw DomainError("vpfp_run: T must be nonnegative");
  if (f0.values.minCoeff() < -1e-14) throw DomainError("vpfp_run: f0 must be nonnegative");
  VpfpTrajectory out;
  out.dt = dt;
  out.eps0 = eq.eps0;
  Vec f = f0.values;
  double m = f0.mass();
  if (!(m > 0)) throw DomainError("vpfp_run: f0 has no mass");
  if (std::abs(m - 1.0) > 1e-12) {
    std::cerr << "warning: vpfp_run renormalizes f0 from mass " << m << " to 1\n";
    f /= m;
    out.renormalized = true;
  }
  VpfpStepper stepper(eq, f0.grid, dt, opt.limiter);
  double t = 0;
  for (double target : snapshot_times(T, opt.snapshot_dt)) {
    while (target - t > 1e-12 * std::max(1.0, target)) {
      double tau = std::min(dt, target - t);
      stepper.step(f, tau);
      ++out.steps;
      t = (tau == target - t) ? target : t + tau;
      if (!f.allFinite()) {
        std::ostringstream os;
        os << "vpfp_run: non-finite values at t = " << t;
        throw BlowupError(os.str(), t);
      }
    }
    t = target;
    out.snaps.push_back({t, DistributionField(f0.grid, f)});
    if (opt.on_snapshot) opt.on_snapshot(t, out.snaps.back().f);
  }
  return out;
}

VpfpTrajectory vpfp_run(const DistributionField& f0, const PotentialSpec& Ve, double eps0, double T, double dt,
                        const RunOptions& opt) {
  EquilibriumState eq = solve_poisson_emden(Ve, eps0, f0.grid);
  return vpfp_run(f0, eq, T, dt, opt);
}

RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& y, double t0, double t1) {
  std::vector<double> xs, ls;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= t0 - 1e-12 && t[i] <= t1 + 1e-12 && y[i] > 0 && std::isfinite(y[i])) {
      xs.push_back(t[i]);
      ls.push_back(std::log(y[i]));
    }
  RateFit r;
  if (xs.size() < 3) return r;
  LineFit lf = fit_line(xs, ls);
  r.rate = -lf.slope;
  r.intercept = lf.intercept;
  r.residual = lf.rms;
  r.n = lf.n;
  r.valid = true;
  return r;
}

double relative_entropy(const DistributionField& f, const DistributionField& M) {
  require_same_grid(f.grid, M.grid, "relative_entropy");
  double s = 0;
  for (Index i = 0; i < f.values.size(); ++i) {
    double v = f.values[i];
    if (v > 0) s += v * std::log(v / M.values[i]);
  }
  return s * f.grid.cell();
}

DecayReport decay_report(const VpfpTrajectory& traj, const EquilibriumState& eq, const DecayOptions& opt) {
  if (traj.snaps.empty()) throw DomainError("decay_report: empty trajectory");
  const DistributionField& M = eq.M_inf;
  DecayReport rep;
  bool frac = opt.fractional && (opt.alpha > 0 || opt.beta > 0);
  std::unique_ptr<WeightedOperatorSet> ops;
  if (frac) ops = std::make_unique<WeightedOperatorSet>(M);
  const double m0 = traj.snaps.front().f.mass();
  const double max0 = traj.snaps.front().f.values.maxCoeff();
  const int d = M.grid.d;
  rep.min_value = INFINITY;
  for (const Snapshot& s : traj.snaps) {
    DistributionField diff(M.grid, s.f.values - M.values);
    rep.times.push_back(s.t);
    rep.b_dist.push_back(bnorm(diff, M));
    double bab = rep.b_dist.back() * 2;
    if (frac) {
      try {
        bab = frac_norm(diff, opt.alpha, opt.beta, *ops);
      } catch (const CapabilityError&) {
        frac = false;
        bab = std::nan("");
      }
    } else if (opt.fractional == false) {
      bab = std::nan("");
    }
    rep.bab_dist.push_back(bab);
    rep.field_dist.push_back(sup_field_diff(field_of(s.f), eq.E_inf));
    rep.entropy.push_back(relative_entropy(s.f, M));
    rep.mass_error = std::max(rep.mass_error, std::abs(s.f.mass() - m0));
    rep.min_value = std::min(rep.min_value, s.f.values.minCoeff());
    rep.linf_ratio = std::max(rep.linf_ratio, s.f.values.maxCoeff() / (std::exp(d * s.t) * max0));
  }
  const double T = rep.times.back();
  if (T < opt.t_fit0 || T < 1.0) {
    rep.rates_omitted = true;
    return rep;
  }
  rep.rate_b = fit_rate(rep.times, rep.b_dist, opt.t_fit0, T);
  rep.rate_bab = fit_rate(rep.times, rep.bab_dist, opt.t_fit0, T);
  rep.rate_field = fit_rate(rep.times, rep.field_dist, opt.t_fit0, T);
  rep.rate_entropy = fit_rate(rep.times, rep.entropy, opt.t_fit0, T);
  return rep;
}

ConservationReport conservation_check(const VpfpTrajectory& traj) {
  if (traj.snaps.empty()) throw DomainError("conservation_check: empty trajectory");
  ConservationReport r;
  const DistributionField& f0 = traj.snaps.front().f;
  const double m0 = f0.mass(), max0 = f0.values.maxCoeff();
  const int d = f0.grid.d;
  r.min_value = INFINITY;
  for (const Snapshot& s : traj.snaps) {
    r.mass_drift = std::max(r.mass_drift, std::abs(s.f.mass() - m0));
    r.min_value = std::min(r.min_value, s.f.values.minCoeff());
    r.linf_ratio = std::max(r.linf_ratio, s.f.values.maxCoeff() / (std::exp(d * s.t) * max0));
  }
  return r;
}

std::vector<std::string> validate_fixed_point(const FixedPointConfig& c, int d) {
  std::vector<std::string> warn;
  auto fail = [](const std::string& m) { throw DomainError(m); };
  if (!(std::abs(c.eps0) <= 1)) fail("eps0 must satisfy |eps0| <= 1");
  if (d == 2 && c.eps0 < 0) fail("eps0 < 0 in d = 2 is the attractive case, which is not supported");
  if (!(c.alpha >= 0 && c.alpha <= 1)) fail("alpha must lie in [0, 1]");
  if (!(c.beta >= 0 && c.beta < 1)) fail("beta must satisfy 0 <= beta < 1");
  if (!(3 * c.alpha - 1 < c.beta)) fail("indices must satisfy 3 alpha - 1 < beta");
  if (!(c.sigma > 0 && c.sigma <= 0.5)) fail("sigma must lie in (0, 1/2]");
  if (c.max_picard < 1) fail("max_picard must be at least 1");
  if (c.kappa < 0) fail("kappa must be nonnegative");
  if (d == 3) {
    if (!(c.a > 0.5 && c.a < 0.75)) fail("a must satisfy 1/2 < a < 3/4");
    if (c.a >= 2.0 / 3.0) warn.push_back("a >= 2/3 is outside the proven range 1/2 < a < 2/3 (exploratory mode)");
    if (c.mode == PicardMode::long_time) {
      if (!(c.delta > 0 && c.delta < c.beta / 2 - 0.25)) fail("delta must satisfy 0 < delta < beta/2 - 1/4");
      if (!(c.sigma <= 0.5 * std::min(1 - c.beta + c.alpha, 1.0)))
        fail("sigma must satisfy sigma <= min(1 - beta + alpha, 1)/2");
    }
    if (!(c.eps > 0 && c.gamma_y() > 0)) fail("eps must satisfy 0 < eps < a/3");
  } else {
    if (!(c.delta >= 0 && c.delta < 1)) fail("delta must lie in [0, 1)");
  }
  return warn;
}

DistributionField PicardReport::solution(std::size_t n) const {
  DistributionField f = reference;
  f.values += linear.at(n).values + h.at(n).values;
  return f;
}

PicardReport picard_iterate(const DistributionField& f0, const EquilibriumState& eq, const FixedPointConfig& cfg,
                            double T, double dt) {
  const PhaseGrid& g = f0.grid;
  for (const std::string& w : validate_fixed_point(cfg, g.d)) std::cerr << "warning: " << w << "\n";
  if (cfg.eps0 != eq.eps0) throw DomainError("picard_iterate: equilibrium was computed for a different eps0");
  const bool small = cfg.mode == PicardMode::small_time;
  if (small && T > 1.0) T = 1.0;
  if (!(T > 0) || !(dt > 0)) throw DomainError("picard_iterate: T and dt must be positive");
  const int N = std::max(1, static_cast<int>(std::llround(T / dt)));
  const double step = T / N;

  PicardReport rep;
  DistributionField f = f0;
  if (std::abs(f.mass() - 1.0) > 1e-12) f.values /= f.mass();

  SpatialField V(g, 1);
  std::vector<SpatialField> Fbase(N + 1), Gbase(N + 1);
  std::vector<DistributionField> inner(N + 1);
  if (small) {
    SpatialField U0, E0;
    potential_and_field(density(f), U0, E0);
    V.values() = eq.V_inf.values() + cfg.eps0 * (U0.values() - eq.U_inf.values());
  } else {
    V = eq.V_inf;
  }
  KfpPropagator prop(g, V, step, cfg.limiter);
  const DistributionField& Mref = small ? prop.maxwellian() : eq.M_inf;
  rep.reference = small ? DistributionField(g) : eq.M_inf;
  DistributionField start = f;
  if (!small) start.values -= eq.M_inf.values;

  for (int n = 0; n <= N; ++n) rep.times.push_back(n * step);
  rep.linear = prop.trajectory(start, rep.times);
  for (int n = 0; n <= N; ++n) {
    inner[n] = rep.linear[n];
    if (!small) {
      inner[n].values += eq.M_inf.values;
      Fbase[n] = field_of(rep.linear[n]);
      Gbase[n] = SpatialField(g, g.d);
    } else {
      Fbase[n] = SpatialField(g, g.d);
      Gbase[n] = field_of(DistributionField(g, rep.linear[n].values - f.values));
    }
  }

  std::unique_ptr<WeightedOperatorSet> ops;
  if (cfg.alpha > 0 || cfg.beta > 0) ops = std::make_unique<WeightedOperatorSet>(Mref);
  auto bab = [&](const DistributionField& h) {
    return ops ? frac_norm(h, cfg.alpha, cfg.beta, *ops) : 2 * bnorm(h, Mref);
  };
  auto wx = [&](double t) {
    if (small) return 1.0;
    double td = cfg.delta == 0 ? 1.0 : std::pow(t, cfg.delta);
    return td / (1 + td) * std::exp(cfg.sigma * cfg.kappa * t);
  };
  auto wy = [&](double t) {
    if (small) return t > 0 ? std::pow(t, -cfg.gamma_y()) : 0.0;
    return std::exp(cfg.sigma * cfg.kappa * t);
  };
  struct Norms {
    double x, y;
  };
  auto znorms = [&](const std::vector<DistributionField>& h, const std::vector<SpatialField>& G) {
    Norms z{0, 0};
    for (int n = 0; n <= N; ++n) {
      double t = rep.times[n];
      z.x = std::max(z.x, wx(t) * bab(h[n]));
      z.y = std::max(z.y, wy(t) * G[n].sup_norm());
    }
    return z;
  };

  std::vector<DistributionField> h(N + 1, DistributionField(g));
  std::vector<SpatialField> G(N + 1, SpatialField(g, g.d));
  int rising = 0;
  for (int it = 1; it <= cfg.max_picard; ++it) {
    std::vector<DistributionField> hn(N + 1, DistributionField(g));
    std::vector<SpatialField> Gn(N + 1);
    auto source = [&](int n) {
      SpatialField F = Fbase[n];
      for (int k = 0; k < g.d; ++k) F.comp[k] += G[n].comp[k];
      DistributionField w = inner[n];
      w.values += h[n].values;
      return force_term(w, F, cfg.eps0);
    };
    Vec S = source(0);
    Vec I = Vec::Zero(g.size());
    hn[0].values = I;
    for (int n = 0; n < N; ++n) {
      Vec J = I + 0.5 * step * S;
      prop.step(J, step);
      S = source(n + 1);
      I = J + 0.5 * step * S;
      hn[n + 1].values = I;
    }
    for (int n = 0; n <= N; ++n) {
      Gn[n] = Gbase[n];
      SpatialField Fh = field_of(hn[n]);
      for (int k = 0; k < g.d; ++k) Gn[n].comp[k] += Fh.comp[k];
    }
    // Difference to the previous iterate.
    std::vector<DistributionField> dh(N + 1, DistributionField(g));
    std::vector<SpatialField> dG(N + 1, SpatialField(g, g.d));
    for (int n = 0; n <= N; ++n) {
      dh[n].values = hn[n].values - h[n].values;
      for (int k = 0; k < g.d; ++k) dG[n].comp[k] = Gn[n].comp[k] - G[n].comp[k];
    }
    Norms zd = znorms(dh, dG);
    h = std::move(hn);
    G = std::move(Gn);
    Norms z = znorms(h, G);
    rep.x_norm.push_back(z.x);
    rep.y_norm.push_back(z.y);
    rep.z_norm.push_back(std::max(z.x, z.y));
    double diff = std::max(zd.x, zd.y);
    rep.diff_norm.push_back(diff);
    rep.iterations = it;
    if (rep.diff_norm.size() >= 2) {
      double prev = rep.diff_norm[rep.diff_norm.size() - 2];
      double q = prev > 0 ? diff / prev : 0.0;
      rep.q.push_back(q);
      rising = q > 1 ? rising + 1 : 0;
      if (rising >= 3) {
        rep.contracting = false;
        std::ostringstream os;
        os << "non-contraction at eps0 = " << cfg.eps0 << ": three consecutive factors above 1";
        rep.note = os.str();
        break;
      }
    }
    if (diff <= cfg.tol * std::max(1.0, rep.z_norm.back())) {
      rep.converged = true;
      break;
    }
  }
  rep.h = std::move(h);
  rep.G = std::move(G);
  return rep;
}

namespace {

/// Tanh-sinh quadrature of f(r) on [a, b] where f takes the distance from a and from b.
template <class F>
double tanh_sinh(const F& f, double a, double b) {
  const double h = 1.0 / 32;
  const double len = b - a;
  double sum = 0;
  for (int k = -128; k <= 128; ++k) {
    double x = k * h;
    double u = 0.5 * M_PI * std::sinh(x);
    double w = 0.5 * M_PI * std::cosh(x) / (std::cosh(u) * std::cosh(u));
    double dl = len / (1 + std::exp(-2 * u));
    double dr = len / (1 + std::exp(2 * u));
    if (dl <= 0 || dr <= 0 || !std::isfinite(w)) continue;
    sum += w * f(dl, dr);
  }
  return sum * h * len / 2;
}

/// int_0^L phi(r) dr with phi integrably singular at r = 0, split dyadically beyond 1.
template <class F>
double dyadic(const F& phi, double L) {
  double total = 0, lo = 0, hi = std::min(1.0, L);
  while (lo < L) {
    const double base = lo;
    total += tanh_sinh([&](double dl, double) { return phi(base + dl); }, lo, hi);
    lo = hi;
    hi = std::min(2 * hi, L);
  }
  return total;
}

}  // namespace

double lemma_integral(double g1, double g2, double c, double t) {
  if (!(t > 0)) return 0.0;
  auto integrand = [&](double s, double r) {
    return (std::pow(s, -1 + g1) + 1) * (std::pow(r, -1 + g2) + 1) * std::exp(-c * r);
  };
  const double half = 0.5 * t;
  double left = dyadic([&](double s) { return integrand(s, t - s); }, half);
  double right = dyadic([&](double r) { return integrand(t - r, r); }, half);
  return left + right;
}

double lemma_ratio(double g1, double g2, double c, double t) {
  double I = lemma_integral(g1, g2, c, t);
  return t <= 1 ? I / (std::pow(t, -1 + g1 + g2) + 1) : I;
}

}  // namespace krlx
