#include "krlx/transport.hpp"

#include "krlx/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace krlx {

namespace {

constexpr double kPositivitySafety = 0.95;

inline double minmod(double p, double q) {
  if (p > 0 && q > 0) return std::min(p, q);
  if (p < 0 && q < 0) return std::max(p, q);
  return 0.0;
}

inline double slope(double p, double q, Limiter lim) {
  return lim == Limiter::minmod ? minmod(p, q) : 0.5 * (p + q);
}

}  // namespace

KfpPropagator::KfpPropagator(const PhaseGrid& g, const SpatialField& V, double dt, Limiter lim)
    : g_(g), dt_(dt), lim_(lim) {
  g_.validate();
  if (V.grid.d != g.d || V.grid.nx != g.nx || V.grid.Lx != g.Lx)
    throw ShapeError("KfpPropagator: potential grid differs from phase grid");
  if (!(dt > 0)) throw DomainError("KfpPropagator: dt must be positive");
  if (cfl() > 0.9) {
    std::ostringstream os;
    os << "CFL number max|v| dt / hx = " << cfl() << " exceeds 0.9";
    throw CflError(os.str());
  }
  const int d = g.d;
  const Index nxd = g.nxd(), nvd = g.nvd();
  const double hx = g.hx(), hv = g.hv();
  M_ = krlx::maxwellian(V, g).first;

  const Vec& vals = V.values();
  Mx_ = (-(vals.array() - vals.minCoeff())).exp().matrix();

  xpos_.assign(d, std::vector<int>(nxd));
  vpos_.assign(d, std::vector<int>(nvd));
  int idx[3];
  for (Index c = 0; c < nxd; ++c) {
    g.xindex(c, idx);
    for (int k = 0; k < d; ++k) xpos_[k][c] = idx[k];
  }
  Vec mv1(g.nv);
  for (int j = 0; j < g.nv; ++j) mv1[j] = std::exp(-0.5 * g.v(j) * g.v(j));
  Mv_ = Vec::Ones(nvd);
  vk_.assign(d, Vec(nvd));
  for (Index j = 0; j < nvd; ++j) {
    g.vindex(j, idx);
    for (int k = 0; k < d; ++k) {
      vpos_[k][j] = idx[k];
      Mv_[j] *= mv1[idx[k]];
      vk_[k][j] = g.v(idx[k]);
    }
  }

  // Spatial faces and the well-balanced force.
  Mxf_.assign(d, Vec::Zero(nxd));
  Fref_.assign(d, Vec::Zero(nxd));
  for (int k = 0; k < d; ++k) {
    const Index s = g.xstride(k);
    for (Index c = 0; c < nxd; ++c)
      if (xpos_[k][c] < g.nx - 1) Mxf_[k][c] = std::sqrt(Mx_[c] * Mx_[c + s]);
    for (Index c = 0; c < nxd; ++c) {
      double left = xpos_[k][c] > 0 ? Mxf_[k][c - s] : 0.0;
      Fref_[k][c] = (Mxf_[k][c] - left) / (hx * Mx_[c]);
    }
  }

  // Velocity faces: mvf(j+1/2) - mvf(j-1/2) = -hv v_j mv_j, zero on both box faces, mirrored
  // so the two halves agree exactly.
  const int nv = g.nv;
  Vec mvf = Vec::Zero(nv + 1);
  double acc = 0;
  for (int j = 0; j < nv / 2; ++j) {
    acc -= hv * g.v(j) * mv1[j];
    mvf[j + 1] = acc;
  }
  for (int j = nv / 2 + 1; j < nv; ++j) mvf[j] = mvf[nv - j];
  mvf[0] = mvf[nv] = 0.0;

  Wv_.assign(d, Vec::Zero(nvd));
  for (int k = 0; k < d; ++k)
    for (Index j = 0; j < nvd; ++j) {
      if (vpos_[k][j] >= nv - 1) continue;
      Wv_[k][j] = Mv_[j] / mv1[vpos_[k][j]] * mvf[vpos_[k][j] + 1];
    }
  rplus_ = rminus_ = 0;
  for (int j = 0; j < nv; ++j) {
    rplus_ = std::max(rplus_, mvf[j + 1] / mv1[j]);
    rminus_ = std::max(rminus_, mvf[j] / mv1[j]);
  }

  const double vmax = g.Lv - 0.5 * hv;
  xrate_ = Vec::Zero(nxd);
  for (int k = 0; k < d; ++k) {
    const Index s = g.xstride(k);
    for (Index c = 0; c < nxd; ++c) {
      double left = xpos_[k][c] > 0 ? Mxf_[k][c - s] : 0.0;
      xrate_[c] += 1.5 * vmax * std::max(left, Mxf_[k][c]) / (hx * Mx_[c]);
    }
  }

  // Chang-Cooper (Scharfetter-Gummel) generator of d/dv (df/dv + v f) with zero-flux ends.
  A_ = Mat::Zero(nv, nv);
  const double h2 = hv * hv;
  for (int j = 0; j + 1 < nv; ++j) {
    double dpsi = 0.5 * (g.v(j + 1) * g.v(j + 1) - g.v(j) * g.v(j));
    double bp = bernoulli(dpsi), bm = bernoulli(-dpsi);
    // J = (bp f_j - bm f_{j+1}) / hv leaves cell j and enters cell j+1.
    A_(j, j) -= bp / h2;
    A_(j, j + 1) += bm / h2;
    A_(j + 1, j + 1) -= bm / h2;
    A_(j + 1, j) += bp / h2;
  }
}

const WeightedOperatorSet& KfpPropagator::ops() const {
  std::call_once(ops_once_, [this] { ops_ = std::make_unique<WeightedOperatorSet>(M_); });
  return *ops_;
}

double KfpPropagator::cfl() const { return (g_.Lv - 0.5 * g_.hv()) * dt_ / g_.hx(); }

double KfpPropagator::positivity_rate(const std::vector<Vec>& force) const {
  const double hv = g_.hv();
  double best = 0;
  for (Index c = 0; c < g_.nxd(); ++c) {
    double r = xrate_[c];
    for (int k = 0; k < g_.d; ++k) {
      double F = force[k][c];
      r += 1.5 * std::abs(F) * (F > 0 ? rplus_ : rminus_) / hv;
    }
    best = std::max(best, r);
  }
  return best;
}

void KfpPropagator::rhs(const Vec& f, const std::vector<Vec>& force, Limiter lim, Vec& out) const {
  const int d = g_.d;
  const Index nxd = g_.nxd(), nvd = g_.nvd();
  const double hx = g_.hx(), hv = g_.hv();
  Vec u(f.size());
  for (Index c = 0; c < nxd; ++c)
    u.segment(c * nvd, nvd) = f.segment(c * nvd, nvd).cwiseQuotient(Mx_[c] * Mv_);
  out.setZero(f.size());

  for (int k = 0; k < d; ++k) {
    // Spatial fluxes, one face per cell pair (a, a+s).
    const Index s = g_.xstride(k);
    const std::vector<int>& pos = xpos_[k];
    for (Index a = 0; a < nxd; ++a) {
      if (pos[a] >= g_.nx - 1) continue;
      const Index b = a + s;
      const double* uL = u.data() + a * nvd;
      const double* uR = u.data() + b * nvd;
      const double* uLL = pos[a] > 0 ? u.data() + (a - s) * nvd : uL;
      const double* uRR = pos[b] < g_.nx - 1 ? u.data() + (b + s) * nvd : uR;
      double* oL = out.data() + a * nvd;
      double* oR = out.data() + b * nvd;
      const double w = Mxf_[k][a] / hx;
      const double* vk = vk_[k].data();
      const double* mv = Mv_.data();
      for (Index j = 0; j < nvd; ++j) {
        double uf;
        if (vk[j] > 0)
          uf = uL[j] + 0.5 * slope(uL[j] - uLL[j], uR[j] - uL[j], lim);
        else
          uf = uR[j] - 0.5 * slope(uR[j] - uL[j], uRR[j] - uR[j], lim);
        double flux = w * vk[j] * mv[j] * uf;
        oL[j] -= flux;
        oR[j] += flux;
      }
    }
    // Velocity fluxes inside each velocity block.
    const Index sv = g_.vstride(k);
    const std::vector<int>& vp = vpos_[k];
    const int nv = g_.nv;
    const double* Wv = Wv_[k].data();
    for (Index c = 0; c < nxd; ++c) {
      const double F = force[k][c];
      if (F == 0.0) continue;
      const double w = F * Mx_[c] / hv;
      const double* uc = u.data() + c * nvd;
      double* oc = out.data() + c * nvd;
      for (Index j = 0; j < nvd; ++j) {
        const int p = vp[j];
        if (p >= nv - 1) continue;
        const Index jp = j + sv;
        double uf;
        if (F > 0) {
          double um = p > 0 ? uc[j - sv] : uc[j];
          uf = uc[j] + 0.5 * slope(uc[j] - um, uc[jp] - uc[j], lim);
        } else {
          double upp = p + 1 < nv - 1 ? uc[jp + sv] : uc[jp];
          uf = uc[jp] - 0.5 * slope(uc[jp] - uc[j], upp - uc[jp], lim);
        }
        double flux = w * Wv[j] * uf;
        oc[j] -= flux;
        oc[jp] += flux;
      }
    }
  }
}

void KfpPropagator::transport(Vec& f, double tau, const std::vector<Vec>& force) const {
  if (tau <= 0) return;
  const double rate = positivity_rate(force);
  const int nsub = std::max(1, static_cast<int>(std::ceil(tau * rate / kPositivitySafety)));
  const double h = tau / nsub;
  Vec k1, k2, f1;
  for (int n = 0; n < nsub; ++n) {
    rhs(f, force, lim_, k1);
    f1 = f + h * k1;
    rhs(f1, force, lim_, k2);
    f = 0.5 * f + 0.5 * (f1 + h * k2);
  }
}

Mat KfpPropagator::ou_matrix(double tau) const {
  const int n = g_.nv;
  if (tau <= 0) return Mat::Identity(n, n);
  const double c = A_.diagonal().cwiseAbs().maxCoeff();
  int s = 0;
  while (c * tau / std::ldexp(1.0, s) > 0.5) ++s;
  const double t = tau / std::ldexp(1.0, s);
  const double ct = c * t;
  Mat B = Mat::Identity(n, n) + A_ / c;
  Mat term = Mat::Identity(n, n);
  Mat S = term;
  for (int k = 1; k < 40; ++k) {
    term = (term * B) * (ct / k);
    S += term;
    if (term.maxCoeff() < 1e-20) break;
  }
  S *= std::exp(-ct);
  for (int i = 0; i < s; ++i) S = S * S;
  for (int j = 0; j < n; ++j) S.col(j) /= S.col(j).sum();
  return S;
}

std::shared_ptr<const Mat> KfpPropagator::cached_ou(double tau) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = ou_cache_.find(tau);
    if (it != ou_cache_.end()) return it->second;
  }
  auto P = std::make_shared<const Mat>(ou_matrix(tau));
  std::lock_guard<std::mutex> lock(mu_);
  if (ou_cache_.size() > 64) ou_cache_.clear();
  ou_cache_.emplace(tau, P);
  return P;
}

void KfpPropagator::ou(Vec& f, double tau) const {
  if (tau <= 0) return;
  auto P = cached_ou(tau);
  Index outer = g_.nxd(), inner = g_.nvd();
  for (int k = 0; k < g_.d; ++k) {
    inner /= g_.nv;
    apply_along(f, outer, g_.nv, inner, *P);
    outer *= g_.nv;
  }
}

void KfpPropagator::step(Vec& f, double tau, const std::vector<Vec>& force) const {
  if (f.size() != g_.size()) throw ShapeError("KfpPropagator::step: size mismatch");
  transport(f, 0.5 * tau, force);
  ou(f, tau);
  transport(f, 0.5 * tau, force);
}

Vec KfpPropagator::generator(const Vec& f) const {
  Vec out;
  rhs(f, Fref_, Limiter::none, out);
  Index outer = g_.nxd(), inner = g_.nvd();
  for (int k = 0; k < g_.d; ++k) {
    inner /= g_.nv;
    Vec tmp = f;
    apply_along(tmp, outer, g_.nv, inner, A_);
    out += tmp;
    outer *= g_.nv;
  }
  return out;
}

std::vector<DistributionField> KfpPropagator::trajectory(const DistributionField& f0,
                                                         const std::vector<double>& times) const {
  require_same_grid(f0.grid, g_, "KfpPropagator::trajectory");
  std::vector<DistributionField> out;
  out.reserve(times.size());
  Vec f = f0.values;
  double t = 0;
  for (double target : times) {
    if (target < t - 1e-12) throw DomainError("KfpPropagator::trajectory: times must increase");
    while (target - t > 1e-12 * std::max(1.0, target)) {
      double tau = std::min(dt_, target - t);
      step(f, tau);
      t = (tau == target - t) ? target : t + tau;
      if (!f.allFinite()) {
        std::ostringstream os;
        os << "non-finite values at t = " << t;
        throw BlowupError(os.str(), t);
      }
    }
    t = target;
    out.emplace_back(g_, f);
  }
  return out;
}

DistributionField KfpPropagator::propagate(const DistributionField& f0, double T) const {
  return trajectory(f0, {T}).front();
}

DistributionField reflect_v(const DistributionField& f) {
  DistributionField out(f.grid);
  const Index nvd = f.grid.nvd();
  for (Index c = 0; c < f.grid.nxd(); ++c)
    out.values.segment(c * nvd, nvd) = f.values.segment(c * nvd, nvd).reverse();
  return out;
}

}  // namespace krlx
