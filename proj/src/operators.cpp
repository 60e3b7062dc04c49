#include "krlx/operators.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <random>

namespace krlx {

double b_inner(const DistributionField& f, const DistributionField& g, const DistributionField& M) {
  require_same_grid(f.grid, g.grid, "b_inner");
  require_same_grid(f.grid, M.grid, "b_inner");
  if (!(M.values.minCoeff() > 0)) throw DomainError("b_inner: weight must be strictly positive");
  return (f.values.array() * g.values.array() / M.values.array()).sum() * f.grid.cell();
}

double bnorm(const DistributionField& f, const DistributionField& M) {
  return std::sqrt(std::max(0.0, b_inner(f, f, M)));
}

DistributionField project_perp(const DistributionField& f, const DistributionField& M) {
  require_same_grid(f.grid, M.grid, "project_perp");
  DistributionField out = f;
  out.values -= (f.mass() / M.mass()) * M.values;
  return out;
}

double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

DistributionField diff_v(const DistributionField& f, int k) {
  const PhaseGrid& g = f.grid;
  const Index nvd = g.nvd(), s = g.vstride(k);
  const double c = 0.5 / g.hv();
  DistributionField out(g);
  for (Index i = 0; i < g.nxd(); ++i) {
    const double* a = f.values.data() + i * nvd;
    double* o = out.values.data() + i * nvd;
    for (Index j = 0; j < nvd; ++j) {
      const Index jk = (j / s) % g.nv;
      const double up = jk + 1 < g.nv ? a[j + s] : 0.0;
      const double dn = jk > 0 ? a[j - s] : 0.0;
      o[j] = c * (up - dn);
    }
  }
  return out;
}

DistributionField diff_x(const DistributionField& f, int k) {
  const PhaseGrid& g = f.grid;
  const Index nvd = g.nvd(), s = g.xstride(k);
  const double c = 0.5 / g.hx();
  DistributionField out(g);
  for (Index i = 0; i < g.nxd(); ++i) {
    const Index ik = (i / s) % g.nx;
    auto o = out.values.segment(i * nvd, nvd);
    if (ik + 1 < g.nx) o += c * f.values.segment((i + s) * nvd, nvd);
    if (ik > 0) o -= c * f.values.segment((i - s) * nvd, nvd);
  }
  return out;
}

WeightedOperatorSet::WeightedOperatorSet(DistributionField M) : M_(std::move(M)) {
  const PhaseGrid& g = M_.grid;
  if (!M_.values.allFinite() || !(M_.values.minCoeff() > 0))
    throw DomainError("WeightedOperatorSet: weight must be finite and strictly positive");
  sqrtM_ = M_.values.cwiseSqrt();
  const Index nvd = g.nvd(), nxd = g.nxd();

  mx_.resize(nxd);
  for (Index i = 0; i < nxd; ++i) mx_[i] = M_.values.segment(i * nvd, nvd).sum() * g.cellv();
  Index i0;
  mx_.maxCoeff(&i0);

  // Velocity factor along axis 0 through the central cells of the other velocity axes.
  Index vc = 0;
  for (int k = 1; k < g.d; ++k) vc += (g.nv / 2) * g.vstride(k);
  mv1_.resize(g.nv);
  for (int j = 0; j < g.nv; ++j) mv1_[j] = M_.values[i0 * nvd + vc + j * g.vstride(0)];
  mv1_ /= mv1_.sum() * g.hv();

  // Product structure M = mx(x) prod_k mv1(v_k) up to a constant.
  Vec lnmx = mx_.array().log(), lnmv = mv1_.array().log();
  std::vector<int> idx(g.d);
  double c0 = std::log(M_.values[0]) - lnmx[0];
  {
    g.vindex(0, idx.data());
    for (int k = 0; k < g.d; ++k) c0 -= lnmv[idx[k]];
  }
  Vec lnv(nvd);
  for (Index j = 0; j < nvd; ++j) {
    g.vindex(j, idx.data());
    lnv[j] = 0;
    for (int k = 0; k < g.d; ++k) lnv[j] += lnmv[idx[k]];
  }
  for (Index i = 0; i < nxd; ++i)
    for (Index j = 0; j < nvd; ++j) {
      double r = std::log(M_.values[i * nvd + j]) - lnmx[i] - lnv[j] - c0;
      if (std::abs(r) > 1e-8 * (1.0 + std::abs(lnmx[i]) + std::abs(lnv[j])))
        throw DomainError("WeightedOperatorSet: weight is not a product of spatial and Gaussian velocity factors");
    }

  cvp_.resize(g.nv - 1);
  cvm_.resize(g.nv - 1);
  for (int j = 0; j + 1 < g.nv; ++j) {
    double dpsi = lnmv[j] - lnmv[j + 1];
    cvp_[j] = bernoulli(dpsi);
    cvm_[j] = bernoulli(-dpsi);
  }

  xsep_ = true;
  cxp_.assign(g.d, Vec::Zero(nxd));
  cxm_.assign(g.d, Vec::Zero(nxd));
  Index xc = 0;
  for (int k = 0; k < g.d; ++k) xc += (g.nx / 2) * g.xstride(k);
  for (int k = 0; k < g.d; ++k) {
    const Index s = g.xstride(k);
    for (Index i = 0; i < nxd; ++i) {
      const Index ik = (i / s) % g.nx;
      if (ik + 1 >= g.nx) continue;
      double dpsi = lnmx[i] - lnmx[i + s];
      cxp_[k][i] = bernoulli(dpsi);
      cxm_[k][i] = bernoulli(-dpsi);
      // Reference line through the centre along axis k.
      Index iref = xc - ((xc / s) % g.nx) * s + ik * s;
      double ref = lnmx[iref] - lnmx[iref + s];
      if (std::abs(dpsi - ref) > 1e-9 * (1.0 + std::abs(ref))) xsep_ = false;
    }
  }
}

void WeightedOperatorSet::apply_axis_flux(const DistributionField& f, Axis axis, int k, Vec& out) const {
  const PhaseGrid& g = M_.grid;
  const Index nvd = g.nvd();
  if (axis == Axis::v) {
    const Index s = g.vstride(k);
    const double ih2 = 1.0 / (g.hv() * g.hv());
    for (Index i = 0; i < g.nxd(); ++i) {
      const double* a = f.values.data() + i * nvd;
      double* o = out.data() + i * nvd;
      for (Index j = 0; j < nvd; ++j) {
        const Index jk = (j / s) % g.nv;
        if (jk + 1 >= g.nv) continue;
        // h^2 J / h = -(B(-dpsi) f_b - B(dpsi) f_a)
        double J = -(cvm_[jk] * a[j + s] - cvp_[jk] * a[j]) * ih2;
        o[j] += J;
        o[j + s] -= J;
      }
    }
  } else {
    const Index s = g.xstride(k);
    const double ih2 = 1.0 / (g.hx() * g.hx());
    for (Index i = 0; i < g.nxd(); ++i) {
      const Index ik = (i / s) % g.nx;
      if (ik + 1 >= g.nx) continue;
      const double cp = cxp_[k][i] * ih2, cm = cxm_[k][i] * ih2;
      auto fa = f.values.segment(i * nvd, nvd);
      auto fb = f.values.segment((i + s) * nvd, nvd);
      Vec J = cp * fa - cm * fb;
      out.segment(i * nvd, nvd) += J;
      out.segment((i + s) * nvd, nvd) -= J;
    }
  }
}

DistributionField WeightedOperatorSet::apply_lambda_sq(const DistributionField& f, Axis axis) const {
  require_same_grid(f.grid, M_.grid, "apply_lambda_sq");
  DistributionField out = f;
  for (int k = 0; k < f.grid.d; ++k) apply_axis_flux(f, axis, k, out.values);
  return out;
}

DistributionField WeightedOperatorSet::apply_lambda_sq_full(const DistributionField& f) const {
  require_same_grid(f.grid, M_.grid, "apply_lambda_sq_full");
  DistributionField out = f;
  for (int k = 0; k < f.grid.d; ++k) {
    apply_axis_flux(f, Axis::x, k, out.values);
    apply_axis_flux(f, Axis::v, k, out.values);
  }
  return out;
}

namespace {

Mat tridiag_sym(const Vec& cp, const Vec& cm, double h) {
  const Index n = cp.size() + 1;
  const double ih2 = 1.0 / (h * h);
  Mat S = Mat::Identity(n, n);
  for (Index j = 0; j + 1 < n; ++j) {
    S(j, j) += cp[j] * ih2;
    S(j + 1, j + 1) += cm[j] * ih2;
    double off = -std::sqrt(cp[j] * cm[j]) * ih2;
    S(j, j + 1) = off;
    S(j + 1, j) = off;
  }
  return S;
}

}  // namespace

Mat WeightedOperatorSet::velocity_matrix_sym() const { return tridiag_sym(cvp_, cvm_, M_.grid.hv()); }

Mat WeightedOperatorSet::spatial_matrix_sym(int k) const {
  const PhaseGrid& g = M_.grid;
  if (xsep_) {
    const Index s = g.xstride(k);
    Index xc = 0;
    for (int l = 0; l < g.d; ++l) xc += (g.nx / 2) * g.xstride(l);
    Index base = xc - ((xc / s) % g.nx) * s;
    Vec cp(g.nx - 1), cm(g.nx - 1);
    for (int i = 0; i + 1 < g.nx; ++i) {
      cp[i] = cxp_[k][base + i * s];
      cm[i] = cxm_[k][base + i * s];
    }
    return tridiag_sym(cp, cm, g.hx());
  }
  const Index n = g.nxd();
  if (n > kDenseGroupLimit) throw CapabilityError("spatial operator too large for a dense matrix");
  const double ih2 = 1.0 / (g.hx() * g.hx());
  Mat S = Mat::Identity(n, n);
  for (int l = 0; l < g.d; ++l) {
    const Index s = g.xstride(l);
    for (Index i = 0; i < n; ++i) {
      if ((i / s) % g.nx + 1 >= g.nx) continue;
      double cp = cxp_[l][i], cm = cxm_[l][i];
      S(i, i) += cp * ih2;
      S(i + s, i + s) += cm * ih2;
      double off = -std::sqrt(cp * cm) * ih2;
      S(i, i + s) = off;
      S(i + s, i) = off;
    }
  }
  return S;
}

void WeightedOperatorSet::check_capability() const {
  const Index n = M_.grid.size();
  const bool direct = xsep_ || M_.grid.nxd() <= kDenseGroupLimit;
  if (direct ? n > kSeparableLimit : n > kLanczosLimit)
    throw CapabilityError("fractional powers are not offered on a grid of " + std::to_string(n) + " unknowns");
}

const WeightedOperatorSet::Spectra& WeightedOperatorSet::spectra() const {
  std::call_once(spectra_once_, [this] {
    check_capability();
    const PhaseGrid& g = M_.grid;
    auto sp = std::make_unique<Spectra>();
    Eigen::SelfAdjointEigenSolver<Mat> ev(velocity_matrix_sym());
    if (ev.info() != Eigen::Success) throw std::runtime_error("velocity eigensolve failed");
    sp->Qv = ev.eigenvectors();
    sp->lamv = ev.eigenvalues();
    std::vector<int> idx(g.d);
    sp->jointv.resize(g.nvd());
    for (Index j = 0; j < g.nvd(); ++j) {
      g.vindex(j, idx.data());
      double lam = 1.0;
      for (int k = 0; k < g.d; ++k) lam += sp->lamv[idx[k]] - 1.0;
      sp->jointv[j] = lam;
    }
    if (xsep_) {
      for (int k = 0; k < g.d; ++k) {
        Eigen::SelfAdjointEigenSolver<Mat> ex(spatial_matrix_sym(k));
        if (ex.info() != Eigen::Success) throw std::runtime_error("spatial eigensolve failed");
        sp->Qx.push_back(ex.eigenvectors());
        sp->lamx.push_back(ex.eigenvalues());
      }
      sp->jointx.resize(g.nxd());
      for (Index i = 0; i < g.nxd(); ++i) {
        g.xindex(i, idx.data());
        double lam = 1.0;
        for (int k = 0; k < g.d; ++k) lam += sp->lamx[k][idx[k]] - 1.0;
        sp->jointx[i] = lam;
      }
    } else if (g.nxd() <= kDenseGroupLimit) {
      Eigen::SelfAdjointEigenSolver<Mat> ex(spatial_matrix_sym(0));
      if (ex.info() != Eigen::Success) throw std::runtime_error("spatial eigensolve failed");
      sp->Qx.push_back(ex.eigenvectors());
      sp->lamx.push_back(ex.eigenvalues());
      sp->jointx = ex.eigenvalues();
    } else {
      sp->lanczos_x = true;
    }
    spectra_ = std::move(sp);
  });
  return *spectra_;
}

std::pair<double, double> WeightedOperatorSet::spectrum_bounds(Axis axis) const {
  const Spectra& sp = spectra();
  if (axis == Axis::v) return {sp.jointv.minCoeff(), sp.jointv.maxCoeff()};
  if (sp.lanczos_x) throw CapabilityError("spatial spectrum only available through Lanczos");
  return {sp.jointx.minCoeff(), sp.jointx.maxCoeff()};
}

Vec WeightedOperatorSet::to_sym(const DistributionField& f) const {
  require_same_grid(f.grid, M_.grid, "WeightedOperatorSet");
  return f.values.cwiseQuotient(sqrtM_) * std::sqrt(M_.grid.cell());
}

DistributionField WeightedOperatorSet::from_sym(const Vec& g) const {
  return DistributionField(M_.grid, g.cwiseProduct(sqrtM_) / std::sqrt(M_.grid.cell()));
}

void WeightedOperatorSet::transform(Vec& data, Axis axis, bool forward) const {
  const Spectra& sp = spectra();
  const PhaseGrid& g = M_.grid;
  const auto dims = g.dims();
  if (axis == Axis::v) {
    const Mat A = forward ? Mat(sp.Qv.transpose()) : sp.Qv;
    for (int k = 0; k < g.d; ++k) apply_along_axis(data, dims, g.d + k, A);
  } else if (xsep_) {
    for (int k = 0; k < g.d; ++k) apply_along_axis(data, dims, k, forward ? Mat(sp.Qx[k].transpose()) : sp.Qx[k]);
  } else {
    apply_along(data, 1, g.nxd(), g.nvd(), forward ? Mat(sp.Qx[0].transpose()) : sp.Qx[0]);
  }
}

Vec lanczos_function(const std::function<Vec(const Vec&)>& A, const Vec& b,
                     const std::function<double(double)>& fn, int m) {
  const double beta0 = b.norm();
  if (beta0 == 0) return Vec::Zero(b.size());
  m = static_cast<int>(std::min<Index>(m, b.size()));
  Mat V(b.size(), m);
  Vec alpha(m), beta(m);
  V.col(0) = b / beta0;
  int used = m;
  for (int j = 0; j < m; ++j) {
    Vec w = A(V.col(j));
    alpha[j] = V.col(j).dot(w);
    w -= alpha[j] * V.col(j);
    if (j > 0) w -= beta[j - 1] * V.col(j - 1);
    // Full reorthogonalization, twice.
    for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
    beta[j] = w.norm();
    if (j + 1 == m) break;
    if (beta[j] < 1e-13 * std::abs(alpha[j]) + 1e-300) {
      used = j + 1;
      break;
    }
    V.col(j + 1) = w / beta[j];
  }
  Mat T = Mat::Zero(used, used);
  for (int j = 0; j < used; ++j) {
    T(j, j) = alpha[j];
    if (j + 1 < used) T(j, j + 1) = T(j + 1, j) = beta[j];
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(T);
  Vec fe = es.eigenvalues().unaryExpr(fn);
  Vec y = es.eigenvectors() * fe.cwiseProduct(es.eigenvectors().row(0).transpose());
  return beta0 * (V.leftCols(used) * y);
}

Vec WeightedOperatorSet::lanczos_x_pow(const Vec& g, double gamma) const {
  auto op = [this](const Vec& y) {
    DistributionField f = from_sym(y);
    return to_sym(apply_lambda_sq(f, Axis::x));
  };
  return lanczos_function(op, g, [gamma](double l) { return std::pow(std::max(l, 1.0), 0.5 * gamma); }, kKrylov);
}

Vec WeightedOperatorSet::lanczos_full_pow(const Vec& g, double gamma) const {
  auto op = [this](const Vec& y) { return to_sym(apply_lambda_sq_full(from_sym(y))); };
  return lanczos_function(op, g, [gamma](double l) { return std::pow(std::max(l, 1.0), 0.5 * gamma); }, kKrylov);
}

namespace {

void scale_blocks(Vec& y, const Vec& jx, const Vec& jv, double gamma, int mode) {
  const Index nvd = jv.size(), nxd = y.size() / nvd;
  const double p = 0.5 * gamma;
  if (mode == 0) {  // x
    for (Index i = 0; i < nxd; ++i) y.segment(i * nvd, nvd) *= std::pow(jx[i], p);
  } else if (mode == 1) {  // v
    Vec s = jv.array().pow(p);
    for (Index i = 0; i < nxd; ++i) y.segment(i * nvd, nvd).array() *= s.array();
  } else {
    for (Index i = 0; i < nxd; ++i) y.segment(i * nvd, nvd).array() *= (jv.array() + (jx[i] - 1.0)).pow(p);
  }
}

void check_gamma(double gamma) {
  if (!(gamma >= -2.0 && gamma <= 2.0)) throw DomainError("fractional exponent must lie in [-2, 2]");
}

}  // namespace

DistributionField WeightedOperatorSet::apply_lambda_pow(const DistributionField& f, Axis axis, double gamma) const {
  check_gamma(gamma);
  const Spectra& sp = spectra();
  Vec y = to_sym(f);
  if (axis == Axis::x && sp.lanczos_x) return from_sym(lanczos_x_pow(y, gamma));
  transform(y, axis, true);
  scale_blocks(y, sp.jointx, sp.jointv, gamma, axis == Axis::x ? 0 : 1);
  transform(y, axis, false);
  return from_sym(y);
}

DistributionField WeightedOperatorSet::apply_lambda_pow_full(const DistributionField& f, double gamma) const {
  check_gamma(gamma);
  const Spectra& sp = spectra();
  Vec y = to_sym(f);
  if (sp.lanczos_x) return from_sym(lanczos_full_pow(y, gamma));
  transform(y, Axis::x, true);
  transform(y, Axis::v, true);
  scale_blocks(y, sp.jointx, sp.jointv, gamma, 2);
  transform(y, Axis::v, false);
  transform(y, Axis::x, false);
  return from_sym(y);
}

double WeightedOperatorSet::lambda_pow_norm(const DistributionField& f, Axis axis, double gamma) const {
  check_gamma(gamma);
  if (gamma == 0.0) return bnorm(f, M_);
  const Spectra& sp = spectra();
  Vec y = to_sym(f);
  if (axis == Axis::x && sp.lanczos_x) return lanczos_x_pow(y, gamma).norm();
  transform(y, axis, true);
  scale_blocks(y, sp.jointx, sp.jointv, gamma, axis == Axis::x ? 0 : 1);
  return y.norm();
}

double WeightedOperatorSet::lambda_pow_norm_full(const DistributionField& f, double gamma) const {
  check_gamma(gamma);
  if (gamma == 0.0) return bnorm(f, M_);
  const Spectra& sp = spectra();
  Vec y = to_sym(f);
  if (sp.lanczos_x) return lanczos_full_pow(y, gamma).norm();
  transform(y, Axis::x, true);
  transform(y, Axis::v, true);
  scale_blocks(y, sp.jointx, sp.jointv, gamma, 2);
  return y.norm();
}

double frac_norm(const DistributionField& f, double alpha, double beta, const WeightedOperatorSet& ops) {
  if (!(alpha >= 0 && alpha <= 2) || !(beta >= 0 && beta <= 2))
    throw DomainError("frac_norm: exponents must lie in [0, 2]");
  return ops.lambda_pow_norm(f, Axis::x, alpha) + ops.lambda_pow_norm(f, Axis::v, beta);
}

Mat dense_sym_matrix(const LinearMap& apply, const DistributionField& M) {
  const Index n = M.grid.size();
  const Vec s = M.values.cwiseSqrt() / std::sqrt(M.grid.cell());
  Mat A(n, n);
  DistributionField e(M.grid);
  for (Index j = 0; j < n; ++j) {
    e.values.setZero();
    e.values[j] = s[j];
    A.col(j) = apply(e).values.cwiseQuotient(s);
  }
  return A;
}

double opnorm_estimate(const LinearMap& apply, const DistributionField& M, int iters, const LinearMap& adjoint,
                       std::uint64_t seed, const DistributionField* start) {
  if (iters < 1) throw DomainError("opnorm_estimate: iters must be positive");
  const PhaseGrid& g = M.grid;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  DistributionField f(g);
  if (start) {
    require_same_grid(start->grid, g, "opnorm_estimate");
    f = *start;
  } else {
    for (Index i = 0; i < g.size(); ++i) f.values[i] = nd(rng) * std::sqrt(M.values[i]);
  }
  const double guard = 1e150;
  double best = 0.0;

  if (!adjoint) {
    if (g.size() > 4096) throw CapabilityError("opnorm_estimate: dense adjoint limited to 4096 unknowns");
    Mat A = dense_sym_matrix(apply, M);
    Vec y = f.values.cwiseQuotient(M.values.cwiseSqrt());
    for (int it = 0; it < iters; ++it) {
      double ny = y.norm();
      if (ny == 0) return best;
      y /= ny;
      Vec Ay = A * y;
      double est = Ay.norm();
      if (!std::isfinite(est) || est > guard) return std::numeric_limits<double>::infinity();
      best = std::max(best, est);
      y = A.transpose() * Ay;
    }
    return best;
  }

  for (int it = 0; it < iters; ++it) {
    double nf = bnorm(f, M);
    if (nf == 0) return best;
    f.values /= nf;
    DistributionField Af = apply(f);
    double est = bnorm(Af, M);
    if (!std::isfinite(est) || est > guard) return std::numeric_limits<double>::infinity();
    best = std::max(best, est);
    f = adjoint(Af);
  }
  return best;
}

}  // namespace krlx
