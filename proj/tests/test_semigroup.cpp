#include "helpers.hpp"
#include "krlx/semigroup.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

using namespace krlx;
using namespace krlx::test;

namespace {

KfpPropagator make_prop(const PhaseGrid& g, double omega, double cfl, Limiter lim = Limiter::minmod) {
  return KfpPropagator(g, sample_potential(PotentialSpec::quadratic(g.d, {omega}), g), max_dt(g, cfl), lim);
}

DistributionField diff(const DistributionField& a, const DistributionField& b) {
  return DistributionField(a.grid, a.values - b.values);
}

}  // namespace

TEST_CASE("CFL bound is enforced") {
  PhaseGrid g(1, 32, 32, 8, 8);
  SpatialField V = sample_potential(PotentialSpec::quadratic(1, {1.0}), g);
  CHECK_THROWS_AS(KfpPropagator(g, V, max_dt(g, 0.95)), CflError);
  CHECK(KfpPropagator(g, V, max_dt(g, 0.89)).cfl() <= 0.9);
}

TEST_CASE("velocity step is a stochastic matrix fixing the discrete Gaussian") {
  PhaseGrid g(1, 16, 40, 6, 7);
  KfpPropagator prop = make_prop(g, 1.0, 0.5);
  for (double tau : {1e-3, 0.05, 0.7}) {
    Mat P = prop.ou_matrix(tau);
    CHECK(P.minCoeff() >= 0);
    CHECK((P.colwise().sum().array() - 1).abs().maxCoeff() < 1e-14);
    Vec mv(g.nv);
    for (int j = 0; j < g.nv; ++j) mv[j] = prop.maxwellian()(g.nx / 2, j);
    CHECK((P * mv - mv).cwiseAbs().maxCoeff() < 1e-14 * mv.maxCoeff());
  }
  // Semigroup property of the exact exponential.
  CHECK((prop.ou_matrix(0.3) * prop.ou_matrix(0.2) - prop.ou_matrix(0.5)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("the Maxwellian is stationary for linear evolution") {
  for (int d : {1, 2}) {
    PhaseGrid g(d, d == 1 ? 64 : 16, d == 1 ? 64 : 16, 8, 7);
    KfpPropagator prop = make_prop(g, 1.0, 0.8);
    const DistributionField& M = prop.maxwellian();
    CHECK(bnorm(DistributionField(g, prop.generator(M.values)), M) < 1e-12);
    DistributionField f = prop.propagate(M, 2.0);
    CHECK(bnorm(diff(f, M), M) / 2.0 < 1e-6);
  }
}

TEST_CASE("mass, positivity, non-expansiveness and the maximum bound") {
  PhaseGrid g(1, 64, 64, 8, 8);
  KfpPropagator prop = make_prop(g, 1.0, 0.8);
  const DistributionField& M = prop.maxwellian();
  DistributionField f = rough_probe_v(g);
  const double m0 = f.mass(), max0 = f.values.maxCoeff();
  Vec u = f.values;
  double t = 0;
  for (int n = 0; n < 60; ++n) {
    double before = bnorm(DistributionField(g, u), M);
    prop.step(u, prop.dt());
    t += prop.dt();
    DistributionField cur(g, u);
    CHECK(bnorm(cur, M) <= (1 + 5 * prop.dt()) * before);
    CHECK(std::abs(cur.mass() - m0) < 1e-12);
    CHECK(u.minCoeff() >= -1e-14);
    CHECK(u.maxCoeff() <= std::exp(g.d * t) * max0 * (1 + 1e-8));
  }
}

TEST_CASE("moments follow the Ornstein-Uhlenbeck covariance flow") {
  // dx = v dt, dv = -x dt - v dt + sqrt(2) dW; mean and covariance by an independent RK4.
  PhaseGrid g(1, 128, 128, 8, 8);
  KfpPropagator prop = make_prop(g, 1.0, 0.8, Limiter::none);
  const double x0 = 1.0, v0 = 0.5, s = 0.8, T = 1.0;
  DistributionField f = prop.propagate(gaussian_bump(g, x0, s, v0), T);

  Eigen::Matrix2d A;
  A << 0, 1, -1, -1;
  Eigen::Matrix2d Q = Eigen::Matrix2d::Zero();
  Q(1, 1) = 2;
  auto rhs = [&](const Eigen::Vector2d& m, const Eigen::Matrix2d& S, Eigen::Vector2d& dm, Eigen::Matrix2d& dS) {
    dm = A * m;
    dS = A * S + S * A.transpose() + Q;
  };
  Eigen::Vector2d m(x0, v0);
  Eigen::Matrix2d S = Eigen::Vector2d(s * s, 1.0).asDiagonal();
  const int n = 10000;
  const double h = T / n;
  for (int k = 0; k < n; ++k) {
    Eigen::Vector2d k1, k2, k3, k4;
    Eigen::Matrix2d l1, l2, l3, l4;
    rhs(m, S, k1, l1);
    rhs(m + h / 2 * k1, S + h / 2 * l1, k2, l2);
    rhs(m + h / 2 * k2, S + h / 2 * l2, k3, l3);
    rhs(m + h * k3, S + h * l3, k4, l4);
    m += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    S += h / 6 * (l1 + 2 * l2 + 2 * l3 + l4);
  }

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.nv; ++j) {
      double w = f(i, j) * g.cell();
      mean += w * Eigen::Vector2d(g.x(i), g.v(j));
    }
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.nv; ++j) {
      Eigen::Vector2d z = Eigen::Vector2d(g.x(i), g.v(j)) - mean;
      cov += f(i, j) * g.cell() * z * z.transpose();
    }
  CHECK((mean - m).cwiseAbs().maxCoeff() < 5e-3);
  CHECK((cov - S).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("Strang splitting is second order in time") {
  PhaseGrid g(1, 48, 48, 7, 7);
  SpatialField V = sample_potential(PotentialSpec::quadratic(1, {1.0}), g);
  DistributionField f0 = gaussian_bump(g, 1.0, 1.0, 0.5);
  const double dt = max_dt(g, 0.8), T = 0.8;
  std::vector<DistributionField> out;
  for (double h : {dt, dt / 2, dt / 4}) out.push_back(KfpPropagator(g, V, h, Limiter::none).propagate(f0, T));
  const DistributionField& M = out[0];
  double e1 = bnorm(diff(out[0], out[1]), M), e2 = bnorm(diff(out[1], out[2]), M);
  CHECK(e1 / e2 > 3.0);
}

TEST_CASE("semigroup property within the scheme error") {
  PhaseGrid g(1, 48, 48, 7, 7);
  SpatialField V = sample_potential(PotentialSpec::quadratic(1, {1.0}), g);
  const double dt = max_dt(g, 0.8);
  KfpPropagator prop(g, V, dt), fine(g, V, dt / 2);
  DistributionField f0 = gaussian_bump(g, 1.0, 1.0, 0.5);
  const double t = 0.37, s = 0.41;
  DistributionField whole = prop.propagate(f0, t + s);
  DistributionField parts = prop.propagate(prop.propagate(f0, t), s);
  double scheme = bnorm(diff(whole, fine.propagate(f0, t + s)), prop.maxwellian());
  CHECK(bnorm(diff(whole, parts), prop.maxwellian()) <= 2 * scheme);

  PropagatorConfig cfg{V, dt, Limiter::minmod, {0.0, 0.2, 0.5}};
  auto traj = kfp_propagate(f0, cfg);
  REQUIRE(traj.size() == 3);
  CHECK(traj[0].f.values == f0.values);
  CHECK(traj[2].t == 0.5);
    DistributionField stepped = prop.propagate(prop.propagate(f0, 0.2), 0.3);
  CHECK((traj[2].f.values - stepped.values).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("probes") {
  PhaseGrid g(1, 32, 32, 6, 6);
  KfpPropagator prop = make_prop(g, 1.0, 0.8);
  CHECK(rough_probe_v(g).mass() == doctest::Approx(1.0));
  CHECK(rough_probe_x(g).mass() == doctest::Approx(1.0));
  DistributionField w = wave_probe_v(prop, 2.0);
  CHECK(w(3, 16) == doctest::Approx(prop.maxwellian()(3, 16) * std::cos(2.0 * g.v(16))));
  DistributionField r = reflect_v(reflect_v(w));
  CHECK(r.values == w.values);
}

TEST_CASE("short-time exponents: smooth probes do not blow up") {
  PhaseGrid g(1, 64, 64, 7, 7);
  KfpPropagator prop = make_prop(g, 1.0, 0.8, Limiter::none);
  DistributionField smooth = prop.maxwellian();
  smooth.values += 0.3 * times_v(prop.maxwellian()).values;
  SlopeReport r = verify_short_time_exponents(prop, 1.0, 1.0, {smooth});
  CHECK(std::abs(r.fit_v.slope) < 0.1);
  CHECK(std::abs(r.fit_x.slope) < 0.1);
  CHECK(r.target_v == -0.5);
  CHECK(r.target_x == -1.5);
  CHECK_THROWS_AS(verify_short_time_exponents(prop, 1.0, 1.0, {DistributionField(g)}), DomainError);
  CHECK_THROWS_AS(verify_short_time_exponents(prop, 1.5, 1.0, {smooth}), DomainError);
}

TEST_CASE("zero-mass decay against the dense spectrum") {
  PhaseGrid g(1, 16, 16, 6, 6);
  KfpPropagator prop = make_prop(g, 1.0, 0.8, Limiter::none);
  Mat G = Mat(assemble_generator(prop));
  // Columns of the generator are the generator applied to unit vectors.
  Vec e = Vec::Zero(g.size());
  e[37] = 1;
  CHECK((G.col(37) - prop.generator(e)).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::EigenSolver<Mat> es(G);
  double lam = 1e300;
  for (Index i = 0; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()[i]) > 1e-8) lam = std::min(lam, -es.eigenvalues()[i].real());
  EigenOracle o = least_damped_modes(prop, 10);
  CHECK(o.lambda_star == doctest::Approx(lam).epsilon(1e-8));

  DecayFit zero = verify_perp_decay(prop, DistributionField(g), 5.0);
  CHECK(zero.degenerate);

  PhaseGrid g2(1, 40, 40, 7, 7);
  KfpPropagator p2 = make_prop(g2, 1.0, 0.8, Limiter::none);
  DistributionField f0 = project_perp(gaussian_bump(g2, 1.0, 0.7, 0.5), p2.maxwellian());
  DecayFit r = verify_perp_decay(p2, f0, 8.0, 0.5);
  CHECK(r.max_mass < 1e-12);
  CHECK(std::abs(r.rate - r.lambda_star) < 0.25 * r.lambda_star);
  CHECK(r.ratio_kappa0 == doctest::Approx(r.rate / 0.5));
  CHECK_THROWS_AS(verify_perp_decay(p2, gaussian_bump(g2, 1.0, 0.7, 0.5), 8.0), DomainError);
  CHECK_THROWS_AS(verify_perp_decay(p2, f0, 3.0), DomainError);
}

TEST_CASE("conjugated norms and short-time continuity") {
  PhaseGrid g(1, 32, 32, 6, 6);
  KfpPropagator prop = make_prop(g, 1.0, 0.8, Limiter::none);
  DistributionField smooth = gaussian_bump(g, 1.0, 1.0, 0.5);
  ConjugationReport c0 = verify_conjugation_and_continuity(prop, 0.0, 2.0, {smooth});
  CHECK(c0.ratio_sup <= 1 + 1e-6);
  CHECK(c0.fit.slope >= 0.85);
  CHECK(c0.fit.slope <= 1.15);
  CHECK(c0.target == 1.0);
  ConjugationReport c1 = verify_conjugation_and_continuity(prop, 1.0, 2.0, {smooth});
  CHECK(std::isfinite(c1.ratio_sup));
  CHECK(c1.ratio_sup < 10);
  ConjugationReport cm = verify_conjugation_and_continuity(prop, 1.0, 1.0, {prop.maxwellian()});
  CHECK(cm.skipped);
  CHECK_THROWS_AS(verify_conjugation_and_continuity(prop, 2.5, 1.0, {smooth}), DomainError);
}
