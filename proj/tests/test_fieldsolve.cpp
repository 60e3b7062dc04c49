#include "helpers.hpp"
#include "krlx/fieldsolve.hpp"
#include "krlx/transport.hpp"

#include <doctest.h>

using namespace krlx;
using namespace krlx::test;

namespace {

const double kPi = std::acos(-1.0);

/// Unit-mass Gaussian density exp(-|x|^2/2) normalized on the grid.
SpatialField gaussian_density(const PhaseGrid& g, double shift = 0.0) {
  SpatialField rho(g, 1);
  for (Index c = 0; c < g.nxd(); ++c) {
    Vec x = cell_center(g, c);
    x[0] -= shift;
    rho.comp[0][c] = std::exp(-0.5 * x.squaredNorm());
  }
  rho.comp[0] /= rho.comp[0].sum() * g.cellx();
  return rho;
}

}  // namespace

TEST_CASE("Green functions and sphere areas") {
  CHECK(sphere_area(1) == 2.0);
  CHECK(sphere_area(2) == doctest::Approx(2 * kPi));
  CHECK(sphere_area(3) == doctest::Approx(4 * kPi));
  CHECK(green(1, 2.0) == doctest::Approx(-1.0));
  CHECK(green(2, std::exp(1.0)) == doctest::Approx(-1 / (2 * kPi)));
  CHECK(green(3, 0.5) == doctest::Approx(1 / (2 * kPi)));
}

TEST_CASE("density integrates velocity") {
  PhaseGrid g(1, 32, 64, 8, 9);
  CHECK(density(DistributionField(g)).values().cwiseAbs().maxCoeff() == 0.0);
  DistributionField f = gaussian_bump(g, 1.0, 0.8, 0.3);
  SpatialField rho = density(f);
  CHECK(rho.values().sum() * g.cellx() == doctest::Approx(f.mass()).epsilon(1e-14));
  // The velocity marginal of M is the normalized spatial factor.
  SpatialField V = sample_potential(PotentialSpec::quartic(1, 0.5, 0.2), g);
  DistributionField M = maxwellian(V, g).first;
  Vec expect = (-V.values().array()).exp().matrix();
  expect /= expect.sum() * g.cellx();
  CHECK((density(M).values() - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("radial field follows the shell theorem") {
  PhaseGrid g(3, 32, 8, 8, 4);
  SpatialField E = field_from_density(gaussian_density(g));
  double err = 0, scale = 0;
  for (Index c = 0; c < g.nxd(); ++c) {
    Vec x = cell_center(g, c);
    double r = x.norm();
    double m = std::erf(r / std::sqrt(2.0)) - std::sqrt(2 / kPi) * r * std::exp(-0.5 * r * r);
    for (int k = 0; k < 3; ++k) {
      double exact = -x[k] / r * m / (4 * kPi * r * r);
      err = std::max(err, std::abs(E.comp[k][c] - exact));
      scale = std::max(scale, std::abs(exact));
    }
  }
  CHECK(err < 1e-2 * scale);

  // Far field at 0.9 Lx along the first axis.
  int i = static_cast<int>(std::floor((0.9 * g.Lx + g.Lx) / g.hx()));
  int mid = g.nx / 2;
  Index c = (Index(i) * g.nx + mid) * g.nx + mid;
  double r = cell_center(g, c).norm();
  double far = 1.0 / (4 * kPi * r * r);
  Vec e(3);
  for (int k = 0; k < 3; ++k) e[k] = E.comp[k][c];
  CHECK(std::abs(e.norm() - far) < 0.05 * far);
}

TEST_CASE("zero density gives zero field; point-symmetric density gives an odd field") {
  PhaseGrid g(2, 24, 8, 5, 4);
  SpatialField zero(g, 1);
  CHECK(field_from_density(zero).sup_norm() == 0.0);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  SpatialField rho(g, 1);
  const Index n = g.nxd();
  for (Index c = 0; c < n / 2; ++c) rho.comp[0][c] = rho.comp[0][n - 1 - c] = u(rng);
  SpatialField E = field_from_density(rho);
  double odd = 0;
  for (int k = 0; k < 2; ++k)
    for (Index c = 0; c < n; ++c) odd = std::max(odd, std::abs(E.comp[k][c] + E.comp[k][n - 1 - c]));
  CHECK(odd < 1e-10);
}

TEST_CASE("minus divergence of the field reproduces the density, converging under refinement") {
  auto interior_error = [](int nx) {
    PhaseGrid g(2, nx, 8, 6, 4);
    SpatialField rho = gaussian_density(g, 0.7);
    SpatialField div = divergence4(field_from_density(rho));
    double err = 0;
    for (Index c = 0; c < g.nxd(); ++c)
      if (cell_center(g, c).cwiseAbs().maxCoeff() < 3.0) err = std::max(err, std::abs(-div.values()[c] - rho.values()[c]));
    return err;
  };
  double e1 = interior_error(24), e2 = interior_error(48);
  CHECK(e2 < 0.1);
  CHECK(e1 / e2 > 3.5);
}

TEST_CASE("potential solves the fourth-order discrete Poisson equation after polishing") {
  PhaseGrid g(3, 20, 8, 6, 4);
  SpatialField rho = gaussian_density(g);
  SpatialField U = potential_from_density(rho);
  SpatialField P = poisson_polish(U, rho, 1e-12);
  CHECK(poisson_residual(P, rho) < 1e-10);
  // Polishing only moves U by the discretization error.
  CHECK((P.values() - U.values()).cwiseAbs().maxCoeff() < 1e-2 * U.values().maxCoeff());
  SpatialField U2, E2;
  potential_and_field(rho, U2, E2);
  CHECK((U2.values() - U.values()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("Sobolev norms of densities") {
  PhaseGrid g(1, 64, 8, 8, 4);
  SpatialField rho = gaussian_density(g);
  double l2 = std::sqrt(rho.values().squaredNorm() * g.cellx());
  CHECK(hs_norm(rho, 0) == doctest::Approx(l2).epsilon(1e-10));
  CHECK(hs_norm(rho, 1) > hs_norm(rho, 0.5));
  CHECK(hs_norm(rho, 0.5) > l2);
}

TEST_CASE("field bound ratios are finite and stable under refinement") {
  auto samples_on = [](const PhaseGrid& g, const DistributionField& M) {
    std::vector<DistributionField> out;
    std::mt19937_64 rng(42);
    std::normal_distribution<double> nd;
    for (int s = 0; s < 20; ++s) {
      double c[5];
      for (double& x : c) x = nd(rng);
      DistributionField f = M;
      int idx[3];
      for (Index i = 0; i < g.nxd(); ++i) {
        g.xindex(i, idx);
        double x0 = g.x(idx[0]), x1 = g.x(idx[1]);
        for (Index j = 0; j < g.nvd(); ++j) {
          g.vindex(j, idx);
          double v0 = g.v(idx[0]);
          f(i, j) *= c[0] * x0 + c[1] * x1 + c[2] * v0 + c[3] * x0 * x1 + c[4] * (v0 * v0 - 1);
        }
      }
      out.push_back(f);
    }
    out.push_back(DistributionField(g));
    return out;
  };
  PhaseGrid g(2, 10, 10, 6, 6), gf(2, 20, 20, 6, 6);
  SpatialField V = sample_potential(PotentialSpec::quadratic(2, {1.0}), g);
  SpatialField Vf = sample_potential(PotentialSpec::quadratic(2, {1.0}), gf);
  DistributionField M = maxwellian(V, g).first, Mf = maxwellian(Vf, gf).first;
  WeightedOperatorSet ops(M), opsf(Mf);
  auto s = samples_on(g, M);
  auto sf = samples_on(gf, Mf);
  FieldBoundReport r = check_field_bounds(s, 0.1, ops, &sf, &opsf);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0] == 20);
  CHECK(r.ratios.size() == 20);
  CHECK(std::isfinite(r.max_ratio));
  CHECK(r.min_ratio > 0);
  CHECK(r.refined_max_ratio < 2 * r.max_ratio);
  CHECK(r.exponent == doctest::Approx(0.1));
}

TEST_CASE("density Sobolev ratios are bounded on random smooth samples") {
  PhaseGrid g(1, 32, 32, 7, 7), gf(1, 64, 64, 7, 7);
  auto worst = [](const PhaseGrid& gg, double alpha) {
    DistributionField M = maxwellian(sample_potential(PotentialSpec::quadratic(1, {1.0}), gg), gg).first;
    WeightedOperatorSet ops(M);
    double w = 0;
    for (int s = 0; s < 10; ++s) {
      std::mt19937_64 rng(100 + s);
      std::normal_distribution<double> nd;
      double a = nd(rng), b = nd(rng), c = nd(rng);
      DistributionField h = M;
      for (int i = 0; i < gg.nx; ++i)
        for (int j = 0; j < gg.nv; ++j) h(i, j) *= a * gg.x(i) + b * gg.x(i) * gg.x(i) + c * gg.v(j) + 1;
      w = std::max(w, hs_norm(density(h), alpha) / ops.lambda_pow_norm(h, Axis::x, alpha));
    }
    return w;
  };
  for (double alpha : {0.0, 0.5, 1.0}) {
    double a = worst(g, alpha), b = worst(gf, alpha);
    CHECK(std::isfinite(a));
    CHECK(b < 2 * a);
  }
}

TEST_CASE("short-time field exponent on a stationary datum is zero") {
  PhaseGrid g(3, 8, 8, 5, 5);
  SpatialField V = sample_potential(PotentialSpec::quadratic(3, {1.0}), g);
  KfpPropagator prop(g, V, max_dt(g, 0.8));
  TrajectoryFn run = [&prop](const DistributionField& f, const std::vector<double>& t) { return prop.trajectory(f, t); };
  const DistributionField& M = prop.maxwellian();
  ExponentReport r;
  try {
    r = short_time_field_check(M, 0.6, 0.01, run, 5);
  } catch (const DomainError&) {
    // Exactly zero increments leave no usable points, which is also a pass.
  }
  for (double v : r.values) CHECK(v < 1e-10);
  CHECK(r.target == doctest::Approx(0.19));
  CHECK_THROWS_AS(short_time_field_check(M, 0.9, 0.01, run, 5), DomainError);
  PhaseGrid g1(1, 16, 16, 5, 5);
  CHECK_THROWS_AS(short_time_field_check(DistributionField(g1), 0.6, 0.01, run, 5), DomainError);
}

TEST_CASE("line fits and log spacing") {
  std::vector<double> x = {0, 1, 2, 3}, y = {1, 3, 5, 7};
  LineFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.rms < 1e-14);
  auto t = logspace(1e-3, 1e-1, 5);
  CHECK(t.front() == doctest::Approx(1e-3));
  CHECK(t.back() == doctest::Approx(1e-1));
  CHECK(t[2] == doctest::Approx(1e-2));
}
