#include "helpers.hpp"
#include "krlx/witten.hpp"

#include <doctest.h>

using namespace krlx;
using namespace krlx::test;

namespace {

SpatialField ground_state(const PotentialSpec& V, const PhaseGrid& g) {
  SpatialField u = sample_potential(V, g);
  u.values() = (-0.5 * u.values().array()).exp().matrix();
  return u;
}

double ground_residual(int nx) {
  PhaseGrid g(1, nx, 8, 8, 4);
  PotentialSpec V = PotentialSpec::quadratic(1, {1.0});
  SpatialField u = ground_state(V, g);
  return witten_apply(u, V).values().norm() / u.values().norm();
}

}  // namespace

TEST_CASE("harmonic Witten operator has the oscillator spectrum") {
  PhaseGrid g(1, 256, 8, 10, 4);
  SpectralGapReport r = spectral_gap(PotentialSpec::quadratic(1, {1.0}), g, 4);
  REQUIRE(r.eigenvalues.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(r.eigenvalues[k] == doctest::Approx(k).epsilon(1e-4));
  CHECK(r.gap == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.kappa0 == 0.5);
  CHECK(r.kappa0 <= r.gap);
  CHECK(r.kappa0 <= 0.5);
  CHECK(r.C0 == doctest::Approx(64 * (8 + 3 * r.Ce) / 0.5));
  CHECK(r.kappa == doctest::Approx(r.kappa0 / r.C0));
  CHECK(r.ground_state_error < 1e-4);
  CHECK(r.boundary_value < 1e-10);
  CHECK_FALSE(r.ambiguous);
}

TEST_CASE("two-dimensional harmonic gap uses the d/2 cap") {
  PhaseGrid g(2, 48, 8, 8, 4);
  SpectralGapReport r = spectral_gap(PotentialSpec::quadratic(2, {1.0}), g, 4);
  CHECK(r.gap == doctest::Approx(1.0).epsilon(2e-3));
  CHECK(r.kappa0 == std::min(r.gap, 1.0));
  CHECK(std::abs(r.eigenvalues[0]) < 1e-4);
}

TEST_CASE("sparse eigensolver agrees with the separable closed form") {
  // 96^2 unknowns is beyond the dense threshold.
  PhaseGrid g(2, 96, 8, 8, 4);
  PotentialSpec V = PotentialSpec::quadratic(2, {1.0, 1.5});
  SpectralGapReport r = spectral_gap(V, g, 4);
  CHECK_FALSE(r.dense);
  // Levels n1 + 2.25 n2.
  std::vector<double> exact = {0, 1, 2, 2.25};
  for (int k = 0; k < 4; ++k) CHECK(r.eigenvalues[k] == doctest::Approx(exact[k]).epsilon(1e-3));
}

TEST_CASE("Witten operator annihilates its ground state and is symmetric") {
  double r1 = ground_residual(64), r2 = ground_residual(128);
  CHECK(r2 < 1e-4);
  CHECK(r1 / r2 > 3.5);

  PhaseGrid g(2, 16, 8, 5, 4);
  WittenPotential wp = WittenPotential::from_spec(PotentialSpec::quartic(2, 0.5, 0.5), g);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  SpatialField u(g, 1), w(g, 1);
  for (Index i = 0; i < g.nxd(); ++i) {
    u.values()[i] = nd(rng);
    w.values()[i] = nd(rng);
  }
  double a = witten_apply(u, wp).values().dot(w.values());
  double b = u.values().dot(witten_apply(w, wp).values());
  CHECK(std::abs(a - b) < 1e-10 * std::abs(a));
  SparseMat A = witten_matrix(wp);
  CHECK((Mat(A) - Mat(A).transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("eigenvalues are insensitive to enlarging the box") {
  PotentialSpec V = PotentialSpec::quartic(1, 1.0, 0.0);
  PhaseGrid g1(1, 200, 8, 5, 4), g2(1, 250, 8, 6.25, 4);
  SpectralGapReport a = spectral_gap(V, g1, 3), b = spectral_gap(V, g2, 3);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(a.eigenvalues[k] - b.eigenvalues[k]) < 1e-6);
}

TEST_CASE("sampled potentials reproduce the analytic operator") {
  PhaseGrid g(1, 256, 8, 8, 4);
  PotentialSpec V = PotentialSpec::double_well(1, 1.0, 1.0);
  SpectralGapReport a = spectral_gap(V, g, 3);
  SpectralGapReport b = spectral_gap(WittenPotential::from_samples(sample_potential(V, g)), 3);
  for (int k = 0; k < 3; ++k) CHECK(b.eigenvalues[k] == doctest::Approx(a.eigenvalues[k]).epsilon(1e-4));
}

TEST_CASE("perturbed gap stays above kappa0 / 4") {
  PhaseGrid g(1, 256, 8, 10, 4);
  PotentialSpec Ve = PotentialSpec::quadratic(1, {1.0});
  SpectralGapReport base = spectral_gap(Ve, g, 4);

  EquilibriumState e0 = solve_poisson_emden(Ve, 0.0, g);
  PerturbedGapReport p0 = perturbed_gap_check(Ve, e0, base);
  CHECK(p0.gap_inf == doctest::Approx(base.gap).epsilon(1e-8));

  EquilibriumState e1 = solve_poisson_emden(Ve, 0.05, g);
  PerturbedGapReport p1 = perturbed_gap_check(Ve, e1, base);
  CHECK(p1.passes);
  CHECK(p1.margin > 0);
  CHECK(p1.threshold == doctest::Approx(base.kappa0 / 4));

  // Deviation from the unperturbed gap is linear in eps0.
  std::vector<double> dev;
  for (double eps0 : {0.025, 0.05, 0.1}) {
    EquilibriumState e = solve_poisson_emden(Ve, eps0, g);
    dev.push_back(std::abs(perturbed_gap_check(Ve, e, base).gap_inf - base.gap) / eps0);
  }
  for (double c : dev) CHECK(c < 2 * dev.front() + 1e-9);
}

TEST_CASE("an unresolved ground state is reported") {
  // e^{-V/2} does not decay inside a box this small.
  PhaseGrid g(1, 64, 8, 1.0, 4);
  CHECK_THROWS_AS(spectral_gap(PotentialSpec::quadratic(1, {1.0}), g, 4), DomainError);
}
