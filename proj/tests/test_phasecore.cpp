#include "helpers.hpp"
#include "krlx/io.hpp"
#include "krlx/operators.hpp"

#include <Eigen/SVD>
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace krlx;
using namespace krlx::test;

namespace {

DistributionField unit_maxwellian(const PhaseGrid& g) {
  return maxwellian(sample_potential(PotentialSpec::quadratic(g.d, {1.0}), g), g).first;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("krlx_test_" + name)).string();
}

}  // namespace

TEST_CASE("grid geometry and validation") {
  PhaseGrid g(2, 16, 8, 4, 3);
  CHECK(g.hx() == doctest::Approx(0.5));
  CHECK(g.hv() == doctest::Approx(0.75));
  CHECK(g.nxd() == 256);
  CHECK(g.nvd() == 64);
  CHECK(g.size() == 256 * 64);
  CHECK(g.x(0) == doctest::Approx(-3.75));
  CHECK(g.v(g.nv - 1) == doctest::Approx(2.625));
  CHECK_THROWS_AS(PhaseGrid(1, 4, 16, 1, 1), DomainError);
  CHECK_THROWS_AS(PhaseGrid(4, 8, 8, 1, 1), DomainError);
  CHECK_THROWS_AS(PhaseGrid(1, 8, 8, -1, 1), DomainError);

  int idx[3];
  g.xindex(g.xstride(0) * 3 + 5, idx);
  CHECK(idx[0] == 3);
  CHECK(idx[1] == 5);
}

TEST_CASE("field mass is the quadrature of the values") {
  PhaseGrid g(1, 16, 16, 2, 2);
  DistributionField f(g, Vec::Constant(g.size(), 2.0));
  CHECK(f.mass() == doctest::Approx(2.0 * 4 * 4));
}

TEST_CASE("binary field round trip") {
  PhaseGrid g(2, 8, 8, 3, 4);
  DistributionField f = gaussian_bump(g, 0.5, 1.0, 0.0);
  std::string p = tmp_path("dist.krlx");
  write_field(p, f);
  DistributionField r = read_distribution(p);
  CHECK(r.grid == g);
  CHECK((r.values - f.values).cwiseAbs().maxCoeff() == 0.0);
  {
    std::ifstream in(p, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::string(magic, 4) == "KRLX");
  }
  SpatialField s(g, 2);
  s.comp[0].setLinSpaced(-1, 1);
  s.comp[1].setConstant(3);
  write_field(p, s);
  SpatialField sr = read_spatial(p);
  CHECK(sr.ncomp() == 2);
  CHECK(sr.comp[0] == s.comp[0]);
  CHECK_THROWS(read_distribution(p));

  std::ofstream(p, std::ios::binary) << "JUNKJUNKJUNK";
  CHECK_THROWS(read_distribution(p));
  std::remove(p.c_str());
}

TEST_CASE("csv writer embeds provenance and formats deterministically") {
  std::string p = tmp_path("w.csv");
  CsvWriter w(p, {{"grid.nx", "8"}}, {"t", "value"});
  w.row({0.1, 1.0 / 3.0});
  CHECK_THROWS(w.row({1.0}));
  w.close();
  std::ifstream in(p);
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  CHECK(l1 == "# grid.nx = 8");
  CHECK(l2 == "t,value");
  CHECK(l3 == "0.1,0.3333333333333333");
  CHECK(fmt(std::stod(fmt(M_PI))) == fmt(M_PI));
  std::remove(p.c_str());
}

TEST_CASE("B inner product") {
  PhaseGrid g(1, 64, 64, 9, 9);
  DistributionField M = unit_maxwellian(g);
  CHECK(b_inner(M, M, M) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b_inner(DistributionField(g), M, M) == 0.0);
  // Second moment of a unit Gaussian.
  CHECK(bnorm(times_x(M), M) == doctest::Approx(1.0).epsilon(1e-8));
  DistributionField f = random_field(M, 3), h = random_field(M, 4);
  CHECK(b_inner(f, h, M) == doctest::Approx(b_inner(h, f, M)));

  CHECK_THROWS_AS(b_inner(M, DistributionField(PhaseGrid(1, 32, 64, 9, 9)), M), ShapeError);
  DistributionField bad = M;
  bad.values[5] = 0.0;
  CHECK_THROWS_AS(bnorm(M, bad), DomainError);
}

TEST_CASE("projection onto zero mass") {
  PhaseGrid g(1, 32, 32, 8, 8);
  DistributionField M = unit_maxwellian(g);
  CHECK(project_perp(M, M).values.cwiseAbs().maxCoeff() < 1e-15);
  DistributionField f = project_perp(random_field(M, 1), M);
  CHECK(std::abs(f.mass()) < 1e-15);
  DistributionField again = project_perp(f, M);
  CHECK((again.values - f.values).cwiseAbs().maxCoeff() < 1e-15);
  DistributionField twoM = f;
  twoM.values += 2 * M.values;
  CHECK((project_perp(twoM, M).values - f.values).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bernoulli function") {
  CHECK(bernoulli(0.0) == 1.0);
  CHECK(bernoulli(1e-12) == doctest::Approx(1.0 - 0.5e-12));
  CHECK(bernoulli(2.0) == doctest::Approx(2.0 / std::expm1(2.0)));
  CHECK(bernoulli(-3.0) - bernoulli(3.0) == doctest::Approx(3.0));
}

TEST_CASE("Lambda^2 fixes the Maxwellian and acts as a ladder on v M") {
  auto ladder_error = [](int nv) {
    PhaseGrid g(1, 48, nv, 8, 9);
    DistributionField M = unit_maxwellian(g);
    WeightedOperatorSet ops(M);
    for (Axis a : {Axis::x, Axis::v})
      CHECK((ops.apply_lambda_sq(M, a).values - M.values).cwiseAbs().maxCoeff() < 1e-12 * M.values.maxCoeff());
    DistributionField vM = times_v(M);
    DistributionField r = ops.apply_lambda_sq(vM, Axis::v);
    r.values -= 2 * vM.values;
    return bnorm(r, M) / bnorm(vM, M);
  };
  // Lambda_v^2 (v M) = 2 v M up to a second-order discretization error.
  double e1 = ladder_error(64), e2 = ladder_error(128);
  CHECK(e2 < 5e-3);
  CHECK(e1 / e2 > 3.5);
}

TEST_CASE("Lambda^2 is B-self-adjoint, bounded below by one and keeps zero mass") {
  for (int d : {1, 2}) {
    PhaseGrid g(d, d == 1 ? 32 : 10, d == 1 ? 32 : 10, 6, 6);
    DistributionField M = maxwellian(sample_potential(PotentialSpec::quartic(d, 0.3, 0.5), g), g).first;
    WeightedOperatorSet ops(M);
    DistributionField f = random_field(M, 10 + d), h = random_field(M, 20 + d);
    for (Axis a : {Axis::x, Axis::v}) {
      double lhs = b_inner(ops.apply_lambda_sq(f, a), h, M);
      double rhs = b_inner(f, ops.apply_lambda_sq(h, a), M);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * bnorm(f, M) * bnorm(h, M));
      CHECK(ops.spectrum_bounds(a).first >= 1 - 1e-8);
      DistributionField p = project_perp(f, M);
      CHECK(std::abs(ops.apply_lambda_sq(p, a).mass()) < 1e-10);
      // Integer exponent against the quadratic form.
      double q = std::sqrt(b_inner(ops.apply_lambda_sq(f, a), f, M));
      CHECK(ops.lambda_pow_norm(f, a, 1.0) == doctest::Approx(q).epsilon(1e-8));
    }
  }
}

TEST_CASE("fractional norms") {
  PhaseGrid g(1, 48, 96, 8, 8);
  DistributionField M = unit_maxwellian(g);
  WeightedOperatorSet ops(M);
  CHECK(frac_norm(M, 0.7, 1.3, ops) == doctest::Approx(2.0).epsilon(1e-10));
  DistributionField f = random_field(M, 5);
  CHECK(frac_norm(f, 0, 0, ops) == doctest::Approx(2 * bnorm(f, M)).epsilon(1e-12));
  DistributionField vM = times_v(M);
  CHECK(ops.lambda_pow_norm(vM, Axis::v, 1.0) == doctest::Approx(std::sqrt(2.0) * bnorm(vM, M)).epsilon(1e-3));
  // Powers compose.
  DistributionField half = ops.apply_lambda_pow(ops.apply_lambda_pow(f, Axis::x, 0.5), Axis::x, 0.5);
  DistributionField one = ops.apply_lambda_pow(f, Axis::x, 1.0);
  CHECK(bnorm(DistributionField(g, half.values - one.values), M) < 1e-9 * bnorm(one, M));
  CHECK_THROWS(frac_norm(f, 2.5, 0, ops));
}

TEST_CASE("operator norm estimates") {
  PhaseGrid g(1, 16, 16, 6, 6);
  DistributionField M = unit_maxwellian(g);
  LinearMap id = [](const DistributionField& f) { return f; };
  LinearMap two = [](const DistributionField& f) { return DistributionField(f.grid, 2 * f.values); };
  CHECK(opnorm_estimate(id, M, 10, id) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(opnorm_estimate(two, M, 10, two) == doctest::Approx(2.0).epsilon(1e-10));

  // Lambda_v^{-1} d_v: compare against the dense singular value and check stability in nv.
  auto ratio_for = [](int nv) {
    PhaseGrid gg(1, 8, nv, 6, 7);
    DistributionField MM = unit_maxwellian(gg);
    auto ops = std::make_shared<WeightedOperatorSet>(MM);
    LinearMap A = [ops](const DistributionField& f) { return ops->apply_lambda_pow(diff_v(f, 0), Axis::v, -1.0); };
    double est = opnorm_estimate(A, MM, 60);
    Mat D = dense_sym_matrix(A, MM);
    double exact = Eigen::JacobiSVD<Mat>(D).singularValues()[0];
    CHECK(est <= exact * (1 + 1e-10));
    CHECK(est >= 0.95 * exact);
    return est;
  };
  double a = ratio_for(32), b = ratio_for(64);
  CHECK(std::isfinite(a));
  CHECK(b / a < 1.5);
  CHECK(a / b < 1.5);
}
