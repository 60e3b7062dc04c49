#pragma once

#include "krlx/equilibrium.hpp"
#include "krlx/grid.hpp"
#include "krlx/potential.hpp"

#include <cmath>
#include <random>

namespace krlx::test {

/// Normalized e^{-|x-x0|^2/(2 s^2)} e^{-|v-v0|^2/2}, shifted along the first axis.
inline DistributionField gaussian_bump(const PhaseGrid& g, double x0, double s, double v0) {
  std::vector<Vec> xp(g.d, Vec(g.nx)), vp(g.d, Vec(g.nv));
  for (int k = 0; k < g.d; ++k) {
    double sx = k == 0 ? x0 : 0.0, sv = k == 0 ? v0 : 0.0;
    for (int i = 0; i < g.nx; ++i) xp[k][i] = std::exp(-0.5 * std::pow((g.x(i) - sx) / s, 2));
    for (int j = 0; j < g.nv; ++j) vp[k][j] = std::exp(-0.5 * std::pow(g.v(j) - sv, 2));
  }
  DistributionField f(g, product_profile(g, xp, vp));
  f.values /= f.mass();
  return f;
}

/// Random field M (1 + noise), smooth enough to have finite norms on the grid.
inline DistributionField random_field(const DistributionField& M, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  DistributionField f(M.grid);
  for (Index i = 0; i < f.values.size(); ++i) f.values[i] = M.values[i] * nd(rng);
  return f;
}

/// x_1 M and v_1 M.
inline DistributionField times_x(const DistributionField& M) {
  DistributionField f = M;
  const PhaseGrid& g = M.grid;
  int idx[3];
  for (Index c = 0; c < g.nxd(); ++c) {
    g.xindex(c, idx);
    f.values.segment(c * g.nvd(), g.nvd()) *= g.x(idx[0]);
  }
  return f;
}

inline DistributionField times_v(const DistributionField& M) {
  DistributionField f = M;
  const PhaseGrid& g = M.grid;
  int idx[3];
  for (Index c = 0; c < g.nxd(); ++c)
    for (Index j = 0; j < g.nvd(); ++j) {
      g.vindex(j, idx);
      f(c, j) *= g.v(idx[0]);
    }
  return f;
}

inline double max_dt(const PhaseGrid& g, double cfl) { return cfl * g.hx() / (g.Lv - 0.5 * g.hv()); }

}  // namespace krlx::test
