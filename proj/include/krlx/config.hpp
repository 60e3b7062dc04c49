#pragma once

#include "krlx/equilibrium.hpp"
#include "krlx/io.hpp"
#include "krlx/potential.hpp"
#include "krlx/semigroup.hpp"
#include "krlx/vpfp.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace krlx {

/// Invalid configuration; the message names the violated constraint.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat "key = value" configuration with [section] headers; keys are section.key.
struct SimConfig {
  // [grid]
  int d = 1, nx = 64, nv = 64;
  double Lx = 8, Lv = 8;
  // [potential]
  std::string family = "quadratic";
  std::vector<double> omega{1.0};
  double quartic_a = 1, quartic_b = 0;
  double well_s = 1, well_r0 = 1;
  // [physics]
  double eps0 = 0.05;
  // [solver]
  double tol = 1e-10;
  int max_iters = 200;
  double theta = 0.8;
  std::string limiter = "minmod";
  // [time]
  double T = 5, dt = 0.02, snapshot_dt = 0.1;
  // [diagnostics]
  double alpha = 0, beta = 0, a = 0.6, delta = 0, sigma = 0.5, eps = 0.01;
  int max_picard = 12;
  int eigs = 4;
  std::string picard_mode = "long";
  double kappa = 0;  // 0: measure the linear decay rate
  double tv0 = 1e-3, tv1 = 1e-1, tx0 = 1e-3, tx1 = 1e-1;
  int npoints = 8;
  double decay_T = 10;
  // [initial]
  std::string initial = "bump";
  double x0 = 1.0, v0 = 0.0, width = 1.0;
  // [output]
  std::string out_dir = "krlx-out";
  std::uint64_t seed = 1;
  // [sweep]
  std::vector<double> sweep_eps0;

  /// Every resolved key, for provenance blocks.
  Provenance resolved() const;
};

SimConfig parse_config(const std::string& text);
SimConfig load_config(const std::string& path);
/// Cross-field constraints; throws ConfigError.
void validate_config(const SimConfig& cfg);

PhaseGrid make_grid(const SimConfig& cfg);
PotentialSpec make_potential(const SimConfig& cfg);
Limiter make_limiter(const SimConfig& cfg);
FixedPointConfig make_fixed_point(const SimConfig& cfg);
/// Initial datum on the grid: "bump" (shifted Gaussian), "maxwellian" (M) or "rough".
DistributionField make_initial(const SimConfig& cfg, const DistributionField& M);

}  // namespace krlx
