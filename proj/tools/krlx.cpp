// Command-line front end: equilibrium | gap | semigroup-verify | run | picard | report.

#include "krlx/config.hpp"
#include "krlx/equilibrium.hpp"
#include "krlx/io.hpp"
#include "krlx/semigroup.hpp"
#include "krlx/vpfp.hpp"
#include "krlx/witten.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace krlx;

namespace {

/// A named numerical check failed; exit code 3.
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  SimConfig cfg;
  std::string command;
  fs::path out;
  int jobs = 1;

  Provenance prov(const std::string& extra_key = "", const std::string& extra = "") const {
    Provenance p = cfg.resolved();
    p.insert(p.begin(), {"command", command});
    if (!extra_key.empty()) p.emplace_back(extra_key, extra);
    return p;
  }
  std::string path(const std::string& name) const { return (out / name).string(); }
};

std::string suffix(const Context& ctx, double eps0) {
  return ctx.cfg.sweep_eps0.empty() ? "" : "_eps" + fmt(eps0);
}

std::vector<double> couplings(const SimConfig& cfg) {
  return cfg.sweep_eps0.empty() ? std::vector<double>{cfg.eps0} : cfg.sweep_eps0;
}

/// Runs fn(i) for i < n on up to jobs threads; rethrows the first failure.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(jobs, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

EquilibriumState equilibrium_for(const SimConfig& cfg, double eps0) {
  PoissonEmdenOptions opt;
  opt.tol = cfg.tol;
  opt.max_iters = cfg.max_iters;
  opt.theta = cfg.theta;
  return solve_poisson_emden(make_potential(cfg), eps0, make_grid(cfg), opt);
}

void write_summary(const Context& ctx, const std::string& name, const Provenance& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : ctx.prov()) os << "# " << k << " = " << v << "\n";
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  std::ofstream(ctx.path(name)) << os.str();
  for (const auto& [k, v] : kv) std::cout << k << "=" << v << "\n";
}

int cmd_equilibrium(const Context& ctx) {
  auto eps = couplings(ctx.cfg);
  std::mutex out_mu;
  parallel_for(static_cast<int>(eps.size()), ctx.jobs, [&](int i) {
    EquilibriumState st = equilibrium_for(ctx.cfg, eps[i]);
    std::string sfx = suffix(ctx, eps[i]);
    CsvWriter csv(ctx.path("equilibrium" + sfx + ".csv"), ctx.prov("eps0", fmt(eps[i])), {"iter", "phase", "sup_update"});
    int k = 0;
    for (double u : st.history) csv.row_text({std::to_string(++k), "convolution", fmt(u)});
    for (double u : st.polish_history) csv.row_text({std::to_string(++k), "polish", fmt(u)});
    csv.row_text({"final", "residual", fmt(st.residual)});
    csv.close();
    write_field(ctx.path("U_inf" + sfx + ".krlx"), st.U_inf);
    write_field(ctx.path("M_inf" + sfx + ".krlx"), st.M_inf);
    std::lock_guard<std::mutex> lock(out_mu);
    std::cout << "eps0=" << fmt(eps[i]) << " iters=" << st.iters << " residual=" << fmt(st.residual)
              << " Z=" << fmt(st.Z) << " min_U=" << fmt(st.U_inf.values().minCoeff()) << "\n";
  });
  return 0;
}

int cmd_gap(const Context& ctx) {
  const SimConfig& c = ctx.cfg;
  PhaseGrid g = make_grid(c);
  PotentialSpec Ve = make_potential(c);
  SpectralGapReport rep = spectral_gap(Ve, g, c.eigs);
  CsvWriter csv(ctx.path("gap.csv"), ctx.prov(), {"index", "eigenvalue"});
  for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) csv.row({double(i), rep.eigenvalues[i]});
  csv.close();
  Provenance kv = {{"gap", fmt(rep.gap)},     {"kappa0", fmt(rep.kappa0)}, {"Ce", fmt(rep.Ce)},
                   {"C0", fmt(rep.C0)},       {"kappa", fmt(rep.kappa)},   {"ground_state_error", fmt(rep.ground_state_error)},
                   {"boundary_value", fmt(rep.boundary_value)}, {"ambiguous", rep.ambiguous ? "1" : "0"}};
  if (rep.ambiguous) std::cerr << "warning: the spectral gap is numerically ambiguous\n";
  if (c.eps0 != 0.0 && c.d <= 2) {
    EquilibriumState eq = equilibrium_for(c, c.eps0);
    PerturbedGapReport p = perturbed_gap_check(Ve, eq, rep);
    kv.emplace_back("gap_inf", fmt(p.gap_inf));
    kv.emplace_back("gap_inf_passes", p.passes ? "1" : "0");
    kv.emplace_back("smallness_margin", fmt(p.margin));
    if (!p.passes) {
      write_summary(ctx, "gap_summary.txt", kv);
      throw CheckFailure("perturbed gap below kappa0/4");
    }
  }
  write_summary(ctx, "gap_summary.txt", kv);
  return 0;
}

int cmd_semigroup(const Context& ctx) {
  const SimConfig& c = ctx.cfg;
  PhaseGrid g = make_grid(c);
  EquilibriumState eq = equilibrium_for(c, c.eps0);
  KfpPropagator prop(g, eq.V_inf, c.dt, make_limiter(c));
  ShortTimeOptions so{c.tv0, c.tv1, c.tx0, c.tx1, c.npoints};
  std::vector<DistributionField> probes = {rough_probe_v(g), rough_probe_x(g)};
  double alpha = c.alpha > 0 ? c.alpha : 1.0, beta = c.beta > 0 ? c.beta : 1.0;
  SlopeReport sr = verify_short_time_exponents(prop, alpha, beta, probes, so);
  {
    CsvWriter csv(ctx.path("semigroup_short.csv"), ctx.prov(), {"axis", "t", "norm_ratio"});
    for (int i = 0; i < so.npoints; ++i) csv.row_text({"v", fmt(sr.tv[i]), fmt(sr.nv[i])});
    for (int i = 0; i < so.npoints; ++i) csv.row_text({"x", fmt(sr.tx[i]), fmt(sr.nx[i])});
    csv.close();
  }
  DistributionField f0 = project_perp(make_initial(c, prop.maxwellian()), prop.maxwellian());
  DecayFit df = verify_perp_decay(prop, f0, std::max(5.0, c.decay_T), 0.0, 0.1, 1.0, g.size() <= 40000);
  {
    CsvWriter csv(ctx.path("semigroup_decay.csv"), ctx.prov(), {"t", "bnorm", "mass"});
    for (std::size_t i = 0; i < df.t.size(); ++i) csv.row({df.t[i], df.norm[i], df.mass[i]});
    csv.close();
  }
  ConjugationReport cr = verify_conjugation_and_continuity(prop, 1.0, 2.0, {make_initial(c, prop.maxwellian())});
  write_summary(ctx, "semigroup_summary.txt",
                {{"slope_v", fmt(sr.fit_v.slope)},
                 {"target_v", fmt(sr.target_v)},
                 {"slope_x", fmt(sr.fit_x.slope)},
                 {"target_x", fmt(sr.target_x)},
                 {"prefactor_v", fmt(sr.prefactor_v)},
                 {"prefactor_x", fmt(sr.prefactor_x)},
                 {"decay_rate", fmt(df.rate)},
                 {"lambda_star", fmt(df.lambda_star)},
                 {"max_mass", fmt(df.max_mass)},
                 {"conjugation_ratio", fmt(cr.ratio_sup)},
                 {"continuity_slope", cr.skipped ? "skipped" : fmt(cr.fit.slope)}});
  return 0;
}

VpfpTrajectory simulate(const Context& ctx, const EquilibriumState& eq, bool write) {
  const SimConfig& c = ctx.cfg;
  DistributionField f0 = make_initial(c, eq.M_inf);
  RunOptions ro;
  ro.limiter = make_limiter(c);
  ro.snapshot_dt = c.snapshot_dt;
  VpfpTrajectory traj = vpfp_run(f0, eq, c.T, c.dt, ro);
  if (write) {
    fs::create_directories(ctx.out / "snapshots");
    CsvWriter csv(ctx.path("snapshots.csv"), ctx.prov(), {"index", "t", "file"});
    for (std::size_t i = 0; i < traj.snaps.size(); ++i) {
      std::ostringstream name;
      name << "snapshots/f_" << std::setw(5) << std::setfill('0') << i << ".krlx";
      write_field(ctx.path(name.str()), traj.snaps[i].f);
      csv.row_text({std::to_string(i), fmt(traj.snaps[i].t), name.str()});
    }
    csv.close();
  }
  return traj;
}

void check_conservation(const ConservationReport& cr) {
  if (cr.mass_drift > 1e-10) throw CheckFailure("mass drift " + fmt(cr.mass_drift) + " exceeds 1e-10");
  if (cr.min_value < -1e-14) throw CheckFailure("negative value " + fmt(cr.min_value));
  if (cr.linf_ratio > 1 + 1e-8) throw CheckFailure("maximum bound exceeded, ratio " + fmt(cr.linf_ratio));
}

int cmd_run(const Context& ctx) {
  EquilibriumState eq = equilibrium_for(ctx.cfg, ctx.cfg.eps0);
  write_field(ctx.path("M_inf.krlx"), eq.M_inf);
  VpfpTrajectory traj = simulate(ctx, eq, true);
  ConservationReport cr = conservation_check(traj);
  CsvWriter csv(ctx.path("conservation.csv"), ctx.prov(), {"t", "mass", "min_value", "max_value"});
  for (const Snapshot& s : traj.snaps) csv.row({s.t, s.f.mass(), s.f.values.minCoeff(), s.f.values.maxCoeff()});
  csv.close();
  write_summary(ctx, "run_summary.txt",
                {{"steps", std::to_string(traj.steps)},
                 {"mass_drift", fmt(cr.mass_drift)},
                 {"min_value", fmt(cr.min_value)},
                 {"linf_ratio", fmt(cr.linf_ratio)}});
  check_conservation(cr);
  return 0;
}

VpfpTrajectory load_snapshots(const Context& ctx) {
  VpfpTrajectory traj;
  std::ifstream in(ctx.path("snapshots.csv"));
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string idx, t, file;
    std::getline(ss, idx, ',');
    std::getline(ss, t, ',');
    std::getline(ss, file, ',');
    traj.snaps.push_back({std::stod(t), read_distribution(ctx.path(file))});
  }
  return traj;
}

int cmd_report(const Context& ctx) {
  const SimConfig& c = ctx.cfg;
  EquilibriumState eq = equilibrium_for(c, c.eps0);
  VpfpTrajectory traj;
  if (fs::exists(ctx.out / "snapshots.csv")) traj = load_snapshots(ctx);
  if (traj.snaps.empty() || traj.snaps.front().f.grid != make_grid(c)) traj = simulate(ctx, eq, false);
  DecayOptions opt;
  opt.alpha = c.alpha;
  opt.beta = c.beta;
  DecayReport rep = decay_report(traj, eq, opt);
  CsvWriter csv(ctx.path("decay.csv"), ctx.prov(),
                {"t", "b_dist", "bab_dist", "field_dist", "entropy", "mass_error", "min_value", "linf_ratio"});
  const double m0 = traj.snaps.front().f.mass(), max0 = traj.snaps.front().f.values.maxCoeff();
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    const DistributionField& f = traj.snaps[i].f;
    csv.row({rep.times[i], rep.b_dist[i], rep.bab_dist[i], rep.field_dist[i], rep.entropy[i], std::abs(f.mass() - m0),
             f.values.minCoeff(), f.values.maxCoeff() / (std::exp(c.d * rep.times[i]) * max0)});
  }
  csv.close();
  auto rate = [](const RateFit& r) { return r.valid ? fmt(r.rate) : std::string("omitted"); };
  auto res = [](const RateFit& r) { return r.valid ? fmt(r.residual) : std::string("omitted"); };
  write_summary(ctx, "decay_summary.txt",
                {{"rate_b", rate(rep.rate_b)},
                 {"rate_b_residual", res(rep.rate_b)},
                 {"rate_bab", rate(rep.rate_bab)},
                 {"rate_field", rate(rep.rate_field)},
                 {"rate_field_residual", res(rep.rate_field)},
                 {"rate_entropy", rate(rep.rate_entropy)},
                 {"rate_entropy_residual", res(rep.rate_entropy)},
                 {"mass_error", fmt(rep.mass_error)},
                 {"min_value", fmt(rep.min_value)},
                 {"linf_ratio", fmt(rep.linf_ratio)},
                 {"note", "-Delta U0 = rho0 sign convention; truncated box, see grid.Lx and grid.Lv"}});
  return 0;
}

int cmd_picard(const Context& ctx) {
  const SimConfig& c = ctx.cfg;
  auto eps = couplings(c);
  std::mutex out_mu;
  parallel_for(static_cast<int>(eps.size()), ctx.jobs, [&](int i) {
    EquilibriumState eq = equilibrium_for(c, eps[i]);
    FixedPointConfig fp = make_fixed_point(c);
    fp.eps0 = eps[i];
    DistributionField f0 = make_initial(c, eq.M_inf);
    if (fp.kappa == 0.0) {
      KfpPropagator prop(f0.grid, eq.V_inf, c.dt, Limiter::none);
      fp.kappa = verify_perp_decay(prop, project_perp(f0, eq.M_inf), std::max(5.0, c.decay_T), 0, 0.1, 1.0, false).rate;
    }
    PicardReport rep = picard_iterate(f0, eq, fp, c.T, c.dt);
    std::string sfx = suffix(ctx, eps[i]);
    CsvWriter csv(ctx.path("picard" + sfx + ".csv"), ctx.prov("kappa_used", fmt(fp.kappa)),
                  {"iter", "z_norm", "x_norm", "y_norm", "diff_norm", "q"});
    for (std::size_t k = 0; k < rep.z_norm.size(); ++k)
      csv.row({double(k + 1), rep.z_norm[k], rep.x_norm[k], rep.y_norm[k], rep.diff_norm[k],
               k >= 1 ? rep.q[k - 1] : std::nan("")});
    csv.close();
    std::lock_guard<std::mutex> lock(out_mu);
    std::cout << "eps0=" << fmt(eps[i]) << " iterations=" << rep.iterations << " converged=" << rep.converged
              << " kappa=" << fmt(fp.kappa) << "\n";
    if (!rep.contracting) throw CheckFailure(rep.note);
  });
  return 0;
}

int env_threads() {
  const char* s = std::getenv("KRLX_THREADS");
  if (!s) return 0;
  int n = std::atoi(s);
  return n > 0 ? n : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"krlx: Vlasov-Poisson-Fokker-Planck equilibria, semigroup checks and relaxation runs"};
  app.fallthrough();
  std::string config_path, out_dir;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "configuration file (key = value with [section] headers)");
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--jobs", jobs, "parallel sweep entries")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "seed for random probes (overrides output.seed)");
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"equilibrium", "solve the Poisson-Emden equation"},
      {"gap", "Witten spectral gap and rates"},
      {"semigroup-verify", "short-time exponents, decay on the zero-mass subspace, continuity"},
      {"run", "nonlinear time stepping with snapshots"},
      {"picard", "fixed-point iteration and contraction factors"},
      {"report", "decay report from snapshots (runs the simulation if none are stored)"}};
  for (const auto& [name, help] : subs) app.add_subcommand(name, help);
  app.require_subcommand(1, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }
  seed_given = seed_opt->count() > 0;
  std::string command = app.get_subcommands().front()->get_name();
  if (config_path.empty()) {
    std::cerr << "error: --config is required\n\n" << app.help();
    return 1;
  }

  Context ctx;
  ctx.command = command;
  try {
    ctx.cfg = load_config(config_path);
    if (!out_dir.empty()) ctx.cfg.out_dir = out_dir;
    if (seed_given) ctx.cfg.seed = seed;
    ctx.out = ctx.cfg.out_dir;
    fs::create_directories(ctx.out);
    std::ofstream probe(ctx.out / ".write-test");
    if (!probe) throw ConfigError("output directory '" + ctx.cfg.out_dir + "' is not writable");
    probe.close();
    fs::remove(ctx.out / ".write-test");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "config error: output directory: " << e.what() << "\n";
    return 2;
  }
  ctx.jobs = jobs;
  if (int cap = env_threads()) ctx.jobs = std::min(ctx.jobs, cap);

  try {
    if (command == "equilibrium") return cmd_equilibrium(ctx);
    if (command == "gap") return cmd_gap(ctx);
    if (command == "semigroup-verify") return cmd_semigroup(ctx);
    if (command == "run") return cmd_run(ctx);
    if (command == "picard") return cmd_picard(ctx);
    if (command == "report") return cmd_report(ctx);
  } catch (const CheckFailure& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return 3;
  } catch (const PoissonEmdenFailure& e) {
    std::cerr << "check failed: poisson-emden convergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure (" << command << "): " << e.what() << "\n";
    return 3;
  }
  return 1;
}
