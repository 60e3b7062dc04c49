#include "krlx/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace krlx {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(x))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

using Setter = std::function<void(SimConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> m = {
      {"grid.d", [](SimConfig& c, auto& k, auto& v) { c.d = static_cast<int>(to_int(k, v)); }},
      {"grid.nx", [](SimConfig& c, auto& k, auto& v) { c.nx = static_cast<int>(to_int(k, v)); }},
      {"grid.nv", [](SimConfig& c, auto& k, auto& v) { c.nv = static_cast<int>(to_int(k, v)); }},
      {"grid.Lx", [](SimConfig& c, auto& k, auto& v) { c.Lx = to_double(k, v); }},
      {"grid.Lv", [](SimConfig& c, auto& k, auto& v) { c.Lv = to_double(k, v); }},
      {"potential.family", [](SimConfig& c, auto&, auto& v) { c.family = v; }},
      {"potential.omega", [](SimConfig& c, auto& k, auto& v) { c.omega = to_list(k, v); }},
      {"potential.a", [](SimConfig& c, auto& k, auto& v) { c.quartic_a = to_double(k, v); }},
      {"potential.b", [](SimConfig& c, auto& k, auto& v) { c.quartic_b = to_double(k, v); }},
      {"potential.s", [](SimConfig& c, auto& k, auto& v) { c.well_s = to_double(k, v); }},
      {"potential.r0", [](SimConfig& c, auto& k, auto& v) { c.well_r0 = to_double(k, v); }},
      {"physics.eps0", [](SimConfig& c, auto& k, auto& v) { c.eps0 = to_double(k, v); }},
      {"solver.tol", [](SimConfig& c, auto& k, auto& v) { c.tol = to_double(k, v); }},
      {"solver.max_iters", [](SimConfig& c, auto& k, auto& v) { c.max_iters = static_cast<int>(to_int(k, v)); }},
      {"solver.theta", [](SimConfig& c, auto& k, auto& v) { c.theta = to_double(k, v); }},
      {"solver.limiter", [](SimConfig& c, auto&, auto& v) { c.limiter = v; }},
      {"time.T", [](SimConfig& c, auto& k, auto& v) { c.T = to_double(k, v); }},
      {"time.dt", [](SimConfig& c, auto& k, auto& v) { c.dt = to_double(k, v); }},
      {"time.snapshot_dt", [](SimConfig& c, auto& k, auto& v) { c.snapshot_dt = to_double(k, v); }},
      {"diagnostics.alpha", [](SimConfig& c, auto& k, auto& v) { c.alpha = to_double(k, v); }},
      {"diagnostics.beta", [](SimConfig& c, auto& k, auto& v) { c.beta = to_double(k, v); }},
      {"diagnostics.a", [](SimConfig& c, auto& k, auto& v) { c.a = to_double(k, v); }},
      {"diagnostics.delta", [](SimConfig& c, auto& k, auto& v) { c.delta = to_double(k, v); }},
      {"diagnostics.sigma", [](SimConfig& c, auto& k, auto& v) { c.sigma = to_double(k, v); }},
      {"diagnostics.eps", [](SimConfig& c, auto& k, auto& v) { c.eps = to_double(k, v); }},
      {"diagnostics.max_picard", [](SimConfig& c, auto& k, auto& v) { c.max_picard = static_cast<int>(to_int(k, v)); }},
      {"diagnostics.eigs", [](SimConfig& c, auto& k, auto& v) { c.eigs = static_cast<int>(to_int(k, v)); }},
      {"diagnostics.picard_mode", [](SimConfig& c, auto&, auto& v) { c.picard_mode = v; }},
      {"diagnostics.kappa", [](SimConfig& c, auto& k, auto& v) { c.kappa = to_double(k, v); }},
      {"diagnostics.tv0", [](SimConfig& c, auto& k, auto& v) { c.tv0 = to_double(k, v); }},
      {"diagnostics.tv1", [](SimConfig& c, auto& k, auto& v) { c.tv1 = to_double(k, v); }},
      {"diagnostics.tx0", [](SimConfig& c, auto& k, auto& v) { c.tx0 = to_double(k, v); }},
      {"diagnostics.tx1", [](SimConfig& c, auto& k, auto& v) { c.tx1 = to_double(k, v); }},
      {"diagnostics.npoints", [](SimConfig& c, auto& k, auto& v) { c.npoints = static_cast<int>(to_int(k, v)); }},
      {"diagnostics.decay_T", [](SimConfig& c, auto& k, auto& v) { c.decay_T = to_double(k, v); }},
      {"initial.family", [](SimConfig& c, auto&, auto& v) { c.initial = v; }},
      {"initial.x0", [](SimConfig& c, auto& k, auto& v) { c.x0 = to_double(k, v); }},
      {"initial.v0", [](SimConfig& c, auto& k, auto& v) { c.v0 = to_double(k, v); }},
      {"initial.width", [](SimConfig& c, auto& k, auto& v) { c.width = to_double(k, v); }},
      {"output.dir", [](SimConfig& c, auto&, auto& v) { c.out_dir = v; }},
      {"output.seed", [](SimConfig& c, auto& k, auto& v) {
         long long s = to_int(k, v);
         if (s < 0) throw ConfigError(k + ": must be nonnegative");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"sweep.eps0", [](SimConfig& c, auto& k, auto& v) { c.sweep_eps0 = to_list(k, v); }},
  };
  return m;
}

}  // namespace

Provenance SimConfig::resolved() const {
  return {{"grid.d", std::to_string(d)},
          {"grid.nx", std::to_string(nx)},
          {"grid.nv", std::to_string(nv)},
          {"grid.Lx", fmt(Lx)},
          {"grid.Lv", fmt(Lv)},
          {"potential.family", family},
          {"potential.omega", join(omega)},
          {"potential.a", fmt(quartic_a)},
          {"potential.b", fmt(quartic_b)},
          {"potential.s", fmt(well_s)},
          {"potential.r0", fmt(well_r0)},
          {"physics.eps0", fmt(eps0)},
          {"solver.tol", fmt(tol)},
          {"solver.max_iters", std::to_string(max_iters)},
          {"solver.theta", fmt(theta)},
          {"solver.limiter", limiter},
          {"time.T", fmt(T)},
          {"time.dt", fmt(dt)},
          {"time.snapshot_dt", fmt(snapshot_dt)},
          {"diagnostics.alpha", fmt(alpha)},
          {"diagnostics.beta", fmt(beta)},
          {"diagnostics.a", fmt(a)},
          {"diagnostics.delta", fmt(delta)},
          {"diagnostics.sigma", fmt(sigma)},
          {"diagnostics.eps", fmt(eps)},
          {"diagnostics.max_picard", std::to_string(max_picard)},
          {"diagnostics.eigs", std::to_string(eigs)},
          {"diagnostics.picard_mode", picard_mode},
          {"diagnostics.kappa", fmt(kappa)},
          {"diagnostics.tv0", fmt(tv0)},
          {"diagnostics.tv1", fmt(tv1)},
          {"diagnostics.tx0", fmt(tx0)},
          {"diagnostics.tx1", fmt(tx1)},
          {"diagnostics.npoints", std::to_string(npoints)},
          {"diagnostics.decay_T", fmt(decay_T)},
          {"initial.family", initial},
          {"initial.x0", fmt(x0)},
          {"initial.v0", fmt(v0)},
          {"initial.width", fmt(width)},
          {"output.dir", out_dir},
          {"output.seed", std::to_string(seed)},
          {"sweep.eps0", sweep_eps0.empty() ? "" : join(sweep_eps0)}};
}

SimConfig parse_config(const std::string& text) {
  SimConfig cfg;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::string full = section.empty() ? key : section + "." + key;
    auto it = setters().find(full);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + full + "'");
    it->second(cfg, full, value);
  }
  validate_config(cfg);
  return cfg;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const SimConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.d < 1 || c.d > 3) fail("grid.d must be 1, 2 or 3");
  if (c.nx < 8 || c.nv < 8) fail("grid.nx and grid.nv must be at least 8");
  if (!(c.Lx > 0) || !(c.Lv > 0)) fail("grid.Lx and grid.Lv must be positive");
  if (c.family != "quadratic" && c.family != "quartic" && c.family != "double-well")
    fail("potential.family must be quadratic, quartic or double-well");
  if (!(std::abs(c.eps0) <= 1)) fail("physics.eps0 must satisfy |eps0| <= 1");
  if (c.d == 2 && c.eps0 < 0)
    fail("physics.eps0 < 0 with d = 2 is the attractive two-dimensional regime, which is not supported (eps0 > 0 required)");
  for (double e : c.sweep_eps0)
    if (c.d == 2 && e < 0) fail("sweep.eps0 contains a negative coupling, unsupported attractive regime in d = 2");
  if (!(c.tol > 0)) fail("solver.tol must be positive");
  if (c.max_iters < 1) fail("solver.max_iters must be at least 1");
  if (!(c.theta > 0 && c.theta <= 1)) fail("solver.theta must lie in (0, 1]");
  if (c.limiter != "minmod" && c.limiter != "none") fail("solver.limiter must be minmod or none");
  if (!(c.T > 0) || !(c.dt > 0) || !(c.snapshot_dt > 0)) fail("time.T, time.dt and time.snapshot_dt must be positive");
  if (c.eigs < 2) fail("diagnostics.eigs must be at least 2");
  if (c.picard_mode != "long" && c.picard_mode != "short") fail("diagnostics.picard_mode must be long or short");
  if (c.npoints < 4) fail("diagnostics.npoints must be at least 4");
  if (!(c.tv0 > 0 && c.tv1 > c.tv0 && c.tx0 > 0 && c.tx1 > c.tx0)) fail("diagnostics time windows must be increasing and positive");
  if (c.initial != "bump" && c.initial != "maxwellian" && c.initial != "rough")
    fail("initial.family must be bump, maxwellian or rough");
  if (!(c.width > 0)) fail("initial.width must be positive");
  try {
    validate_fixed_point(make_fixed_point(c), c.d);
  } catch (const DomainError& e) {
    fail(std::string("diagnostics: ") + e.what());
  }
  PhaseGrid g(c.d, c.nx, c.nv, c.Lx, c.Lv);
  const double cfl = (c.Lv - 0.5 * g.hv()) * c.dt / g.hx();
  if (cfl > 0.9) fail("time.dt violates the CFL bound max|v| dt / hx <= 0.9 (value " + fmt(cfl) + ")");
}

PhaseGrid make_grid(const SimConfig& c) { return PhaseGrid(c.d, c.nx, c.nv, c.Lx, c.Lv); }

PotentialSpec make_potential(const SimConfig& c) {
  if (c.family == "quadratic") return PotentialSpec::quadratic(c.d, c.omega);
  if (c.family == "quartic") return PotentialSpec::quartic(c.d, c.quartic_a, c.quartic_b);
  return PotentialSpec::double_well(c.d, c.well_s, c.well_r0);
}

Limiter make_limiter(const SimConfig& c) { return c.limiter == "none" ? Limiter::none : Limiter::minmod; }

FixedPointConfig make_fixed_point(const SimConfig& c) {
  FixedPointConfig f;
  f.eps0 = c.eps0;
  f.a = c.a;
  f.alpha = c.alpha;
  f.beta = c.beta;
  f.delta = c.delta;
  f.sigma = c.sigma;
  f.eps = c.eps;
  f.max_picard = c.max_picard;
  f.kappa = c.kappa;
  f.mode = c.picard_mode == "short" ? PicardMode::small_time : PicardMode::long_time;
  f.limiter = make_limiter(c);
  return f;
}

DistributionField make_initial(const SimConfig& c, const DistributionField& M) {
  const PhaseGrid& g = M.grid;
  if (c.initial == "maxwellian") return M;
  if (c.initial == "rough") return rough_probe_v(g);
  DistributionField f(g);
  int ix[3], iv[3];
  for (Index i = 0; i < g.nxd(); ++i) {
    g.xindex(i, ix);
    double ex = 0;
    for (int k = 0; k < g.d; ++k) {
      double y = g.x(ix[k]) - (k == 0 ? c.x0 : 0.0);
      ex += y * y;
    }
    for (Index j = 0; j < g.nvd(); ++j) {
      g.vindex(j, iv);
      double ev = 0;
      for (int k = 0; k < g.d; ++k) {
        double w = g.v(iv[k]) - (k == 0 ? c.v0 : 0.0);
        ev += w * w;
      }
      f(i, j) = std::exp(-0.5 * ex / (c.width * c.width) - 0.5 * ev);
    }
  }
  f.values /= f.mass();
  return f;
}

}  // namespace krlx
