#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "config.hpp"
#include "report_json.hpp"
#include "rcm/field_io.hpp"
#include "rcm/numeric.hpp"
#include "rcm/parallel.hpp"
#include "rcm/walker.hpp"

#ifndef RCMLAB_VERSION
#define RCMLAB_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace rcmlab;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int threads = 0;
  std::optional<double> tol;
  std::vector<std::string> set;
};

// One command invocation: parsed config, effective echo and emitted files.
struct Run {
  std::string command;
  std::string stem;
  Common opt;
  YAML::Node root;
  json effective = json::object();
  std::vector<std::string> outputs;
  json budgets = json::object();
  std::vector<std::uint64_t> seeds;

  Section top() { return Section(root, "", &effective); }
  fs::path path(const std::string& name) const { return fs::path(opt.out) / name; }
  std::uint64_t seed(Section& s) {
    std::uint64_t v = 0;
    if (opt.seed) {
      (void)s.integer("seed", 0);
      v = *opt.seed;
      effective["seed"] = v;
    } else {
      const auto raw = s.integer("seed", 1);
      if (raw < 0) throw ConfigError(s.name("seed") + ": must be >= 0");
      v = static_cast<std::uint64_t>(raw);
    }
    seeds.push_back(v);
    return v;
  }
  double tol_override() const { return opt.tol ? *opt.tol : 0.0; }
  void record(const fs::path& p) { outputs.push_back(p.generic_string()); }
};

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  YAML::Node cur;
  cur.reset(root);
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (cur[parts[i]] && !cur[parts[i]].IsMap()) throw ConfigError("--set " + key + ": " + parts[i] + " is not a mapping");
    YAML::Node next = cur[parts[i]];
    cur.reset(next);
  }
  YAML::Node leaf = YAML::Load(value);
  if (cur[parts.back()] && cur[parts.back()].IsMap()) throw ConfigError("--set " + key + ": cannot replace a mapping");
  cur[parts.back()] = leaf;
}

YAML::Node load_config(const Common& opt, bool required) {
  YAML::Node root;
  if (opt.config.empty()) {
    if (required) throw ConfigError("a config file is required");
    root = YAML::Node(YAML::NodeType::Map);
  } else {
    try {
      root = YAML::LoadFile(opt.config);
    } catch (const YAML::BadFile&) {
      throw ConfigError("cannot read config file " + opt.config);
    } catch (const YAML::Exception& e) {
      throw ConfigError("config " + opt.config + ": " + e.what());
    }
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError("config " + opt.config + ": top level must be a mapping");
  }
  for (const auto& a : opt.set) apply_override(root, a);
  return root;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + p.generic_string() + " for writing");
  os << text;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// ---- shared config pieces -----------------------------------------------------------

struct EnvSetup {
  LatticeSpec lattice;
  TimeSpec time;
  rcm::EnvironmentModel model;
};

EnvSetup parse_env(Section& s) {
  EnvSetup e;
  e.lattice = parse_lattice(s.child("lattice"));
  e.time = parse_time(s.child("time"));
  e.model = parse_model(s.child("model"));
  return e;
}

rcm::ConductanceField sample(const EnvSetup& e, std::uint64_t seed) {
  return rcm::sample_environment(e.model, rcm::TorusLattice(e.lattice.dim, e.lattice.side), e.time.horizon,
                                 e.time.dt, seed);
}

std::string field_extension(Section& s) {
  const std::string f = s.text("format", "binary");
  if (f == "binary") return ".rcmf";
  if (f == "csv") return ".csv";
  throw ConfigError(s.name("format") + ": expected binary or csv");
}

rcm::SolverOptions solver_of(Run& r, Section& s) {
  if (s.has("solver")) return parse_solver(s.child("solver"), r.tol_override());
  YAML::Node empty(YAML::NodeType::Map);
  return parse_solver(Section(empty, "solver", &r.effective["solver"]), r.tol_override());
}

std::vector<std::uint64_t> seed_list(Run& r, Section& s, const std::string& key) {
  const auto raw = s.integers(key);
  std::vector<std::uint64_t> out;
  for (auto v : raw) {
    if (v < 0) throw ConfigError(s.name(key) + ": seeds must be >= 0");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  // --seed shifts the list to start at the given value
  if (r.opt.seed) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = *r.opt.seed + i;
    std::vector<std::int64_t> echo(out.begin(), out.end());
    if (s.effective()) (*s.effective())[key] = echo;
  }
  r.seeds.insert(r.seeds.end(), out.begin(), out.end());
  return out;
}

std::vector<int> scale_list(Section& s, const std::string& key) {
  std::vector<int> out;
  for (auto v : s.integers(key)) {
    if (v < 1) throw ConfigError(s.name(key) + ": scales must be positive");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

int positive_int(Section& s, const std::string& key) {
  const auto v = s.integer(key);
  if (v < 1) throw ConfigError(s.name(key) + ": must be >= 1");
  return static_cast<int>(v);
}

int positive_int(Section& s, const std::string& key, std::int64_t fallback) {
  const auto v = s.integer(key, fallback);
  if (v < 1) throw ConfigError(s.name(key) + ": must be >= 1");
  return static_cast<int>(v);
}

int dimension(Section& s) {
  const auto d = s.integer("dim");
  if (d < 1 || d > rcm::kMaxDim) throw ConfigError(s.name("dim") + ": must lie in [1, 4]");
  return static_cast<int>(d);
}

json lattice_json(const rcm::TorusLattice& lat, const rcm::TimeGrid& g) {
  return {{"dim", lat.dim()},
          {"side", lat.side()},
          {"grid", {{"start", g.start}, {"step", g.step}, {"count", g.count}, {"periodic", g.periodic}}}};
}

// ---- env sample --------------------------------------------------------------------

json cmd_env_sample(Run& r) {
  Section s = r.top();
  const auto seed = r.seed(s);
  const EnvSetup e = parse_env(s);
  const std::string ext = field_extension(s);
  std::optional<rcm::MomentExponents> mom;
  if (s.has("moments")) {
    Section m = s.child("moments");
    rcm::MomentExponents x;
    x.p = exponent(m, "p");
    x.p_prime = exponent(m, "p_prime");
    x.q = exponent(m, "q");
    x.q_prime = exponent(m, "q_prime");
    x.d = e.lattice.dim;
    m.finish();
    mom = x;
  }
  s.finish();

  const auto omega = sample(e, seed);
  const auto& lat = omega.lattice();
  const auto& vals = omega.stored_values();
  rcm::NeumaierSum sum, mu_sum;
  double lo = rcm::kInf, hi = 0.0;
  for (double w : vals) {
    sum.add(w);
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  for (std::int64_t k = 0; k < omega.stored_slices(); ++k)
    for (rcm::Vertex x = 0; x < lat.num_vertices(); ++x) mu_sum.add(omega.mu(k, x));
  const double sites = static_cast<double>(lat.num_vertices() * omega.stored_slices());

  const fs::path field = r.path("environment" + ext);
  rcm::save_field(field.string(), omega.to_field());
  r.record(field);

  json rep = {{"model", rcm::model_name(e.model)},
              {"static", omega.time_constant()},
              {"lattice", lattice_json(lat, omega.grid())},
              {"stored_slices", omega.stored_slices()},
              {"omega", {{"min", num(lo)}, {"max", num(hi)}, {"mean", num(sum.value() / vals.size())}}},
              {"mu_mean", num(mu_sum.value() / sites)},
              {"field", field.filename().string()},
              {"pass", true}};
  if (mom) {
    const auto mc = rcm::moment_condition_check(*mom);
    const auto fin = rcm::moments_finite(e.model, mom->p, mom->q);
    rep["moment_condition"] = to_json(mc);
    rep["moments_finite"] = {{"omega_p", fin.omega_p_finite}, {"omega_inverse_q", fin.omega_inv_q_finite}};
  }
  return rep;
}

// ---- walk simulate ---------------------------------------------------------------------

json cmd_walk_simulate(Run& r) {
  Section s = r.top();
  const auto seed = r.seed(s);
  const EnvSetup e = parse_env(s);
  Section w = s.child("walk");
  const std::int64_t walkers = positive_int(w, "walkers");
  const double t_end = w.number("t_end");
  const double t_start = w.number("start_time", 0.0);
  const auto start_coords = w.integers("start", std::vector<std::int64_t>(static_cast<std::size_t>(e.lattice.dim), 0));
  const bool endpoints = w.boolean("endpoints", false);
  w.finish();
  s.finish();
  if (!(t_start >= 0.0)) throw ConfigError(w.name("start_time") + ": must be >= 0");
  if (!(t_end > t_start) || t_end > e.time.horizon)
    throw ConfigError(w.name("t_end") + ": must lie in (start_time, time.horizon]");
  if (static_cast<int>(start_coords.size()) != e.lattice.dim)
    throw ConfigError(w.name("start") + ": needs lattice.dim coordinates");

  const auto omega = sample(e, seed);
  const auto& lat = omega.lattice();
  rcm::Coord c{};
  for (int i = 0; i < e.lattice.dim; ++i) c[static_cast<std::size_t>(i)] = start_coords[static_cast<std::size_t>(i)];
  const rcm::Vertex x0 = lat.index(c);
  const int d = lat.dim();
  const auto du = static_cast<std::size_t>(d);
  std::vector<double> disp(static_cast<std::size_t>(walkers) * du), jumps(static_cast<std::size_t>(walkers));
  const rcm::VsrwSampler sampler(omega);
  rcm::parallel_for(walkers, [&](std::int64_t b, std::int64_t end) {
    for (std::int64_t p = b; p < end; ++p) {
      rcm::CounterRng rng(seed, rcm::StreamTag::walker, static_cast<std::uint64_t>(p));
      std::array<std::int64_t, rcm::kMaxDim> z{};
      std::int64_t count = 0;
      sampler.run(t_start, x0, t_end, rng, [&](const rcm::JumpEvent& ev) {
        z[static_cast<std::size_t>(ev.dir)] += ev.sign;
        ++count;
      });
      const auto pu = static_cast<std::size_t>(p);
      for (std::size_t i = 0; i < du; ++i) disp[pu * du + i] = static_cast<double>(z[i]);
      jumps[pu] = static_cast<double>(count);
    }
  });

  const double span = t_end - t_start;
  rcm::NeumaierSum total_jumps;
  for (double j : jumps) total_jumps.add(j);
  rcm::Matrix cov = walkers > 1 ? rcm::sample_covariance(disp, d) : rcm::Matrix(d, d);
  for (double& v : cov.a) v /= span;
  std::vector<double> mean_disp(du);
  for (std::size_t i = 0; i < du; ++i) {
    rcm::NeumaierSum m;
    for (std::size_t p = 0; p < jumps.size(); ++p) m.add(disp[p * du + i]);
    mean_disp[i] = m.value() / static_cast<double>(walkers);
  }
  json md = json::array();
  for (double v : mean_disp) md.push_back(num(v));

  if (endpoints) {
    std::ostringstream os;
    os << "walker";
    for (int i = 0; i < d; ++i) os << ",z" << i;
    os << ",jumps\n";
    for (std::size_t p = 0; p < jumps.size(); ++p) {
      os << p;
      for (std::size_t i = 0; i < du; ++i) os << ',' << static_cast<std::int64_t>(disp[p * du + i]);
      os << ',' << static_cast<std::int64_t>(jumps[p]) << '\n';
    }
    const fs::path f = r.path("walk_endpoints.csv");
    write_text(f, os.str());
    r.record(f);
  }
  const double nj = total_jumps.value();
  return {{"model", rcm::model_name(e.model)},
          {"lattice", lattice_json(lat, omega.grid())},
          {"walkers", walkers},
          {"start_time", t_start},
          {"t_end", t_end},
          {"mean_jumps", num(nj / static_cast<double>(walkers))},
          {"jump_quantiles", to_json(rcm::quantiles(jumps))},
          // exposure time over jumps, the censored exponential estimate
          {"mean_holding_time", nj > 0.0 ? num(span * static_cast<double>(walkers) / nj) : json(nullptr)},
          {"mean_displacement", md},
          {"displacement_covariance_per_time", to_json(cov)},
          {"pass", true}};
}

// ---- corrector solve ------------------------------------------------------------------

json cmd_corrector_solve(Run& r) {
  Section s = r.top();
  const auto seed = r.seed(s);
  const EnvSetup e = parse_env(s);
  const rcm::SolverOptions so = solver_of(r, s);
  const std::string ext = field_extension(s);
  s.finish();

  const auto omega = sample(e, seed);
  const auto sol = rcm::solve_corrector(omega, so);
  const double harm = rcm::harmonic_residual(sol, omega);
  const auto cov = rcm::covariance_estimate(sol, omega);
  const auto eig = rcm::symmetric_eigenvalues(cov);
  double chi_max = 0.0;
  for (double v : sol.chi.values()) chi_max = std::max(chi_max, std::fabs(v));

  const fs::path field = r.path("chi" + ext);
  rcm::save_field(field.string(), sol.chi);
  r.record(field);
  r.budgets["solver_iterations"] = sol.iterations;
  r.budgets["max_iterations"] = so.max_iterations;

  json ev = json::array();
  for (double v : eig) ev.push_back(num(v));
  const bool pass = sol.residual <= so.tol && harm <= so.tol;
  return {{"model", rcm::model_name(e.model)},
          {"lattice", lattice_json(sol.lattice(), sol.grid())},
          {"method", sol.method},
          {"iterations", sol.iterations},
          {"tol", num(so.tol)},
          {"residual", num(sol.residual)},
          {"harmonic_residual", num(harm)},
          {"max_abs_chi", num(chi_max)},
          {"mass_drift", num(sol.mass_drift)},
          {"covariance", to_json(cov)},
          {"covariance_eigenvalues", ev},
          {"field", field.filename().string()},
          {"pass", pass}};
}

// ---- corrector sublinearity ---------------------------------------------------------

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return false;
    if (i > 0 && !(v[i] < v[i - 1])) return false;
  }
  return true;
}

json cmd_corrector_sublinearity(Run& r) {
  Section s = r.top();
  rcm::SublinearityConfig cfg;
  cfg.model = parse_model(s.child("model"));
  cfg.dim = dimension(s);
  Section u = s.child("sublinearity");
  cfg.n_list = scale_list(u, "n_list");
  cfg.seeds = seed_list(r, u, "seeds");
  cfg.side_factor = positive_int(u, "side_factor");
  cfg.env_dt = u.number("env_dt");
  cfg.time_slices = static_cast<int>(u.integer("time_slices", 0));
  cfg.max_cells = u.number("max_cells", cfg.max_cells);
  u.finish();
  cfg.solver = solver_of(r, s);
  s.finish();
  if (!(cfg.env_dt > 0.0)) throw ConfigError(u.name("env_dt") + ": must be positive");
  if (cfg.time_slices < 0) throw ConfigError(u.name("time_slices") + ": must be >= 0");
  if (cfg.side_factor < 4) throw ConfigError(u.name("side_factor") + ": must be >= 4");

  const auto t = rcm::sublinearity_profile(cfg);
  std::ostringstream os;
  os << "n,seed,side,max_stat,l1_stat,residual,iterations,status\n";
  for (const auto& row : t.rows)
    os << row.n << ',' << row.seed << ',' << row.side << ',' << format_number(row.max_stat) << ','
       << format_number(row.l1_stat) << ',' << format_number(row.residual) << ',' << row.iterations << ','
       << row.status << '\n';
  const fs::path f = r.path("corrector_sublinearity.csv");
  write_text(f, os.str());
  r.record(f);
  r.budgets["max_cells"] = cfg.max_cells;

  json rep = to_json(t);
  rep["model"] = rcm::model_name(cfg.model);
  rep["max_stat_decreasing"] = strictly_decreasing(t.mean_max_stat);
  rep["l1_stat_decreasing"] = strictly_decreasing(t.mean_l1_stat);
  rep["pass"] = !t.partial && strictly_decreasing(t.mean_max_stat) && strictly_decreasing(t.mean_l1_stat);
  return rep;
}

// ---- verify ------------------------------------------------------------------------

json cmd_verify_trend(Run& r, const std::string& check) {
  Section s = r.top();
  rcm::ConstantTrendConfig cfg;
  cfg.model = parse_model(s.child("model"));
  cfg.dim = dimension(s);
  cfg.params = parse_moser(s.child("moser"), cfg.dim);
  Section t = s.child("trend");
  cfg.n_list = scale_list(t, "n_list");
  cfg.seeds = seed_list(r, t, "seeds");
  cfg.side_factor = positive_int(t, "side_factor");
  cfg.time_slices = positive_int(t, "time_slices");
  cfg.corpus_size = positive_int(t, "corpus_size", cfg.corpus_size);
  cfg.level = t.number("level", cfg.level);
  t.finish();
  cfg.solver = solver_of(r, s);
  s.finish();
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw ConfigError(t.name("level") + ": must lie in (0, 1)");
  if (cfg.n_list.size() < 2) throw ConfigError(t.name("n_list") + ": a trend needs at least two scales");
  cfg.checks = {check};

  const auto rep = rcm::moser_constant_trends(cfg);
  std::ostringstream os;
  os << "check,seed,n,value\n";
  for (const auto& c : rep.checks)
    for (std::size_t i = 0; i < c.per_seed.size(); ++i)
      for (std::size_t k = 0; k < c.per_seed[i].size(); ++k)
        os << c.check << ',' << cfg.seeds[i] << ',' << format_number(rep.ns[k]) << ','
           << format_number(c.per_seed[i][k]) << '\n';
  const fs::path f = r.path("verify_" + check + ".csv");
  write_text(f, os.str());
  r.record(f);
  return to_json(rep);
}

json cmd_verify_interp(Run& r, std::optional<std::int64_t> trials) {
  Section s = r.top();
  const auto seed = r.seed(s);
  std::int64_t n = positive_int(s, "instances", 1000);
  if (trials) {
    if (*trials < 1) throw ConfigError("--trials must be >= 1");
    n = *trials;
    r.effective["instances"] = n;
  }
  s.finish();
  return to_json(rcm::interpolation_suite(n, seed));
}

json cmd_verify_appendix(Run& r, std::optional<std::int64_t> trials) {
  Section s = r.top();
  const auto seed = r.seed(s);
  std::int64_t n = s.integer("trials", 1000000);
  if (trials) {
    n = *trials;
    r.effective["trials"] = n;
  }
  s.finish();
  if (n < 1) throw ConfigError("trials must be >= 1");
  return to_json(rcm::appendix_inequality_suite(n, seed));
}

// ---- qfclt run ---------------------------------------------------------------------

rcm::LocalFunctional functional_of(Section& s) {
  const std::string kind = s.text("functional");
  if (kind == "conductance") {
    const auto dir = s.integer("direction", 0);
    return rcm::conductance_functional(static_cast<int>(dir));
  }
  if (kind == "mu") return rcm::mu_functional();
  if (kind == "constant") return rcm::constant_functional(s.number("value", 1.0));
  throw ConfigError(s.name("functional") + ": expected conductance, mu or constant");
}

json cmd_qfclt_run(Run& r) {
  Section s = r.top();
  rcm::ExperimentConfig cfg;
  cfg.seed = r.seed(s);
  const LatticeSpec lat = parse_lattice(s.child("lattice"));
  cfg.dim = lat.dim;
  cfg.side = lat.side;
  cfg.model = parse_model(s.child("model"));
  {
    Section t = s.child("time");
    cfg.env_dt = t.number("dt");
    t.finish();
    if (!(cfg.env_dt > 0.0)) throw ConfigError(t.name("dt") + ": must be positive");
  }
  Section q = s.child("qfclt");
  cfg.n_list = scale_list(q, "n_list");
  cfg.walkers = positive_int(q, "walkers");
  cfg.T = q.number("T", cfg.T);
  cfg.level = q.number("level", cfg.level);
  cfg.permutations = positive_int(q, "permutations", cfg.permutations);
  cfg.formula = q.boolean("formula", cfg.formula);
  cfg.control_paths = q.integer("control_paths", cfg.control_paths);
  cfg.covariance_tolerance = q.number("covariance_tolerance", cfg.covariance_tolerance);
  cfg.reference_identity = q.boolean("reference_identity", cfg.reference_identity);
  cfg.max_cells = q.number("max_cells", cfg.max_cells);
  q.finish();
  cfg.solver = solver_of(r, s);

  struct EnvProc {
    std::int64_t paths;
    std::vector<double> times;
    rcm::LocalFunctional phi;
    double sigma_level;
  };
  std::optional<EnvProc> ep;
  if (s.has("environment_process")) {
    Section e = s.child("environment_process");
    EnvProc x;
    x.paths = positive_int(e, "paths");
    x.times = e.numbers("times");
    x.phi = functional_of(e);
    x.sigma_level = e.number("sigma_level", 3.0);
    e.finish();
    if (!(x.times.front() >= 0.0)) throw ConfigError(e.name("times") + ": must be >= 0");
    ep = std::move(x);
  }
  s.finish();
  try {
    rcm::validate_experiment(cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("qfclt: ") + e.what());
  }
  r.budgets["max_cells"] = cfg.max_cells;
  r.budgets["walkers"] = cfg.walkers;

  const auto rep = rcm::run_qfclt(cfg);
  json out = to_json(rep);
  bool pass = rep.pass;

  std::ostringstream os;
  os << "n,statistic,value\n";
  for (const auto& sc : rep.scales) {
    for (int i = 0; i < sc.covariance.rows; ++i)
      for (int j = 0; j < sc.covariance.cols; ++j)
        os << sc.n << ",cov_" << i << j << ',' << format_number(sc.covariance(i, j)) << '\n';
    for (std::size_t i = 0; i < sc.ks.size(); ++i) os << sc.n << ",ks_p_" << i << ',' << format_number(sc.ks[i].p_value) << '\n';
    os << sc.n << ",joint_p," << format_number(sc.joint.p_value) << '\n';
    os << sc.n << ",increments_p," << format_number(sc.increments.p_value) << '\n';
    os << sc.n << ",covariance_error," << format_number(sc.covariance_error) << '\n';
  }
  const fs::path f = r.path("qfclt_run.csv");
  write_text(f, os.str());
  r.record(f);

  if (ep) {
    const rcm::TorusLattice tl(cfg.dim, cfg.side);
    const double horizon = cfg.env_dt * (std::floor(ep->times.back() / cfg.env_dt) + 1.0);
    const auto omega = rcm::sample_environment(cfg.model, tl, horizon, rcm::model_is_static(cfg.model) ? horizon : cfg.env_dt,
                                               cfg.seed);
    const auto er = rcm::environment_process_check(omega, ep->paths, ep->times, ep->phi, cfg.seed, ep->sigma_level);
    out["environment_process"] = to_json(er);
    pass = pass && er.pass;
  }
  out["pass"] = pass;
  return out;
}

// ---- report ------------------------------------------------------------------------

json cmd_report(Run& r, const std::string& dir) {
  Section s = r.top();
  s.finish();
  if (!fs::is_directory(dir)) throw ConfigError("report: " + dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& ent : fs::directory_iterator(dir)) {
    const auto p = ent.path();
    const auto name = p.filename().string();
    if (p.extension() != ".json" || name.ends_with(".manifest.json") || name == "report.json") continue;
    files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  json items = json::array();
  bool all = true;
  std::ostringstream os;
  os << "file,command,pass\n";
  for (const auto& p : files) {
    std::ifstream is(p);
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception&) {
      continue;
    }
    if (!j.is_object() || !j.contains("command") || !j.contains("pass")) continue;
    const bool pass = j["pass"].is_boolean() && j["pass"].get<bool>();
    all = all && pass;
    items.push_back({{"file", p.filename().string()},
                     {"command", j["command"]},
                     {"config_hash", j.value("config_hash", "")},
                     {"pass", pass}});
    os << p.filename().string() << ',' << j["command"].get<std::string>() << ',' << (pass ? "true" : "false") << '\n';
  }
  if (items.empty()) throw ConfigError("report: no command reports in " + dir);
  const fs::path f = r.path("report.csv");
  write_text(f, os.str());
  r.record(f);
  return {{"directory", dir}, {"reports", items}, {"pass", all}};
}

// ---- driver --------------------------------------------------------------------------

template <class F>
int execute(const std::string& command, const Common& opt, bool config_required, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Run r;
  r.command = command;
  r.stem = command;
  std::replace(r.stem.begin(), r.stem.end(), ' ', '_');
  r.opt = opt;
  try {
    const int threads = opt.threads > 0 ? opt.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    rcm::set_thread_count(threads);
    if (opt.tol && !(*opt.tol > 0.0)) throw ConfigError("--tol must be positive");
    r.root = load_config(opt, config_required);
    fs::create_directories(opt.out);
    json result = body(r);
    const std::string hash = hex64(fnv1a(r.effective.dump()));
    json rep = {{"command", command}, {"version", RCMLAB_VERSION}, {"config_hash", hash}};
    for (auto it = result.begin(); it != result.end(); ++it) rep[it.key()] = it.value();
    const bool pass = rep["pass"].get<bool>();
    const fs::path report = r.path(r.stem + ".json");
    write_text(report, rep.dump(2) + "\n");
    r.record(report);

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json manifest = {{"command", command},
                     {"version", RCMLAB_VERSION},
                     {"config_file", opt.config},
                     {"config_hash", hash},
                     {"effective_config", r.effective},
                     {"seeds", r.seeds},
                     {"threads", threads},
                     {"outputs", r.outputs},
                     {"budgets", r.budgets},
                     {"wall_clock_seconds", wall},
                     {"pass", pass}};
    write_text(r.path(r.stem + ".manifest.json"), manifest.dump(2) + "\n");
    std::cout << command << ": " << (pass ? "PASS" : "FAIL") << " (" << report.generic_string() << ")\n";
    return pass ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "rcmlab " << command << ": " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "rcmlab " << command << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "rcmlab " << command << ": error: " << e.what() << "\n";
    return 1;
  }
}

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("config", c.config, "YAML config file");
  if (config_required) opt->required();
  app->add_option("--seed", c.seed, "override the config seed");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)")->capture_default_str();
  app->add_option("--tol", c.tol, "override solver.tol");
  app->add_option("--set", c.set, "override a config key, key.path=value");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rcmlab: random walks among time-dependent random conductances"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RCMLAB_VERSION);

  Common common;
  std::optional<std::int64_t> trials;
  std::string report_dir;
  std::string selected;

  auto* env = app.add_subcommand("env", "environment tools")->require_subcommand(1);
  auto* env_sample = env->add_subcommand("sample", "sample a conductance field");
  add_common(env_sample, common, true);

  auto* walk = app.add_subcommand("walk", "random walk tools")->require_subcommand(1);
  auto* walk_sim = walk->add_subcommand("simulate", "simulate walkers in a sampled environment");
  add_common(walk_sim, common, true);

  auto* corr = app.add_subcommand("corrector", "corrector tools")->require_subcommand(1);
  auto* corr_solve = corr->add_subcommand("solve", "solve the corrector equation");
  add_common(corr_solve, common, true);
  auto* corr_sub = corr->add_subcommand("sublinearity", "sublinearity statistics over scales and seeds");
  add_common(corr_sub, common, true);

  auto* verify = app.add_subcommand("verify", "functional inequality checks")->require_subcommand(1);
  std::vector<std::pair<std::string, CLI::App*>> trend_cmds;
  for (const std::string name : {"poincare", "sobolev", "energy", "maximal"}) {
    auto* c = verify->add_subcommand(name, name + " constant trend");
    add_common(c, common, true);
    trend_cmds.emplace_back(name, c);
  }
  auto* interp = verify->add_subcommand("interp", "interpolation inequality on random instances");
  add_common(interp, common, false);
  interp->add_option("--trials", trials, "number of instances");
  auto* appendix = verify->add_subcommand("appendix", "elementary inequality suite");
  add_common(appendix, common, false);
  appendix->add_option("--trials", trials, "samples per inequality");

  auto* qf = app.add_subcommand("qfclt", "invariance principle experiments")->require_subcommand(1);
  auto* qf_run = qf->add_subcommand("run", "run the scaling experiment");
  add_common(qf_run, common, true);

  auto* report = app.add_subcommand("report", "aggregate JSON reports of a directory");
  add_common(report, common, false);
  report->add_option("--dir", report_dir, "directory to scan (default: --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*env_sample) return execute("env sample", common, true, cmd_env_sample);
  if (*walk_sim) return execute("walk simulate", common, true, cmd_walk_simulate);
  if (*corr_solve) return execute("corrector solve", common, true, cmd_corrector_solve);
  if (*corr_sub) return execute("corrector sublinearity", common, true, cmd_corrector_sublinearity);
  for (const auto& [name, c] : trend_cmds)
    if (*c) return execute("verify " + name, common, true, [&](Run& r) { return cmd_verify_trend(r, name); });
  if (*interp) return execute("verify interp", common, false, [&](Run& r) { return cmd_verify_interp(r, trials); });
  if (*appendix)
    return execute("verify appendix", common, false, [&](Run& r) { return cmd_verify_appendix(r, trials); });
  if (*qf_run) return execute("qfclt run", common, true, cmd_qfclt_run);
  if (*report) {
    const std::string dir = report_dir.empty() ? common.out : report_dir;
    return execute("report", common, false, [&](Run& r) { return cmd_report(r, dir); });
  }
  return 1;
}
