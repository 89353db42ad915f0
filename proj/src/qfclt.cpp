#include "rcm/qfclt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "rcm/numeric.hpp"
#include "rcm/parallel.hpp"
#include "rcm/walker.hpp"

namespace rcm {

namespace {

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kCheckpoints = 3;
constexpr double kFractions[kCheckpoints] = {0.25, 0.5, 1.0};

std::uint64_t scale_stream(int n, std::int64_t p) {
  return (static_cast<std::uint64_t>(n) << 40) | static_cast<std::uint64_t>(p);
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

// lifted positions / n at T/4, T/2, T for every walker: [p][checkpoint][coord]
std::vector<double> simulate_ensemble(const ConductanceField& omega, int n, double T, std::int64_t walkers,
                                      std::uint64_t seed) {
  const int d = omega.lattice().dim();
  const double nd = n;
  std::vector<double> out(sz(walkers) * kCheckpoints * sz(d));
  const VsrwSampler sampler(omega);
  parallel_for(walkers, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t p = lo; p < hi; ++p) {
      CounterRng rng(seed, StreamTag::walker, scale_stream(n, p));
      std::array<std::int64_t, kMaxDim> acc{};
      double t = omega.grid().start;
      Vertex x = 0;
      for (int c = 0; c < kCheckpoints; ++c) {
        const double tc = omega.grid().start + kFractions[c] * T * nd * nd;
        x = sampler.run(t, x, tc, rng, [&](const JumpEvent& e) { acc[sz(e.dir)] += e.sign; });
        t = tc;
        for (int i = 0; i < d; ++i)
          out[(sz(p) * kCheckpoints + sz(c)) * sz(d) + sz(i)] = static_cast<double>(acc[sz(i)]) / nd;
      }
    }
  });
  return out;
}

// N rows of N(0, cov) rounded to the lattice h Z
std::vector<double> rounded_gaussian(const Matrix& cov, std::int64_t rows, double h, std::uint64_t seed,
                                     std::uint64_t stream) {
  const Matrix Lc = cholesky(cov);
  const int d = cov.rows;
  std::vector<double> y(sz(rows) * sz(d));
  CounterRng rng(seed, StreamTag::corpus, stream);
  std::vector<double> z(sz(d));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (double& v : z) v = rng.normal();
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j <= i; ++j) s += Lc(i, j) * z[sz(j)];
      y[sz(r) * sz(d) + sz(i)] = h > 0.0 ? h * std::round(s / h) : s;
    }
  }
  return y;
}

Matrix scaled(const Matrix& m, double s) {
  Matrix out = m;
  for (double& v : out.a) v *= s;
  return out;
}

// relative Frobenius distance |a - b| / |b|
double relative_frobenius(const Matrix& a, const Matrix& b) { return frobenius_norm(a - b) / frobenius_norm(b); }

bool is_psd(const std::vector<double>& ev) {
  const double top = ev.empty() ? 0.0 : std::fabs(ev.back());
  for (double e : ev)
    if (e < -1e-12 * std::max(1.0, top)) return false;
  return true;
}

std::vector<FunctionalStat> functionals(const std::vector<double>& xt, int d, const Matrix& ref, double T,
                                        std::uint64_t seed) {
  std::vector<FunctionalStat> out;
  const auto N = static_cast<std::int64_t>(xt.size() / sz(d));
  const double nn = static_cast<double>(N);
  auto finish = [&](FunctionalStat f, const std::vector<double>& ind) {
    NeumaierSum s;
    for (double v : ind) s.add(v);
    f.empirical = s.value() / nn;
    f.std_error = std::sqrt(std::max(0.0, f.empirical * (1.0 - f.empirical)) / nn);
    out.push_back(f);
  };
  std::vector<double> ind(sz(N));
  for (int i = 0; i < d; ++i) {
    const double s = std::sqrt(T * ref(i, i));
    for (double c : {-1.0, 0.0, 1.0}) {
      const double a = c * s;
      for (std::int64_t p = 0; p < N; ++p) {
        const double v = xt[sz(p) * sz(d) + sz(i)];
        ind[sz(p)] = v < a ? 1.0 : (v == a ? 0.5 : 0.0);
      }
      finish({"cdf_x" + std::to_string(i) + "_" + std::to_string(static_cast<int>(c)) + "sd", 0, 0,
              normal_cdf(c)},
             ind);
    }
  }
  double tr = 0.0;
  for (int i = 0; i < d; ++i) tr += ref(i, i);
  const std::int64_t draws = 200000;
  const std::vector<double> g = rounded_gaussian(scaled(ref, T), draws, 0.0, seed, 0xFFFFull << 40);
  for (double r : {0.5, 1.0}) {
    const double R = r * std::sqrt(T * tr);
    auto inside = [&](const double* x) {
      double q = 0.0;
      for (int i = 0; i < d; ++i) q += x[i] * x[i];
      return q <= R * R;
    };
    std::int64_t hits = 0;
    for (std::int64_t k = 0; k < draws; ++k) hits += inside(&g[sz(k) * sz(d)]) ? 1 : 0;
    for (std::int64_t p = 0; p < N; ++p) ind[sz(p)] = inside(&xt[sz(p) * sz(d)]) ? 1.0 : 0.0;
    finish({"radial_" + std::to_string(r).substr(0, 3), 0, 0, static_cast<double>(hits) / draws}, ind);
  }
  return out;
}

}  // namespace

void validate_experiment(const ExperimentConfig& cfg) {
  validate_model(cfg.model);
  if (cfg.dim < 1 || cfg.dim > kMaxDim) throw std::invalid_argument("dim must lie in [1, 4]");
  if (cfg.side < 4) throw std::invalid_argument("side must be >= 4");
  if (!(cfg.env_dt > 0.0)) throw std::invalid_argument("env_dt must be positive");
  if (cfg.n_list.empty()) throw std::invalid_argument("n_list must not be empty");
  for (int n : cfg.n_list) {
    if (n < 1) throw std::invalid_argument("n_list entries must be positive");
    if (4 * n > cfg.side) throw std::invalid_argument("n_list entry " + std::to_string(n) + " too large for side (4n <= L)");
  }
  if (cfg.walkers < 10) throw std::invalid_argument("walkers must be >= 10");
  if (!(cfg.T > 0.0)) throw std::invalid_argument("T must be positive");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
  if (cfg.permutations < 1) throw std::invalid_argument("permutations must be >= 1");
  if (cfg.control_paths < 0) throw std::invalid_argument("control_paths must be >= 0");
  if (!(cfg.covariance_tolerance > 0.0)) throw std::invalid_argument("covariance_tolerance must be positive");
  if (cfg.reference_identity && !std::holds_alternative<ConstantModel>(cfg.model))
    throw std::invalid_argument("reference_identity requires the constant model");
}

QfcltReport run_qfclt(const ExperimentConfig& cfg) {
  validate_experiment(cfg);
  const int d = cfg.dim;
  QfcltReport rep;
  rep.model = model_name(cfg.model);
  rep.seed = cfg.seed;
  rep.dim = d;
  rep.side = cfg.side;

  const TorusLattice lat(d, cfg.side);
  const int n_max = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());
  const double need = cfg.T * n_max * n_max;
  const bool stat = model_is_static(cfg.model);
  const double dt = stat ? need : cfg.env_dt;
  const double horizon = dt * std::ceil(need / dt - 1e-9);
  const ConductanceField omega = sample_environment(cfg.model, lat, horizon, dt, cfg.seed);

  CorrectorSolution sol;
  bool have_sol = false;
  if (cfg.formula) {
    const double slices = stat ? 1.0 : static_cast<double>(omega.grid().count);
    if (std::pow(static_cast<double>(cfg.side), d) * slices * d > cfg.max_cells) {
      rep.partial = true;
      rep.notes.push_back("formula covariance skipped: resource cap");
    } else {
      try {
        sol = solve_corrector(omega, cfg.solver);
        have_sol = true;
      } catch (const std::runtime_error& e) {
        rep.partial = true;
        rep.notes.push_back(std::string("formula covariance skipped: ") + e.what());
      }
    }
  }
  if (have_sol) {
    rep.formula_covariance = covariance_estimate(sol, omega);
    rep.formula_eigenvalues = symmetric_eigenvalues(rep.formula_covariance);
    rep.formula_min_eigenvalue = rep.formula_eigenvalues.front();
    rep.corrector_residual = sol.residual;
  }
  if (cfg.reference_identity) {
    rep.reference = Matrix::identity(d, 2.0 * std::get<ConstantModel>(cfg.model).c);
    rep.reference_kind = "identity";
  } else if (have_sol) {
    rep.reference = rep.formula_covariance;
    rep.reference_kind = "formula";
  } else {
    rep.reference_kind = "none";
  }

  const double tests = static_cast<double>(cfg.n_list.size()) * (d + 2);
  const double level_each = cfg.level / tests;
  for (int n : cfg.n_list) {
    ScaleReport sr;
    sr.n = n;
    const std::vector<double> pos = simulate_ensemble(omega, n, cfg.T, cfg.walkers, cfg.seed);
    const std::int64_t W = cfg.walkers;
    std::vector<double> xt(sz(W) * sz(d)), inc(sz(W) * kCheckpoints * sz(d));
    for (std::int64_t p = 0; p < W; ++p)
      for (int i = 0; i < d; ++i) {
        double prev = 0.0;
        for (int c = 0; c < kCheckpoints; ++c) {
          const double v = pos[(sz(p) * kCheckpoints + sz(c)) * sz(d) + sz(i)];
          inc[(sz(p) * kCheckpoints + sz(c)) * sz(d) + sz(i)] = v - prev;
          prev = v;
        }
        xt[sz(p) * sz(d) + sz(i)] = prev;
      }
    const Matrix cov_t = sample_covariance(xt, d);
    sr.covariance = scaled(cov_t, 1.0 / cfg.T);
    sr.eigenvalues = symmetric_eigenvalues(sr.covariance);
    sr.psd = is_psd(sr.eigenvalues) && is_symmetric(sr.covariance, 1e-12);

    const double h = 1.0 / n;
    for (int i = 0; i < d; ++i) {
      std::vector<double> xi(sz(W));
      for (std::int64_t p = 0; p < W; ++p) xi[sz(p)] = xt[sz(p) * sz(d) + sz(i)];
      const double m = mean(xi);
      const double s = std::sqrt(sample_variance(xi));
      TestResult r = ks_test_lattice(xi, h, [m, s](double x) { return normal_cdf((x - m) / s); }, level_each);
      r.name = "ks_x" + std::to_string(i);
      sr.ks.push_back(r);
    }
    const std::uint64_t gseed = cfg.seed ^ 0xA5A5A5A5ull;
    const std::vector<double> g = rounded_gaussian(cov_t, W, h, gseed, scale_stream(n, 0));
    sr.joint = energy_two_sample_test(xt, g, d, cfg.permutations, cfg.seed + static_cast<std::uint64_t>(n),
                                      level_each);
    sr.joint.name = "energy_joint";

    Matrix block(kCheckpoints * d, kCheckpoints * d);
    double prev_f = 0.0;
    for (int c = 0; c < kCheckpoints; ++c) {
      const double frac = kFractions[c] - prev_f;
      prev_f = kFractions[c];
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) block(c * d + i, c * d + j) = cov_t(i, j) * frac;
    }
    const std::vector<double> gi = rounded_gaussian(block, W, h, gseed, scale_stream(n, 1));
    sr.increments = energy_two_sample_test(inc, gi, kCheckpoints * d, cfg.permutations,
                                           cfg.seed + 7919ull * static_cast<std::uint64_t>(n), level_each);
    sr.increments.name = "energy_increments";

    if (rep.reference_kind != "none") {
      sr.covariance_error = relative_frobenius(sr.covariance, rep.reference);
      sr.covariance_pass = sr.covariance_error <= cfg.covariance_tolerance;
      sr.functionals = functionals(xt, d, rep.reference, cfg.T, gseed + static_cast<std::uint64_t>(n));
    } else {
      sr.covariance_error = kNaN;
    }
    if (have_sol && cfg.control_paths > 0) {
      sr.control = corrector_control(sol, omega, n, cfg.T, cfg.control_paths,
                                     cfg.seed ^ (0x3C6EF372ull * static_cast<std::uint64_t>(n)))
                       .quantiles;
      sr.has_control = true;
    }
    sr.pass = sr.psd && sr.joint.pass && sr.increments.pass && sr.covariance_pass;
    for (const auto& k : sr.ks) sr.pass = sr.pass && k.pass;
    rep.scales.push_back(sr);
  }

  const int entries = d * (d + 1) / 2;
  const std::size_t pairs = rep.scales.size() > 1 ? rep.scales.size() - 1 : 0;
  for (std::size_t a = 0; a < pairs; ++a) {
    const ScaleReport& s0 = rep.scales[a];
    const ScaleReport& s1 = rep.scales[a + 1];
    ScaleConsistency sc;
    sc.n_small = s0.n;
    sc.n_large = s1.n;
    sc.threshold = normal_quantile(1.0 - cfg.level / (2.0 * entries * static_cast<double>(pairs)));
    const double nw = static_cast<double>(cfg.walkers - 1);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        auto var = [&](const Matrix& m) { return (m(i, i) * m(j, j) + m(i, j) * m(i, j)) / nw; };
        const double se = std::sqrt(var(s0.covariance) + var(s1.covariance));
        sc.max_z = std::max(sc.max_z, std::fabs(s0.covariance(i, j) - s1.covariance(i, j)) / se);
      }
    sc.pass = sc.max_z <= sc.threshold;
    rep.consistency.push_back(sc);
  }

  rep.pass = true;
  for (const auto& s : rep.scales) rep.pass = rep.pass && s.pass;
  for (const auto& c : rep.consistency) rep.pass = rep.pass && c.pass;
  if (have_sol) rep.pass = rep.pass && rep.formula_min_eigenvalue > 0.0;
  return rep;
}

EnvironmentProcessReport environment_process_check(const ConductanceField& omega, std::int64_t n_paths,
                                                   const std::vector<double>& t_list, const LocalFunctional& phi,
                                                   std::uint64_t seed, double sigma_level) {
  if (n_paths < 2) throw std::invalid_argument("environment_process_check: need at least two paths");
  if (t_list.empty()) throw std::invalid_argument("environment_process_check: empty time list");
  const double t0 = omega.grid().start;
  for (std::size_t i = 0; i < t_list.size(); ++i)
    if (!(t_list[i] >= t0) || (i > 0 && !(t_list[i] > t_list[i - 1])))
      throw std::invalid_argument("environment_process_check: times must increase from the grid start");
  const std::size_t nt = t_list.size();
  const TorusLattice& lat = omega.lattice();
  std::vector<double> vals(sz(n_paths) * nt);
  const VsrwSampler sampler(omega);
  parallel_for(n_paths, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t p = lo; p < hi; ++p) {
      CounterRng start(seed, StreamTag::start, static_cast<std::uint64_t>(p));
      Vertex x = static_cast<Vertex>(start.below(static_cast<std::uint64_t>(lat.num_vertices())));
      CounterRng rng(seed, StreamTag::walker, static_cast<std::uint64_t>(p));
      double t = t0;
      for (std::size_t i = 0; i < nt; ++i) {
        x = sampler.run(t, x, t_list[i], rng, [](const JumpEvent&) {});
        t = t_list[i];
        vals[sz(p) * nt + i] = phi(omega, omega.grid().interval_of(t), x);
      }
    }
  });
  EnvironmentProcessReport r;
  r.times = t_list;
  r.sigma_level = sigma_level;
  for (std::size_t i = 0; i < nt; ++i) {
    std::vector<double> col(sz(n_paths));
    for (std::int64_t p = 0; p < n_paths; ++p) col[sz(p)] = vals[sz(p) * nt + i];
    r.means.push_back(mean(col));
    r.std_errors.push_back(std::sqrt(sample_variance(col) / static_cast<double>(n_paths)));
    const std::int64_t k = omega.grid().interval_of(t_list[i]);
    NeumaierSum s;
    for (Vertex x = 0; x < lat.num_vertices(); ++x) s.add(phi(omega, k, x));
    r.stationary.push_back(s.value() / static_cast<double>(lat.num_vertices()));
  }
  for (std::size_t a = 0; a < nt; ++a)
    for (std::size_t b = a + 1; b < nt; ++b) {
      const double se = std::sqrt(r.std_errors[a] * r.std_errors[a] + r.std_errors[b] * r.std_errors[b]);
      const double diff = std::fabs(r.means[a] - r.means[b]);
      const double z = se > 0.0 ? diff / se : (diff > 0.0 ? kInf : 0.0);
      r.max_pair_z = std::max(r.max_pair_z, z);
    }
  for (std::size_t i = 0; i < nt; ++i) {
    const double diff = std::fabs(r.means[i] - r.stationary[i]);
    const double z = r.std_errors[i] > 0.0 ? diff / r.std_errors[i] : (diff > 1e-12 ? kInf : 0.0);
    r.max_stationary_z = std::max(r.max_stationary_z, z);
  }
  r.pass = r.max_stationary_z <= sigma_level;
  return r;
}

}  // namespace rcm
