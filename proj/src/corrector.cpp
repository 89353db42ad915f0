#include "rcm/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "rcm/parallel.hpp"
#include "rcm/walker.hpp"

namespace rcm {

namespace {

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

// Field interval used by solver slice k of a solution grid.
class SliceMap {
 public:
  SliceMap(const TimeGrid& sol, const ConductanceField& omega) : omega_(omega) {
    const TimeGrid& g = omega.grid();
    if (std::fabs(sol.start - g.start) > 1e-9 * std::max(1.0, std::fabs(g.start)))
      throw std::invalid_argument("grid mismatch: start times differ");
    if (std::fabs(sol.period() - g.period()) > 1e-9 * g.period())
      throw std::invalid_argument("grid mismatch: periods differ");
    if (sol.count == 1) {
      if (!omega.time_constant())
        throw std::invalid_argument("grid mismatch: single-slice solution on a dynamic field");
      sub_ = 1;
      return;
    }
    const double ratio = g.step / sol.step;
    sub_ = static_cast<std::int64_t>(std::llround(ratio));
    if (sub_ < 1 || std::fabs(ratio - static_cast<double>(sub_)) > 1e-9 * ratio)
      throw std::invalid_argument("grid mismatch: solution step does not divide the field step");
  }
  std::int64_t env(std::int64_t k) const { return omega_.time_constant() ? 0 : k / sub_; }
  std::span<const double> omega(std::int64_t k) const { return omega_.slice(env(k)); }

 private:
  const ConductanceField& omega_;
  std::int64_t sub_ = 1;
};

// max over sites and slices of |-(chi_{k+1}-chi_k)/dt + L Pi^j - L_k chi_k| for one component
double component_residual(const SpaceTimeField& chi, const ConductanceField& omega, int j) {
  const TorusLattice& lat = chi.lattice();
  const TimeGrid& g = chi.grid();
  const SliceMap map(g, omega);
  const std::int64_t K = g.count;
  const std::int64_t N = lat.num_vertices();
  const int d = lat.dim();
  std::vector<double> cur(sz(N)), next(sz(N));
  auto load = [&](std::int64_t k, std::vector<double>& out) {
    const auto s = chi.slice(k % K);
    for (Vertex x = 0; x < N; ++x) out[sz(x)] = s[sz(x * d + j)];
  };
  double worst = 0.0;
  for (std::int64_t k = 0; k < K; ++k) {
    load(k, cur);
    load(k + 1, next);
    const auto w = map.omega(k);
    // L Pi^j = -div(w grad Pi^j); grad Pi^j is 1 on direction-j edges
    EdgeField V(sz(lat.num_edges()), 0.0);
    for (Vertex x = 0; x < N; ++x) V[sz(lat.edge(x, j))] = w[sz(lat.edge(x, j))];
    const VertexField divV = div(lat, V);
    const VertexField Lchi = generator_apply(lat, w, cur);
    for (Vertex x = 0; x < N; ++x) {
      const double r = -(next[sz(x)] - cur[sz(x)]) / g.step - divV[sz(x)] - Lchi[sz(x)];
      worst = std::max(worst, std::fabs(r));
    }
  }
  return worst;
}

void project_slices(CorrectorSolution& sol, int j) {
  const std::int64_t K = sol.chi.grid().count;
  const std::int64_t N = sol.chi.lattice().num_vertices();
  const int d = sol.dim();
  if (sol.gauge.size() != sz(K * d)) sol.gauge.assign(sz(K * d), 0.0);
  for (std::int64_t k = 0; k < K; ++k) {
    auto s = sol.chi.slice(k);
    NeumaierSum acc;
    for (Vertex x = 0; x < N; ++x) acc.add(s[sz(x * d + j)]);
    const double m = acc.value() / static_cast<double>(N);
    for (Vertex x = 0; x < N; ++x) s[sz(x * d + j)] -= m;
    sol.gauge[sz(k * d + j)] = m;
    sol.mass_drift = std::max(sol.mass_drift, std::fabs(m));
  }
}

void check_memory(double bytes, const SolverOptions& opt) {
  if (bytes > opt.memory_cap_bytes)
    throw std::runtime_error("memory cap exceeded: need " + std::to_string(bytes) + " bytes");
}

}  // namespace

VertexField drift_divergence(const TorusLattice& lat, std::span<const double> omega, int j) {
  const std::int64_t N = lat.num_vertices();
  const int d = lat.dim();
  VertexField out(sz(N));
  for (Vertex x = 0; x < N; ++x) {
    const Vertex dn = lat.neighbor(x, j, -1);
    out[sz(x)] = omega[sz(dn * d + j)] - omega[sz(x * d + j)];
  }
  return out;
}

double CorrectorSolution::chi_at(double t, Vertex x, int j) const {
  const TimeGrid& g = chi.grid();
  const std::size_t off = static_cast<std::size_t>(x * chi.components() + j);
  if (g.count == 1) return chi.slice(0)[off];
  const double tau = (t - g.start) / g.step;
  double fl = std::floor(tau);
  double theta = tau - fl;
  if (theta > 1.0 - 1e-12) {
    fl += 1.0;
    theta = 0.0;
  }
  const std::int64_t K = g.count;
  std::int64_t k = static_cast<std::int64_t>(fl) % K;
  if (k < 0) k += K;
  const double a = chi.slice(k)[off];
  if (theta == 0.0) return a;
  const double b = chi.slice((k + 1) % K)[off];
  return (1.0 - theta) * a + theta * b;
}

double CorrectorSolution::phi_at(double t, const Coord& lifted, int j) const {
  return static_cast<double>(lifted[static_cast<std::size_t>(j)]) -
         chi_at(t, lattice().index(lifted), j);
}

ChiFunction chi_function(const CorrectorSolution& sol) {
  const CorrectorSolution* p = &sol;
  return [p](double t, Vertex x, int j) { return p->chi_at(t, x, j); };
}

double solver_step(const ConductanceField& omega, const SolverOptions& opt) {
  const double h = omega.grid().step;
  if (opt.dt < 0.0) return h;
  if (opt.dt == 0.0) {
    const double m = omega.max_mu();
    const double sub = std::max(1.0, std::ceil(h * m - 1e-12));
    return h / sub;
  }
  const double ratio = h / opt.dt;
  const double r = std::round(ratio);
  if (r < 1.0 || std::fabs(ratio - r) > 1e-9 * ratio)
    throw std::invalid_argument("solver dt must divide the field step");
  return h / r;
}

// ---- static solver ------------------------------------------------------------

CorrectorSolution solve_static_corrector(const ConductanceField& omega, const SolverOptions& opt) {
  if (!omega.time_constant()) throw std::invalid_argument("static solver needs a time-constant field");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  const TorusLattice& lat = omega.lattice();
  const int d = lat.dim();
  const std::int64_t N = lat.num_vertices();
  const auto w = omega.slice(0);
  require_positive(w);
  check_memory(8.0 * static_cast<double>(N) * (d + 6), opt);
  const TimeGrid& og = omega.grid();
  CorrectorSolution sol;
  sol.chi = SpaceTimeField(lat, TimeGrid{og.start, og.period(), 1, true}, FieldKind::vertex, d);
  sol.method = "static";
  sol.tol = opt.tol;
  const VertexField diag = mu_of(lat, w, false);
  const LinearOp A = [&](std::span<const double> x, std::span<double> y) {
    generator_apply_into(lat, w, x, y);
    for (double& v : y) v = -v;
  };
  KrylovOptions ko;
  ko.abs_tol = opt.tol;
  ko.max_iterations = opt.max_iterations;
  ko.project_mean = true;
  for (int j = 0; j < d; ++j) {
    const VertexField b = drift_divergence(lat, w, j);
    std::vector<double> x(sz(N), 0.0);
    const KrylovResult r = pcg(A, diag, b, x, ko);
    if (!r.converged)
      throw std::runtime_error("static corrector did not converge: residual " +
                               std::to_string(r.residual));
    sol.iterations += r.iterations;
    auto s = sol.chi.slice(0);
    for (Vertex v = 0; v < N; ++v) s[sz(v * d + j)] = x[sz(v)];
    project_slices(sol, j);
  }
  sol.residual = harmonic_residual(sol, omega);
  if (sol.residual > opt.tol)
    throw std::runtime_error("static corrector residual " + std::to_string(sol.residual) +
                             " above tol");
  return sol;
}

// ---- time-periodic solver --------------------------------------------------------

namespace {

// Backward implicit sweep (I - dt L_k) u_k = u_{k+1} + dt b_k over one period.
struct PeriodicSweeper {
  const TorusLattice& lat;
  const ConductanceField& omega;
  std::int64_t K;
  std::int64_t sub;
  double dt;
  int max_iterations;
  std::int64_t N;
  std::vector<std::vector<double>> diag;  // per stored field slice
  std::vector<std::vector<double>> rhs;   // per stored field slice, current component
  std::vector<double> tmp;
  std::int64_t inner_iterations = 0;

  PeriodicSweeper(const ConductanceField& w, std::int64_t sub_steps, double step, int max_it)
      : lat(w.lattice()), omega(w), K(w.grid().count * sub_steps), sub(sub_steps), dt(step),
        max_iterations(max_it), N(w.lattice().num_vertices()), tmp(sz(N)) {
    const std::int64_t S = w.time_constant() ? 1 : w.grid().count;
    diag.resize(sz(S));
    for (std::int64_t s = 0; s < S; ++s) {
      require_positive(w.slice(s));
      diag[sz(s)] = mu_of(lat, w.slice(s), false);
      for (double& v : diag[sz(s)]) v = 1.0 + dt * v;
    }
    rhs.resize(sz(S));
  }

  std::int64_t stored(std::int64_t k) const { return omega.time_constant() ? 0 : k / sub; }

  void set_component(int j) {
    for (std::size_t s = 0; s < rhs.size(); ++s)
      rhs[s] = drift_divergence(lat, omega.slice(static_cast<std::int64_t>(s)), j);
  }

  void solve_slice(std::int64_t k, std::span<const double> b, std::span<double> x, double tol) {
    const auto w = omega.slice(stored(k));
    const LinearOp A = [&](std::span<const double> in, std::span<double> out) {
      generator_apply_into(lat, w, in, out);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] - dt * out[i];
    };
    KrylovOptions ko;
    ko.abs_tol = tol;
    ko.max_iterations = max_iterations;
    const KrylovResult r = pcg(A, diag[sz(stored(k))], b, x, ko);
    inner_iterations += r.iterations;
    if (!r.converged)
      throw std::runtime_error("implicit step did not converge: residual " +
                               std::to_string(r.residual));
  }

  // u holds u_K on entry and u_0 on exit; store(k, u_k) is called for every slice
  template <class Store>
  void sweep(std::vector<double>& u, bool with_rhs, double tol, Store&& store) {
    std::vector<double> b(sz(N));
    for (std::int64_t k = K - 1; k >= 0; --k) {
      const auto& r = rhs[sz(stored(k))];
      for (std::int64_t x = 0; x < N; ++x) b[sz(x)] = u[sz(x)] + (with_rhs ? dt * r[sz(x)] : 0.0);
      solve_slice(k, b, u, tol);
      store(k, u);
    }
  }
};

}  // namespace

CorrectorSolution solve_poisson_time_periodic(const ConductanceField& omega,
                                              const SolverOptions& opt) {
  if (!omega.periodic()) throw std::invalid_argument("time-periodic solver needs a periodic field");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  const TorusLattice& lat = omega.lattice();
  const int d = lat.dim();
  const std::int64_t N = lat.num_vertices();
  const double dt = solver_step(omega, opt);
  const std::int64_t sub = std::llround(omega.grid().step / dt);
  const std::int64_t K = omega.grid().count * sub;
  const int restart = std::max(1, std::min<int>(opt.restart, static_cast<int>(N)));
  check_memory(8.0 * static_cast<double>(N) *
                   (static_cast<double>(K) * d + restart + 8.0 +
                    (omega.time_constant() ? 2.0 : 2.0 * static_cast<double>(omega.grid().count))),
               opt);

  CorrectorSolution sol;
  sol.chi = SpaceTimeField(lat, TimeGrid{omega.grid().start, dt, K, true}, FieldKind::vertex, d);
  sol.method = "time_periodic";
  sol.tol = opt.tol;

  // warm start: static corrector of the time-averaged field
  std::vector<double> warm;
  if (opt.warm_start) {
    std::vector<double> avg(sz(lat.num_edges()), 0.0);
    const std::int64_t S = omega.time_constant() ? 1 : omega.grid().count;
    for (std::int64_t s = 0; s < S; ++s) {
      const auto w = omega.slice(s);
      for (std::size_t e = 0; e < avg.size(); ++e) avg[e] += w[e] / static_cast<double>(S);
    }
    SolverOptions so = opt;
    so.tol = 0.1 * opt.tol;
    const ConductanceField mean_field(lat, TimeGrid{omega.grid().start, omega.grid().period(), 1, true},
                                      std::move(avg));
    try {
      const CorrectorSolution st = solve_static_corrector(mean_field, so);
      warm.assign(st.chi.values().begin(), st.chi.values().end());
    } catch (const std::runtime_error&) {
      warm.clear();
    }
  }

  PeriodicSweeper sw(omega, sub, dt, opt.max_iterations);
  const double sqrtK = std::sqrt(static_cast<double>(K));
  for (int j = 0; j < d; ++j) {
    sw.set_component(j);
    std::vector<double> v(sz(N), 0.0);
    if (!warm.empty())
      for (Vertex x = 0; x < N; ++x) v[sz(x)] = warm[sz(x * d + j)];
    remove_mean(v);
    double scale = 1.0;
    double res_j = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 4; ++attempt) {
      const double inner_tol = 0.02 * opt.tol * dt * scale / sqrtK;
      const double outer_tol = 0.25 * opt.tol * dt * scale;
      std::vector<double> g(sz(N), 0.0);
      sw.sweep(g, true, inner_tol, [](std::int64_t, const std::vector<double>&) {});
      const LinearOp period_map = [&](std::span<const double> in, std::span<double> out) {
        std::vector<double> u(in.begin(), in.end());
        sw.sweep(u, false, inner_tol, [](std::int64_t, const std::vector<double>&) {});
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] - u[i];
      };
      KrylovOptions ko;
      ko.abs_tol = outer_tol;
      ko.max_iterations = opt.max_iterations;
      ko.restart = restart;
      ko.project_mean = true;
      const KrylovResult r = gmres(period_map, {}, g, v, ko);
      sol.iterations += r.iterations;
      if (!r.converged && attempt == 3)
        throw std::runtime_error("time-periodic corrector did not converge: residual " +
                                 std::to_string(r.residual));
      std::vector<double> u = v;
      sw.sweep(u, true, inner_tol, [&](std::int64_t k, const std::vector<double>& uk) {
        auto s = sol.chi.slice(k);
        for (Vertex x = 0; x < N; ++x) s[sz(x * d + j)] = uk[sz(x)];
      });
      project_slices(sol, j);
      res_j = component_residual(sol.chi, omega, j);
      if (r.converged && res_j <= opt.tol) break;
      scale *= 0.1;
    }
    if (res_j > opt.tol)
      throw std::runtime_error("time-periodic corrector residual " + std::to_string(res_j) +
                               " above tol");
    sol.residual = std::max(sol.residual, res_j);
  }
  return sol;
}

CorrectorSolution solve_corrector(const ConductanceField& omega, const SolverOptions& opt) {
  if (omega.time_constant()) return solve_static_corrector(omega, opt);
  return solve_poisson_time_periodic(omega, opt);
}

double harmonic_residual(const CorrectorSolution& sol, const ConductanceField& omega) {
  if (!(sol.lattice() == omega.lattice())) throw std::invalid_argument("grid mismatch: lattices differ");
  if (sol.chi.components() != omega.lattice().dim())
    throw std::invalid_argument("corrector needs one component per dimension");
  double worst = 0.0;
  for (int j = 0; j < sol.dim(); ++j) worst = std::max(worst, component_residual(sol.chi, omega, j));
  return worst;
}

// ---- regularized solver -----------------------------------------------------------

namespace {

struct TimeStencil {
  TimeDifference diff;
  double dt;
  std::int64_t K;
  std::int64_t wrap(std::int64_t k) const { return ((k % K) + K) % K; }
  // D0 on a time series given by get(k)
  template <class Get>
  double d0(Get&& get, std::int64_t k) const {
    if (diff == TimeDifference::forward) return (get(wrap(k + 1)) - get(k)) / dt;
    return (get(wrap(k + 1)) - get(wrap(k - 1))) / (2.0 * dt);
  }
  template <class Get>
  double d0_star_d0(Get&& get, std::int64_t k) const {
    if (diff == TimeDifference::forward)
      return (2.0 * get(k) - get(wrap(k + 1)) - get(wrap(k - 1))) / (dt * dt);
    return (2.0 * get(k) - get(wrap(k + 2)) - get(wrap(k - 2))) / (4.0 * dt * dt);
  }
};

}  // namespace

CorrectorSolution solve_regularized(const ConductanceField& omega, double beta,
                                    const SolverOptions& opt) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!omega.periodic()) throw std::invalid_argument("regularized solver needs a periodic field");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  const TorusLattice& lat = omega.lattice();
  const int d = lat.dim();
  const std::int64_t N = lat.num_vertices();
  const double dt = solver_step(omega, opt);
  const std::int64_t sub = std::llround(omega.grid().step / dt);
  const std::int64_t K = omega.grid().count * sub;
  const std::int64_t M = K * N;
  const int restart = std::max(1, std::min<int>(opt.restart, static_cast<int>(M)));
  check_memory(8.0 * static_cast<double>(M) * (restart + 8.0 + d), opt);

  CorrectorSolution sol;
  sol.chi = SpaceTimeField(lat, TimeGrid{omega.grid().start, dt, K, true}, FieldKind::vertex, d);
  sol.method = "regularized";
  sol.tol = opt.tol;
  sol.beta = beta;
  const TimeStencil ts{opt.time_difference, dt, K};
  auto env = [&](std::int64_t k) { return omega.time_constant() ? 0 : k / sub; };

  // diagonal: 2 mu + beta plus the constant diagonal of the time stencil
  const auto unit = [](std::int64_t k) { return k == 0 ? 1.0 : 0.0; };
  const double time_diag = -2.0 * ts.d0(unit, 0) + beta * ts.d0_star_d0(unit, 0);
  std::vector<double> diag(sz(M));
  for (std::int64_t k = 0; k < K; ++k) {
    const VertexField mu = mu_of(lat, omega.slice(env(k)), false);
    for (Vertex x = 0; x < N; ++x) diag[sz(k * N + x)] = 2.0 * mu[sz(x)] + beta + time_diag;
  }

  const LinearOp A = [&](std::span<const double> in, std::span<double> out) {
    for (std::int64_t k = 0; k < K; ++k) {
      const auto w = omega.slice(env(k));
      std::span<double> o = out.subspan(sz(k * N), sz(N));
      generator_apply_into(lat, w, in.subspan(sz(k * N), sz(N)), o);
      for (Vertex x = 0; x < N; ++x) {
        const auto get = [&](std::int64_t kk) { return in[sz(kk * N + x)]; };
        o[sz(x)] = -2.0 * ts.d0(get, k) - 2.0 * o[sz(x)] + beta * ts.d0_star_d0(get, k) +
                   beta * in[sz(k * N + x)];
      }
    }
  };

  KrylovOptions ko;
  ko.abs_tol = opt.tol;
  ko.max_iterations = opt.max_iterations;
  ko.restart = restart;
  for (int j = 0; j < d; ++j) {
    std::vector<double> b(sz(M));
    for (std::int64_t k = 0; k < K; ++k) {
      const VertexField r = drift_divergence(lat, omega.slice(env(k)), j);
      for (Vertex x = 0; x < N; ++x) b[sz(k * N + x)] = 2.0 * r[sz(x)];
    }
    std::vector<double> psi(sz(M), 0.0);
    const KrylovResult r = gmres(A, diag, b, psi, ko);
    sol.iterations += r.iterations;
    if (!r.converged)
      throw std::runtime_error("regularized corrector did not converge: residual " +
                               std::to_string(r.residual));
    sol.residual = std::max(sol.residual, r.residual);
    for (std::int64_t k = 0; k < K; ++k) {
      auto s = sol.chi.slice(k);
      for (Vertex x = 0; x < N; ++x) s[sz(x * d + j)] = psi[sz(k * N + x)];
    }
    project_slices(sol, j);
  }
  return sol;
}

RegularizedEnergy regularized_energy(const CorrectorSolution& sol, const ConductanceField& omega,
                                     int j, TimeDifference diff) {
  const TorusLattice& lat = sol.lattice();
  const TimeGrid& g = sol.grid();
  const SliceMap map(g, omega);
  const std::int64_t K = g.count;
  const std::int64_t N = lat.num_vertices();
  const int d = lat.dim();
  if (j < 0 || j >= d) throw std::invalid_argument("component out of range");
  const TimeStencil ts{diff, g.step, K};
  NeumaierSum dir, td, l2, mu;
  for (std::int64_t k = 0; k < K; ++k) {
    const auto w = map.omega(k);
    const auto s = sol.chi.slice(k);
    for (Vertex x = 0; x < N; ++x) {
      const double px = s[sz(x * d + j)];
      for (int i = 0; i < d; ++i) {
        const Vertex y = lat.neighbor(x, i, +1);
        const double gr = s[sz(y * d + j)] - px;
        dir.add(2.0 * w[sz(lat.edge(x, i))] * gr * gr);
      }
      const auto get = [&](std::int64_t kk) { return sol.chi.slice(kk)[sz(x * d + j)]; };
      const double dpsi = ts.d0(get, k);
      td.add(dpsi * dpsi);
      l2.add(px * px);
    }
    for (double m : mu_of(lat, w, false)) mu.add(m);
  }
  const double cells = static_cast<double>(K * N);
  RegularizedEnergy e;
  e.dirichlet = dir.value() / cells;
  e.time_diff = td.value() / cells;
  e.l2 = l2.value() / cells;
  e.lhs = e.dirichlet + sol.beta * (e.time_diff + e.l2);
  e.mu_average = mu.value() / cells;
  return e;
}

// ---- covariance ---------------------------------------------------------------------

Matrix covariance_estimate(const CorrectorSolution& sol, const ConductanceField& omega) {
  const TorusLattice& lat = sol.lattice();
  const SliceMap map(sol.grid(), omega);
  const int d = lat.dim();
  const std::int64_t K = sol.grid().count;
  const std::int64_t N = lat.num_vertices();
  std::vector<NeumaierSum> acc(sz(d * d));
  std::vector<double> gphi(sz(d));
  for (std::int64_t k = 0; k < K; ++k) {
    const auto w = map.omega(k);
    const auto s = sol.chi.slice(k);
    for (Vertex x = 0; x < N; ++x) {
      for (int e = 0; e < d; ++e) {
        const Vertex y = lat.neighbor(x, e, +1);
        const double we = w[sz(lat.edge(x, e))];
        for (int i = 0; i < d; ++i)
          gphi[sz(i)] = (i == e ? 1.0 : 0.0) - (s[sz(y * d + i)] - s[sz(x * d + i)]);
        for (int i = 0; i < d; ++i)
          for (int m = 0; m < d; ++m) acc[sz(i * d + m)].add(we * gphi[sz(i)] * gphi[sz(m)]);
      }
    }
  }
  Matrix c(d, d);
  const double cells = static_cast<double>(K * N);
  for (int i = 0; i < d; ++i)
    for (int m = 0; m < d; ++m) c(i, m) = 2.0 * acc[sz(i * d + m)].value() / cells;
  return c;
}


// ---- martingale check -------------------------------------------------------------

namespace {

// Breakpoints in (a, b) where the integrand of the predicted quadratic variation may
// change form: field interval boundaries and chi grid points.
std::vector<double> piece_cuts(double a, double b, const ConductanceField& omega, double chi_step) {
  std::vector<double> cuts{a};
  const TimeGrid& og = omega.grid();
  if (!omega.time_constant())
    for (std::int64_t k = og.interval_of(a) + 1; og.time(k) < b; ++k)
      if (og.time(k) > a) cuts.push_back(og.time(k));
  if (chi_step > 0.0) {
    const double first = og.start + std::floor((a - og.start) / chi_step + 1.0) * chi_step;
    for (std::int64_t i = 0;; ++i) {
      const double c = first + static_cast<double>(i) * chi_step;
      if (c >= b) break;
      if (c > a) cuts.push_back(c);
    }
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  return cuts;
}

struct PathRecord {
  std::vector<double> increments;  // interval-major, d values per interval
  std::vector<double> qv_emp;
  std::vector<double> qv_pred;
};

}  // namespace

MartingaleReport martingale_check(const ChiFunction& chi, const ConductanceField& omega,
                                  const MartingaleOptions& opt) {
  const TorusLattice& lat = omega.lattice();
  const int d = lat.dim();
  if (opt.t_grid.size() < 2) throw std::invalid_argument("martingale_check needs two grid times");
  for (std::size_t i = 1; i < opt.t_grid.size(); ++i)
    if (!(opt.t_grid[i] > opt.t_grid[i - 1])) throw std::invalid_argument("t_grid must increase");
  if (opt.n_paths < 2) throw std::invalid_argument("martingale_check needs two paths");
  const int n_int = static_cast<int>(opt.t_grid.size()) - 1;

  // coordinate axes and the normalised diagonal
  std::vector<std::vector<double>> dirs;
  for (int i = 0; i < d; ++i) {
    std::vector<double> v(sz(d), 0.0);
    v[sz(i)] = 1.0;
    dirs.push_back(v);
  }
  dirs.push_back(std::vector<double>(sz(d), 1.0 / std::sqrt(static_cast<double>(d))));
  const int nd = static_cast<int>(dirs.size());

  const double t0 = opt.t_grid.front();
  const double t1 = opt.t_grid.back();
  const TimeGrid& og = omega.grid();
  const VsrwSampler sampler(omega);

  std::vector<PathRecord> rec(sz(opt.n_paths));
  parallel_for(opt.n_paths, [&](std::int64_t begin, std::int64_t end) {
    std::vector<double> dphi(sz(d)), cx(sz(d)), fa(sz(nd)), fm(sz(nd)), fb(sz(nd));
    for (std::int64_t p = begin; p < end; ++p) {
      PathRecord& R = rec[sz(p)];
      R.increments.assign(sz(n_int * d), 0.0);
      R.qv_emp.assign(sz(nd), 0.0);
      R.qv_pred.assign(sz(nd), 0.0);
      CounterRng rng(opt.seed, StreamTag::walker, static_cast<std::uint64_t>(p));
      Vertex x = opt.start;
      Coord lifted = lat.coords(x);
      std::vector<double> last_phi(sz(d));
      for (int j = 0; j < d; ++j) last_phi[sz(j)] = static_cast<double>(lifted[sz(j)]) - chi(t0, x, j);
      std::size_t next_grid = 1;
      double last_time = t0;

      // sum over neighbours of w (v . grad Phi)^2 at time t
      auto rate = [&](double t, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        const auto w = omega.slice(omega.time_constant() ? 0 : og.interval_of(t));
        for (int j = 0; j < d; ++j) cx[sz(j)] = chi(t, x, j);
        for (int i = 0; i < d; ++i)
          for (int sg = -1; sg <= 1; sg += 2) {
            const Vertex y = lat.neighbor(x, i, sg);
            const double we = w[sz(lat.incident_edge(x, i, sg))];
            for (int j = 0; j < d; ++j)
              dphi[sz(j)] = (j == i ? static_cast<double>(sg) : 0.0) - (chi(t, y, j) - cx[sz(j)]);
            for (int v = 0; v < nd; ++v) {
              double s = 0.0;
              for (int j = 0; j < d; ++j) s += dirs[sz(v)][sz(j)] * dphi[sz(j)];
              out[sz(v)] += we * s * s;
            }
          }
      };
      // Simpson on each polynomial piece; endpoints taken as one-sided limits
      auto integrate_hold = [&](double a, double b) {
        if (!(b > a)) return;
        const auto cuts = piece_cuts(a, b, omega, opt.chi_step);
        for (std::size_t i = 1; i < cuts.size(); ++i) {
          const double lo = cuts[i - 1], hi = cuts[i];
          const double h = hi - lo;
          if (!(h > 0.0)) continue;
          const double eps = std::min(1e-9 * h, 1e-12 * std::max(1.0, std::fabs(hi)));
          rate(lo + eps, fa);
          rate(0.5 * (lo + hi), fm);
          rate(hi - eps, fb);
          for (int v = 0; v < nd; ++v)
            R.qv_pred[sz(v)] += h / 6.0 * (fa[sz(v)] + 4.0 * fm[sz(v)] + fb[sz(v)]);
        }
      };
      auto record_grid = [&](double upto) {
        while (next_grid < opt.t_grid.size() && opt.t_grid[next_grid] <= upto) {
          const double tg = opt.t_grid[next_grid];
          for (int j = 0; j < d; ++j) {
            const double ph = static_cast<double>(lifted[sz(j)]) - chi(tg, x, j);
            R.increments[sz((next_grid - 1) * d + j)] = ph - last_phi[sz(j)];
            last_phi[sz(j)] = ph;
          }
          ++next_grid;
        }
      };
      sampler.run(t0, x, t1, rng, [&](const JumpEvent& ev) {
        integrate_hold(last_time, ev.time);
        record_grid(ev.time);
        for (int j = 0; j < d; ++j)
          dphi[sz(j)] = (j == ev.dir ? static_cast<double>(ev.sign) : 0.0) -
                        (chi(ev.time, ev.to, j) - chi(ev.time, ev.from, j));
        for (int v = 0; v < nd; ++v) {
          double s = 0.0;
          for (int j = 0; j < d; ++j) s += dirs[sz(v)][sz(j)] * dphi[sz(j)];
          R.qv_emp[sz(v)] += s * s;
        }
        x = ev.to;
        lifted[sz(ev.dir)] += ev.sign;
        last_time = ev.time;
      });
      integrate_hold(last_time, t1);
      record_grid(t1);
    }
  });

  MartingaleReport rep;
  const double np = static_cast<double>(opt.n_paths);
  rep.increments_pass = true;
  for (int i = 0; i < n_int; ++i)
    for (int j = 0; j < d; ++j) {
      NeumaierSum s;
      for (const auto& R : rec) s.add(R.increments[sz(i * d + j)]);
      const double m = s.value() / np;
      NeumaierSum v;
      for (const auto& R : rec) {
        const double dv = R.increments[sz(i * d + j)] - m;
        v.add(dv * dv);
      }
      const double se = std::sqrt(v.value() / (np - 1.0) / np);
      IncrementStat st{i, j, m, se, se > 0 ? m / se : (m == 0.0 ? 0.0 : kInf), false};
      st.pass = std::fabs(st.z) <= opt.sigma_level;
      rep.increments_pass = rep.increments_pass && st.pass;
      rep.increments.push_back(st);
    }
  rep.qv_pass = true;
  for (int v = 0; v < nd; ++v) {
    NeumaierSum e, p;
    for (const auto& R : rec) {
      e.add(R.qv_emp[sz(v)]);
      p.add(R.qv_pred[sz(v)]);
    }
    QvStat q{dirs[sz(v)], e.value() / np, p.value() / np, 0.0, false};
    q.relative_error = q.predicted > 0 ? std::fabs(q.empirical - q.predicted) / q.predicted
                                       : (q.empirical == 0.0 ? 0.0 : kInf);
    q.pass = q.relative_error <= opt.qv_tolerance;
    rep.qv_pass = rep.qv_pass && q.pass;
    rep.qv.push_back(q);
  }
  rep.pass = rep.increments_pass && rep.qv_pass;
  return rep;
}

MartingaleReport martingale_check(const CorrectorSolution& sol, const ConductanceField& omega,
                                  const MartingaleOptions& opt) {
  (void)SliceMap(sol.grid(), omega);
  MartingaleOptions o = opt;
  if (o.chi_step <= 0.0 && sol.grid().count > 1) o.chi_step = sol.grid().step;
  return martingale_check(chi_function(sol), omega, o);
}

// ---- corrector control ---------------------------------------------------------------

ControlReport corrector_control(const CorrectorSolution& sol, const ConductanceField& omega, double n,
                                double T, std::int64_t n_paths, std::uint64_t seed,
                                double start_time, Vertex start) {
  if (!(n > 0.0) || !(T > 0.0) || n_paths < 1)
    throw std::invalid_argument("corrector_control: n, T and n_paths must be positive");
  (void)SliceMap(sol.grid(), omega);
  const int d = sol.dim();
  const TimeGrid& cg = sol.grid();
  const double t_end = start_time + n * n * T;
  const VsrwSampler sampler(omega);
  auto norm_at = [&](double t, Vertex x) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = sol.chi_at(t, x, j);
      s += c * c;
    }
    return std::sqrt(s);
  };
  // sup over [a, b] at fixed x: chi is linear between its grid points
  auto hold_sup = [&](double a, double b, Vertex x) {
    double m = std::max(norm_at(a, x), norm_at(b, x));
    if (cg.count > 1) {
      const double first = cg.start + std::floor((a - cg.start) / cg.step + 1.0) * cg.step;
      for (double c = first; c < b; c += cg.step) m = std::max(m, norm_at(c, x));
    }
    return m;
  };
  ControlReport rep;
  rep.values.assign(sz(n_paths), 0.0);
  parallel_for(n_paths, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t p = begin; p < end; ++p) {
      CounterRng rng(seed, StreamTag::walker, static_cast<std::uint64_t>(p));
      Vertex x = start;
      double last = start_time;
      double best = 0.0;
      sampler.run(start_time, start, t_end, rng, [&](const JumpEvent& ev) {
        best = std::max(best, hold_sup(last, ev.time, x));
        x = ev.to;
        last = ev.time;
      });
      best = std::max(best, hold_sup(last, t_end, x));
      rep.values[sz(p)] = best / n;
    }
  });
  rep.quantiles = quantiles(rep.values);
  return rep;
}

// ---- sublinearity ----------------------------------------------------------------------

void sublinearity_stats(const CorrectorSolution& sol, double n, double& max_stat, double& l1_stat) {
  const TorusLattice& lat = sol.lattice();
  const TimeGrid& g = sol.grid();
  if (g.period() + 1e-9 < n * n) throw std::invalid_argument("sublinearity: period shorter than n^2");
  const SpaceTimeRegion region = make_region(SpaceTimeCylinder{g.start, n, 0, 1.0}, lat, g);
  const int d = sol.dim();
  double mx = 0.0;
  NeumaierSum l1;
  for (std::int64_t k : region.times) {
    const auto s = sol.chi.slice(k);
    NeumaierSum ball;
    for (Vertex x : region.sites) {
      double a = 0.0;
      for (int j = 0; j < d; ++j) a += s[sz(x * d + j)] * s[sz(x * d + j)];
      a = std::sqrt(a);
      mx = std::max(mx, a);
      ball.add(a);
    }
    l1.add(region.dt * ball.value() / static_cast<double>(region.sites.size()));
  }
  max_stat = mx / n;
  l1_stat = l1.value() / (n * n * n);
}

SublinearityTable sublinearity_profile(const SublinearityConfig& cfg) {
  if (cfg.n_list.empty() || cfg.seeds.empty())
    throw std::invalid_argument("sublinearity: empty scale or seed list");
  validate_model(cfg.model);
  SublinearityTable table;
  for (int n : cfg.n_list) {
    if (n < 1) throw std::invalid_argument("sublinearity: scales must be positive");
    const int side = cfg.side_factor * n;
    if (cfg.side_factor < 4) throw std::invalid_argument("sublinearity: side factor below 4");
    const double horizon = static_cast<double>(n) * n;
    const double env_dt = cfg.time_slices > 0 ? horizon / cfg.time_slices : cfg.env_dt;
    NeumaierSum smax, sl1;
    int ok = 0;
    for (std::uint64_t seed : cfg.seeds) {
      SublinearityRow row{n, seed, side, 0.0, 0.0, 0.0, 0, "ok"};
      const double verts = std::pow(static_cast<double>(side), cfg.dim);
      const double slices = model_is_static(cfg.model) ? 1.0 : std::ceil(horizon / env_dt - 1e-9);
      if (verts * slices * cfg.dim > cfg.max_cells) {
        row.status = "skipped: resource cap";
        table.partial = true;
        table.rows.push_back(row);
        continue;
      }
      const TorusLattice lat(cfg.dim, side);
      const std::uint64_t env_seed = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(n);
      const ConductanceField omega = sample_environment(cfg.model, lat, horizon, env_dt, env_seed);
      CorrectorSolution sol;
      try {
        sol = solve_corrector(omega, cfg.solver);
      } catch (const std::runtime_error& e) {
        row.status = std::string("skipped: ") + e.what();
        table.partial = true;
        table.rows.push_back(row);
        continue;
      }
      sublinearity_stats(sol, n, row.max_stat, row.l1_stat);
      row.residual = sol.residual;
      row.iterations = sol.iterations;
      smax.add(row.max_stat);
      sl1.add(row.l1_stat);
      ++ok;
      table.rows.push_back(row);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    table.mean_max_stat.push_back(ok > 0 ? smax.value() / ok : nan);
    table.mean_l1_stat.push_back(ok > 0 ? sl1.value() / ok : nan);
  }
  return table;
}

}  // namespace rcm
