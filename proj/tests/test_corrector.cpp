#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "rcm/corrector.hpp"

using namespace rcm;

namespace {

ConductanceField random_field(int L, std::int64_t K, double dt, std::uint64_t seed, double lo = 0.5,
                              double hi = 2.0) {
  const TorusLattice lat(2, L);
  CounterRng rng(seed, StreamTag::corpus, 0);
  std::vector<double> v(static_cast<std::size_t>(lat.num_edges() * K));
  for (double& w : v) w = rng.uniform(lo, hi);
  return ConductanceField(lat, TimeGrid{0.0, dt, K, true}, std::move(v));
}

double max_diff_component(const CorrectorSolution& a, std::int64_t ka, const Eigen::VectorXd& b,
                          int j) {
  const std::int64_t N = a.lattice().num_vertices();
  double m = 0.0;
  for (Vertex x = 0; x < N; ++x) m = std::max(m, std::fabs(a.chi.at(ka, x, j) - b(x)));
  return m;
}

Eigen::MatrixXd dense_generator(const TorusLattice& lat, std::span<const double> w) {
  const std::int64_t N = lat.num_vertices();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, N);
  for (EdgeId e = 0; e < lat.num_edges(); ++e) {
    const Vertex a = lat.edge_minus(e), b = lat.edge_plus(e);
    const double we = w[static_cast<std::size_t>(e)];
    L(a, b) += we;
    L(b, a) += we;
    L(a, a) -= we;
    L(b, b) -= we;
  }
  return L;
}

}  // namespace

TEST_CASE("unit conductances give a vanishing corrector") {
  const TorusLattice lat(2, 8);
  const auto omega = ConductanceField::constant(lat, TimeGrid{0, 1, 4, true}, 1.0);
  SolverOptions opt;
  const auto st = solve_static_corrector(omega, opt);
  for (double v : st.chi.values()) CHECK(std::fabs(v) <= 1e-14);
  const auto tp = solve_poisson_time_periodic(omega, opt);
  for (double v : tp.chi.values()) CHECK(std::fabs(v) <= 1e-14);
  CHECK(harmonic_residual(st, omega) == 0.0);
}

TEST_CASE("time-periodic solver matches a dense solve of the full system") {
  const auto omega = random_field(4, 2, 0.1, 11);
  const TorusLattice& lat = omega.lattice();
  SolverOptions opt;
  opt.dt = 0.1;
  const auto sol = solve_poisson_time_periodic(omega, opt);
  const std::int64_t N = lat.num_vertices(), K = 2;
  for (int j = 0; j < 2; ++j) {
    // rows: (I - dt L_k) u_k - u_{k+1} = dt b_k, then one gauge row per slice
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K * N + K, K * N);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K * N + K);
    for (std::int64_t k = 0; k < K; ++k) {
      const auto w = omega.slice(k);
      const Eigen::MatrixXd L = dense_generator(lat, w);
      const auto b = drift_divergence(lat, w, j);
      const std::int64_t kn = (k + 1) % K;
      A.block(k * N, k * N, N, N) += Eigen::MatrixXd::Identity(N, N) - 0.1 * L;
      A.block(k * N, kn * N, N, N) -= Eigen::MatrixXd::Identity(N, N);
      for (Vertex x = 0; x < N; ++x) rhs(k * N + x) = 0.1 * b[static_cast<std::size_t>(x)];
      A.block(K * N + k, k * N, 1, N).setOnes();
    }
    const Eigen::VectorXd u = A.colPivHouseholderQr().solve(rhs);
    CHECK((A * u - rhs).cwiseAbs().maxCoeff() <= 1e-12);
    for (std::int64_t k = 0; k < K; ++k)
      CHECK(max_diff_component(sol, k, u.segment(k * N, N), j) <= 1e-10);
  }
  CHECK(harmonic_residual(sol, omega) <= 1e-10);
}

TEST_CASE("static solver matches the dense pseudo-inverse") {
  const auto omega = random_field(4, 1, 1.0, 5);
  const TorusLattice& lat = omega.lattice();
  const auto sol = solve_static_corrector(omega, SolverOptions{});
  const Eigen::MatrixXd L = dense_generator(lat, omega.slice(0));
  const Eigen::MatrixXd pinv = Eigen::MatrixXd(-L).completeOrthogonalDecomposition().pseudoInverse();
  for (int j = 0; j < 2; ++j) {
    const auto b = drift_divergence(lat, omega.slice(0), j);
    const Eigen::VectorXd u = pinv * Eigen::Map<const Eigen::VectorXd>(b.data(), lat.num_vertices());
    CHECK(max_diff_component(sol, 0, u, j) <= 1e-10);
  }
}

TEST_CASE("striped conductances reduce to the two-cell system") {
  const double a = 1.0, b = 3.0;
  const TorusLattice lat(2, 8);
  std::vector<double> w(static_cast<std::size_t>(lat.num_edges()));
  for (EdgeId e = 0; e < lat.num_edges(); ++e)
    w[static_cast<std::size_t>(e)] = lat.coords(lat.edge_minus(e))[0] % 2 == 0 ? a : b;
  const ConductanceField omega(lat, TimeGrid{0, 1, 1, true}, w);
  const auto sol = solve_static_corrector(omega, SolverOptions{});
  // reduced system on the cell {even, odd} with a gauge row
  Eigen::MatrixXd R(3, 2);
  R << a + b, -(a + b), -(a + b), a + b, 1.0, 1.0;
  Eigen::Vector3d rhs(b - a, a - b, 0.0);
  const Eigen::Vector2d c = R.colPivHouseholderQr().solve(rhs);
  for (Vertex x = 0; x < lat.num_vertices(); ++x) {
    CHECK(sol.chi.at(0, x, 0) == doctest::Approx(c(lat.coords(x)[0] % 2)).epsilon(1e-10));
    CHECK(std::fabs(sol.chi.at(0, x, 1)) <= 1e-12);
  }
  const Matrix cov = covariance_estimate(sol, omega);
  CHECK(cov(0, 0) == doctest::Approx(4.0 * a * b / (a + b)).epsilon(1e-10));
  CHECK(cov(1, 1) == doctest::Approx(a + b).epsilon(1e-10));
}

TEST_CASE("static and time-periodic solvers agree on a time-constant field") {
  const TorusLattice lat(2, 6);
  const auto omega = sample_environment(StaticErgodicModel{UniformLaw{1.0, 2.0}}, lat, 4.0, 1.0, 3);
  SolverOptions opt;
  opt.warm_start = false;
  const auto st = solve_static_corrector(omega, opt);
  const auto tp = solve_poisson_time_periodic(omega, opt);
  double m = 0.0;
  for (std::int64_t k = 0; k < tp.grid().count; ++k)
    for (Vertex x = 0; x < lat.num_vertices(); ++x)
      for (int j = 0; j < 2; ++j) m = std::max(m, std::fabs(tp.chi.at(k, x, j) - st.chi.at(0, x, j)));
  CHECK(m <= 1e-8);
}

TEST_CASE("dynamic solution is harmonic and gauge fixed") {
  const auto omega = random_field(6, 5, 0.5, 8);
  const auto sol = solve_poisson_time_periodic(omega, SolverOptions{});
  CHECK(sol.residual <= 1e-10);
  CHECK(harmonic_residual(sol, omega) <= 1e-10);
  const std::int64_t N = sol.lattice().num_vertices();
  for (std::int64_t k = 0; k < sol.grid().count; ++k)
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (Vertex x = 0; x < N; ++x) s += sol.chi.at(k, x, j);
      CHECK(std::fabs(s) <= 1e-12);
    }
  SUBCASE("perturbation is detected") {
    CorrectorSolution bad = sol;
    const double eps = 1e-6;
    bad.chi.at(2, 7, 0) += eps;
    const double dt = sol.grid().step;
    CHECK(harmonic_residual(bad, omega) >= eps / dt - eps * omega.max_mu());
  }
  SUBCASE("curl of the gradient vanishes") {
    const TorusLattice& lat = sol.lattice();
    double worst = 0.0;
    for (Vertex x = 0; x < N; ++x) {
      const Vertex x1 = lat.neighbor(x, 0, +1), x2 = lat.neighbor(x, 1, +1);
      const Vertex x12 = lat.neighbor(x1, 1, +1);
      const double c = (sol.chi.at(1, x1, 0) - sol.chi.at(1, x, 0)) +
                       (sol.chi.at(1, x12, 0) - sol.chi.at(1, x1, 0)) -
                       (sol.chi.at(1, x12, 0) - sol.chi.at(1, x2, 0)) -
                       (sol.chi.at(1, x2, 0) - sol.chi.at(1, x, 0));
      worst = std::max(worst, std::fabs(c));
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("shifted field gives the translated corrector") {
  const auto omega = random_field(6, 4, 0.5, 21);
  const Coord z{2, 1, 0, 0};
  const auto moved = shift(omega, 1.0, z);
  const auto a = solve_poisson_time_periodic(omega, SolverOptions{});
  const auto b = solve_poisson_time_periodic(moved, SolverOptions{});
  const TorusLattice& lat = omega.lattice();
  const std::int64_t sub = a.grid().count / omega.grid().count;
  const std::int64_t K = a.grid().count;
  double m = 0.0;
  for (std::int64_t k = 0; k < K; ++k)
    for (Vertex x = 0; x < lat.num_vertices(); ++x)
      for (int j = 0; j < 2; ++j)
        m = std::max(m, std::fabs(b.chi.at(k, x, j) - a.chi.at((k + 2 * sub) % K, lat.translate(x, z), j)));
  CHECK(m <= 1e-9);
}

TEST_CASE("regularized solver approaches the time-periodic corrector") {
  const auto omega = random_field(4, 2, 0.1, 11);
  SolverOptions opt;
  opt.dt = 0.1;
  const auto tp = solve_poisson_time_periodic(omega, opt);
  const auto reg = solve_regularized(omega, 1e-4, opt);
  const TorusLattice& lat = omega.lattice();
  double m = 0.0;
  for (std::int64_t k = 0; k < 2; ++k)
    for (EdgeId e = 0; e < lat.num_edges(); ++e)
      for (int j = 0; j < 2; ++j) {
        const Vertex a = lat.edge_minus(e), b = lat.edge_plus(e);
        const double g1 = tp.chi.at(k, b, j) - tp.chi.at(k, a, j);
        const double g2 = reg.chi.at(k, b, j) - reg.chi.at(k, a, j);
        m = std::max(m, std::fabs(g1 - g2));
      }
  CHECK(m <= 1e-3);
  SUBCASE("unit field") {
    const auto one = ConductanceField::constant(lat, TimeGrid{0, 1, 3, true}, 1.0);
    const auto r = solve_regularized(one, 0.5, SolverOptions{});
    for (double v : r.chi.values()) CHECK(v == 0.0);
  }
  SUBCASE("energy bound") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto w = random_field(4 + static_cast<int>(s % 3), 1 + static_cast<std::int64_t>(s % 4), 0.5,
                                  100 + s, 0.2, 5.0);
      for (double beta : {1.0, 0.1, 0.01})
        for (auto diff : {TimeDifference::forward, TimeDifference::centered}) {
          SolverOptions o;
          o.time_difference = diff;
          o.dt = -1.0;
          const auto r = solve_regularized(w, beta, o);
          for (int j = 0; j < 2; ++j) {
            const auto e = regularized_energy(r, w, j, diff);
            CHECK(e.lhs <= e.mu_average);
          }
        }
    }
  }
  CHECK_THROWS(solve_regularized(omega, 0.0, opt));
}

TEST_CASE("covariance formula for constant fields") {
  const TorusLattice lat(2, 6);
  for (double c : {1.0, 2.5}) {
    const auto omega = ConductanceField::constant(lat, TimeGrid{0, 1, 1, true}, c);
    const auto sol = solve_corrector(omega, SolverOptions{});
    const Matrix cov = covariance_estimate(sol, omega);
    CHECK(cov(0, 0) == 2.0 * c);
    CHECK(cov(1, 1) == 2.0 * c);
    CHECK(cov(0, 1) == 0.0);
  }
}

TEST_CASE("martingale check and its negative control") {
  const TorusLattice lat(2, 16);
  const auto omega = sample_environment(StaticErgodicModel{UniformLaw{1.0, 2.0}}, lat, 1.0, 1.0, 4);
  const auto sol = solve_corrector(omega, SolverOptions{});
  MartingaleOptions mo;
  mo.n_paths = 2000;
  mo.t_grid = {0.0, 2.0, 5.0};
  const auto rep = martingale_check(sol, omega, mo);
  CHECK(rep.increments_pass);
  CHECK(rep.qv_pass);
  const auto chi = chi_function(sol);
  const ChiFunction tilted = [&](double t, Vertex x, int j) { return chi(t, x, j) + 0.3 * t; };
  const auto bad = martingale_check(tilted, omega, mo);
  CHECK_FALSE(bad.increments_pass);
}

TEST_CASE("corrector control without jumps is a slice maximum") {
  const TorusLattice lat(2, 8);
  const auto omega = ConductanceField::constant(lat, TimeGrid{0, 1, 1, true}, 1e-9);
  auto sol = solve_corrector(omega, SolverOptions{});
  sol.chi.at(0, 0, 0) = 3.0;
  sol.chi.at(0, 0, 1) = 4.0;
  const auto rep = corrector_control(sol, omega, 2.0, 1.0, 3, 1);
  for (double v : rep.values) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("sublinearity of a constant model is zero") {
  SublinearityConfig cfg;
  cfg.model = ConstantModel{1.0};
  cfg.n_list = {2, 4};
  cfg.seeds = {1, 2};
  cfg.env_dt = 1.0;
  const auto t = sublinearity_profile(cfg);
  for (const auto& r : t.rows) {
    CHECK(r.max_stat == 0.0);
    CHECK(r.l1_stat == 0.0);
  }
}
