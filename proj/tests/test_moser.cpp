#include <cmath>

#include "doctest.h"
#include "rcm/moser.hpp"

using namespace rcm;

namespace {

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

MoserParams params_2d() {
  MoserParams m;
  m.p = m.p_prime = m.q = m.q_prime = 8.0;
  m.d = 2;
  m.d_prime = 2.0;
  return m;
}

ConductanceField uniform_static(int L, std::uint64_t seed, double horizon) {
  const TorusLattice lat(2, L);
  return sample_environment(StaticErgodicModel{UniformLaw{1.0, 2.0}}, lat, horizon, horizon / 16, seed);
}

}  // namespace

TEST_CASE("rho on the worked exponents") {
  CHECK(rho(2.0, 2.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(rho(3.0, kInf) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(rho(4.0, 4.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_WITH_AS(rho(2.0, kInf), doctest::Contains("d' > 2"), std::invalid_argument);
}

TEST_CASE("iteration constants") {
  SUBCASE("p = q = 4, p' = q' = inf in d' = 2") {
    MoserParams m;
    m.p = m.q = 4.0;
    m.p_prime = m.q_prime = kInf;
    const auto c = iteration_constants(m, 32.0);
    CHECK(c.rho == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(c.p_star == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(c.p_star_prime == 1.0);
    CHECK(c.alpha == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(c.alpha_p_star_le_rho);
    CHECK(c.alpha_p_star_prime_gt);
    CHECK(c.kappa == doctest::Approx(1.5).epsilon(1e-15));
    // 1.5^3 < ln 32 <= 1.5^4
    CHECK(c.k_stop == 4);
    CHECK(c.beta_threshold == doctest::Approx(8.0));
  }
  SUBCASE("all exponents infinite gives alpha = 2 - 1/rho") {
    MoserParams m;
    m.p = m.p_prime = m.q = m.q_prime = kInf;
    m.d = 3;
    m.d_prime = 3.0;
    const auto c = iteration_constants(m, 100.0);
    CHECK(c.rho == doctest::Approx(3.0));
    CHECK(c.alpha == doctest::Approx(2.0 - 1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("dyadic schedule and series") {
    const auto c = iteration_constants(params_2d(), 1e6);
    for (std::size_t k = 0; k + 1 < c.sigma_k.size(); ++k) {
      CHECK(c.sigma_k[k] == c.sigma_k[k + 1] + c.tau_k[k]);
      CHECK(c.sigma_k[k] == 0.5 + std::ldexp(1.0, -static_cast<int>(k) - 1));
      CHECK(c.tau_k[k] == std::ldexp(1.0, -static_cast<int>(k) - 2));
      CHECK(c.sigma_k[k + 1] < c.sigma_k[k]);
    }
    CHECK(c.alpha > 1.0);
    CHECK(c.gamma > 0.0);
    CHECK(c.gamma <= 1.0);
    CHECK(c.gamma_partial >= c.gamma);
    int K = 1;
    while (std::pow(c.alpha, -K) > 1e-13) ++K;
    CHECK(std::fabs(kappa_partial_sum(c.alpha, 2 * K) - kappa_partial_sum(c.alpha, K)) <= 1e-12);
    CHECK(kappa_partial_sum(c.alpha, 4 * K) == doctest::Approx(c.kappa).epsilon(1e-12));
  }
  SUBCASE("condition violation reports its margin") {
    MoserParams m;
    m.p = m.p_prime = m.q = m.q_prime = 2.0;
    CHECK_THROWS_WITH_AS(iteration_constants(m, 10.0), doctest::Contains("margin"), std::invalid_argument);
  }
}

TEST_CASE("tilde powers and appendix inequalities") {
  for (double a : {-3.0, -0.5, 0.0, 0.25, 2.0})
    for (double al : {0.5, 1.0, 1.7, 3.0}) {
      CHECK(tilde_pow(-a, al) == -tilde_pow(a, al));
      CHECK(tilde_pow(a, 2 * al) == doctest::Approx(std::pow(tilde_pow(a, al), 2) * (a < 0 ? -1 : 1)));
    }
  CHECK(tilde_pow_diff(1.0 + 1e-12, 1.0, 2.0) == doctest::Approx(2e-12).epsilon(1e-6));
  // a = 1, b = 0, alpha = 2, beta = 1: |1| <= 2 * 1 * 1
  CHECK(std::fabs(tilde_pow_diff(1, 0, 2)) <= 2.0 * std::fabs(tilde_pow_diff(1, 0, 1)) * (1.0 + 0.0));
  // a = 1, b = -1, alpha = 1: equality 4 = 4
  const double lhs = std::pow(tilde_pow_diff(1, -1, 1), 2);
  const double rhs = 1.0 * (1 - (-1)) * tilde_pow_diff(1, -1, 1);
  CHECK(lhs == rhs);
  const auto rep = appendix_inequality_suite(100000, 3);
  CHECK(rep.pass);
  REQUIRE(rep.items.size() == 4);
  for (const auto& it : rep.items) {
    CHECK(it.trials == 100000);
    CHECK(it.violations == 0);
    CHECK(it.max_ratio <= 1.0 + 1e-12);
  }
}

TEST_CASE("cutoffs") {
  const TorusLattice lat(2, 64);
  const MoserParams m = params_2d();
  const auto c = build_cutoffs(0, m, 16.0, lat);
  CHECK(c.outer_radius == 16);
  CHECK(c.inner_radius == 12);
  const auto chk = check_cutoffs(c, m, lat);
  CHECK(chk.support);
  CHECK(chk.inner_one);
  CHECK(chk.boundary_zero);
  CHECK(chk.gradient);
  CHECK(chk.zeta_ok);
  CHECK(chk.max_gradient == doctest::Approx(1.0 / 4.0));
  CHECK(c.zeta(0.0) == 1.0);
  CHECK(c.zeta(0.75 * 256) == 1.0);
  CHECK(c.zeta(256) == 0.0);
  // B_{k+1} = B_k at small n
  CHECK_THROWS_AS(build_cutoffs(3, m, 4.0, lat), std::invalid_argument);
  CHECK_THROWS_AS(build_cutoffs(0, m, 40.0, lat), std::invalid_argument);
}

TEST_CASE("poincare inequality") {
  const TorusLattice lat(2, 64);
  SUBCASE("constant function") {
    const VertexField u(sz(lat.num_vertices()), 3.0);
    const auto r = poincare_check(u, lat, 0, 8);
    CHECK(r.lhs == 0.0);
    CHECK(r.ratio == 0.0);
  }
  SUBCASE("first coordinate, direct summation") {
    double prev = -1.0;
    for (int n : {4, 8, 16}) {
      VertexField u(sz(lat.num_vertices()), 0.0);
      for (Vertex x = 0; x < lat.num_vertices(); ++x) u[sz(x)] = static_cast<double>(lat.displacement(0, x)[0]);
      // ball symmetric about 0: mean 0, lhs = sum |x1|, rhs = n * #(dir-0 edges inside the ball)
      double lhs = 0.0, edges = 0.0;
      for (std::int64_t a = -n; a <= n; ++a)
        for (std::int64_t b = -n; b <= n; ++b) {
          if (std::abs(a) + std::abs(b) > n) continue;
          lhs += std::fabs(static_cast<double>(a));
          if (std::abs(a + 1) + std::abs(b) <= n) edges += 1.0;
        }
      const auto r = poincare_check(u, lat, 0, n);
      CHECK(r.lhs == doctest::Approx(lhs).epsilon(1e-14));
      CHECK(r.rhs == doctest::Approx(n * edges).epsilon(1e-14));
      CHECK(r.ratio < 1.0);
      if (prev > 0) CHECK(std::fabs(r.ratio - prev) < 0.2);
      prev = r.ratio;
    }
  }
  SUBCASE("random corpus is bounded and stable across seeds") {
    double worst[2] = {0, 0};
    for (int s = 0; s < 2; ++s)
      for (int t = 0; t < 250; ++t) {
        worst[s] = std::max(worst[s], poincare_check(smooth_noise_field(lat, 0, 8, 10 + s, t), lat, 0, 8).ratio);
        worst[s] = std::max(worst[s], poincare_check(spike_field(lat, 0, 8, 10 + s, t), lat, 0, 8).ratio);
      }
    CHECK(std::isfinite(worst[0]));
    CHECK(worst[0] < 1.0);
    CHECK(worst[1] / worst[0] < 2.0);
    CHECK(worst[0] / worst[1] < 2.0);
  }
}

TEST_CASE("sobolev inequality") {
  const TorusLattice lat(2, 32);
  const auto omega = ConductanceField::constant(lat, TimeGrid{0.0, 4.0, 16, true}, 1.0);
  const SpaceTimeCylinder q{0.0, 8.0, 0, 1.0};
  const TimeGrid g{0.0, 4.0, 16, false};
  SUBCASE("zero function") {
    const SpaceTimeField u(lat, g, FieldKind::vertex);
    const auto r = sobolev_check(u, omega, q, 4.0, 4.0);
    CHECK(r.lhs == 0.0);
    CHECK(r.rhs == 0.0);
    CHECK(r.ratio == 0.0);
  }
  SUBCASE("tent in space, constant in time") {
    const SpaceTimeField u = compact_spacetime_field(lat, g, q, CorpusKind::tent, 1, 0);
    // rho = 2 / (2/4) = 4, q'/(q'+1) = 4/5; time-constant u makes the outer norm trivial
    const auto ball = lat.ball(0, 8);
    double s8 = 0.0, dir = 0.0;
    for (Vertex x : ball) s8 += std::pow(u.at(0, x), 8);
    const double lhs = std::pow(s8 / ball.size(), 0.25);
    for (EdgeId e = 0; e < lat.num_edges(); ++e) {
      const double dg = u.at(0, lat.edge_plus(e)) - u.at(0, lat.edge_minus(e));
      dir += dg * dg;
    }
    // nu = sum of 1/w = 4 at every site
    const double rhs = 64.0 * 4.0 * dir / ball.size();
    const auto r = sobolev_check(u, omega, q, 4.0, 4.0);
    CHECK(r.lhs == doctest::Approx(lhs).epsilon(1e-12));
    CHECK(r.rhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK(std::isfinite(r.ratio));
  }
  SUBCASE("support violation") {
    SpaceTimeField u(lat, g, FieldKind::vertex);
    u.at(0, lat.index({8, 0, 0, 0})) = 1.0;  // on the boundary of B(8)
    CHECK_THROWS_AS(sobolev_check(u, omega, q, 4.0, 4.0), std::invalid_argument);
  }
  SUBCASE("random corpus is stable between n = 8 and 16") {
    double worst[2] = {0, 0};
    for (int i = 0; i < 2; ++i) {
      const int n = 8 << i;
      const TorusLattice big(2, 4 * n);
      const auto w = uniform_static(4 * n, 5 + i, n * n);
      const SpaceTimeCylinder qq{0.0, double(n), 0, 1.0};
      const TimeGrid gg{0.0, n * n / 16.0, 16, false};
      for (int t = 0; t < 100; ++t)
        for (CorpusKind k : {CorpusKind::smooth_noise, CorpusKind::spike})
          worst[i] = std::max(worst[i],
                              sobolev_check(compact_spacetime_field(big, gg, qq, k, 9, t), w, qq, 8, 8).ratio);
    }
    CHECK(std::isfinite(worst[0]));
    CHECK(worst[1] <= 2.0 * worst[0]);
  }
}

TEST_CASE("interpolation inequality") {
  const TorusLattice lat(2, 16);
  const TimeGrid g{0.0, 1.0, 16, false};
  const SpaceTimeCylinder q{0.0, 4.0, 0, 1.0};
  CHECK(interpolation_gamma2(2.0, kInf, 4.0 / 3.0) == doctest::Approx(2.0).epsilon(1e-15));
  SUBCASE("constant function") {
    SpaceTimeField u(lat, g, FieldKind::vertex);
    for (double& v : u.values()) v = 2.5;
    const auto r = interpolation_check(u, 2.0, kInf, 4.0 / 3.0, 2.0, q);
    CHECK(r.lhs == doctest::Approx(2.5));
    CHECK(r.rhs == doctest::Approx(5.0));
    CHECK(r.pass);
  }
  SUBCASE("random instances") {
    CounterRng rng(4, StreamTag::corpus, 0);
    int fails = 0;
    for (int t = 0; t < 200; ++t) {
      SpaceTimeField u(lat, g, FieldKind::vertex);
      for (double& v : u.values()) v = rng.uniform() < 0.3 ? 0.0 : std::exp(3.0 * rng.normal()) * (rng.uniform() < 0.5 ? -1 : 1);
      const double rh = 1.0 + 3.0 * rng.uniform_open();
      const double qp = rng.uniform() < 0.2 ? kInf : 1.0 + 9.0 * rng.uniform();
      const double g1 = 1.0 + (rh - 1.0) * rng.uniform_open();
      if (!interpolation_check(u, rh, qp, g1, interpolation_gamma2(rh, qp, g1), q).pass) ++fails;
    }
    CHECK(fails == 0);
  }
  SUBCASE("parameter violations") {
    const SpaceTimeField u(lat, g, FieldKind::vertex);
    CHECK_THROWS_AS(interpolation_check(u, 2.0, kInf, 3.0, 2.0, q), std::invalid_argument);
    CHECK_THROWS_AS(interpolation_check(u, 2.0, kInf, 4.0 / 3.0, 2.5, q), std::invalid_argument);
  }
}

TEST_CASE("energy estimate") {
  const TorusLattice lat(2, 32);
  const MoserParams m = params_2d();
  const auto cut = build_cutoffs(0, m, 8.0, lat);
  const auto unit = ConductanceField::constant(lat, TimeGrid{0.0, 4.0, 16, true}, 1.0);
  EdgeField gf(sz(lat.num_edges()), 0.0);
  for (EdgeId e = 0; e < lat.num_edges(); ++e)
    if (lat.edge_dir(e) == 0) gf[sz(e)] = 1.0 / 8.0;
  SUBCASE("zero solution of the homogeneous problem") {
    const EdgeField zero(sz(lat.num_edges()), 0.0);
    const SpaceTimeField u = solve_backward_poisson(unit, zero, VertexField(sz(lat.num_vertices()), 0.0),
                                                    0.0, 4.0, 16);
    const auto r = energy_estimate_check(u, unit, zero, cut, 1.0, 1.0, 8, 8);
    CHECK(r.lhs() == 0.0);
    CHECK(r.rhs_cutoff == 0.0);
    CHECK(r.rhs_cross == 0.0);
    CHECK(r.rhs_drift == 0.0);
  }
  SUBCASE("unit field with random terminal data") {
    VertexField term = smooth_noise_field(lat, 0, 12, 2, 0);
    const SpaceTimeField u = solve_backward_poisson(unit, gf, term, 0.0, 4.0, 16);
    for (double alpha : {1.0, 1.5, 3.0}) {
      const auto r = energy_estimate_check(u, unit, gf, cut, 1.0, alpha, 8, 8);
      CHECK(r.equation_residual <= 1e-10);
      CHECK(r.lhs() > 0.0);
      CHECK(std::isfinite(r.constant));
      CHECK(r.constant > 0.0);
    }
  }
  SUBCASE("corrupted solution is rejected") {
    SpaceTimeField u = solve_backward_poisson(unit, gf, VertexField(sz(lat.num_vertices()), 0.0), 0.0, 4.0, 16);
    u.at(3, 0) += 1e-3;
    CHECK_THROWS_AS(energy_estimate_check(u, unit, gf, cut, 1.0, 1.0, 8, 8), std::runtime_error);
  }
  SUBCASE("corrector-based constants stay within a factor 2 between n = 8 and 16") {
    double c[2] = {0, 0};
    for (int i = 0; i < 2; ++i) {
      const int n = 8 << i;
      const TorusLattice big(2, 4 * n);
      EdgeField f(sz(big.num_edges()), 0.0);
      for (EdgeId e = 0; e < big.num_edges(); ++e)
        if (big.edge_dir(e) == 0) f[sz(e)] = 1.0 / n;
      const auto cc = build_cutoffs(0, m, n, big);
      for (std::uint64_t s = 0; s < 5; ++s) {
        const auto w = uniform_static(4 * n, 100 + s, n * n);
        const auto sol = solve_corrector(w, SolverOptions{});
        const auto u = corrector_component(sol, 0, -1.0 / n, 16);
        c[i] = std::max(c[i], energy_estimate_check(u, w, f, cc, 1.0, 1.0, 8, 8).constant);
      }
    }
    CHECK(c[1] <= 2.0 * c[0]);
    CHECK(c[0] <= 2.0 * c[1]);
  }
}

TEST_CASE("maximal inequality") {
  const MoserParams m = params_2d();
  SUBCASE("unit field") {
    const TorusLattice lat(2, 32);
    const auto unit = ConductanceField::constant(lat, TimeGrid{0.0, 64.0, 1, true}, 1.0);
    const auto r = maximal_inequality_check(unit, 8.0, m, 1.0);
    CHECK(r.lhs == 0.0);
    CHECK(r.ratio == 0.0);
  }
  SUBCASE("corrupted u exceeds the bound of solved instances") {
    const auto w = uniform_static(32, 7, 64);
    const auto sol = solve_corrector(w, SolverOptions{});
    SpaceTimeField u = corrector_component(sol, 0, -1.0 / 8.0, 16);
    const auto good = maximal_inequality_evaluate(u, w, 8.0, m, 1.0);
    CHECK(good.ratio > 0.0);
    CHECK(good.chain_norms.size() == good.chain_gamma.size());
    for (std::size_t k = 0; k < good.chain_norms.size(); ++k)
      CHECK(good.chain_gamma[k] == (good.chain_norms[k] >= 1.0 ? 1.0 : 1.0 - std::pow(iteration_constants(m, 8).alpha, -double(k))));
    u.at(0, 0) = 50.0;
    const auto bad = maximal_inequality_evaluate(u, w, 8.0, m, 1.0);
    CHECK(bad.ratio > 100.0 * good.ratio);
  }
}
