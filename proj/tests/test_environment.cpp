#include <cmath>
#include <vector>

#include "doctest.h"
#include "rcm/environment.hpp"
#include "rcm/numeric.hpp"

using namespace rcm;
using doctest::Approx;

TEST_CASE("law validation and means") {
  CHECK_THROWS(validate_law(ConstantLaw{0.0}));
  CHECK_THROWS(validate_law(UniformLaw{2.0, 1.0}));
  CHECK_THROWS(validate_law(TwoPointLaw{1.0, 2.0, 1.5}));
  CHECK_THROWS(validate_law(ParetoMixtureLaw{-1.0, 2.0}));
  CHECK_NOTHROW(validate_law(UniformLaw{1.0, 1.0}));
  CHECK(law_mean(UniformLaw{1.0, 3.0}) == 2.0);
  CHECK(law_mean(TwoPointLaw{1.0, 3.0, 0.25}) == Approx(2.5));
  CHECK_THROWS(validate_model(ConstantModel{-1.0}));
  CHECK_THROWS(validate_model(TimeRefreshModel{UniformLaw{1, 2}, -1.0}));
}

TEST_CASE("sampling examples") {
  const TorusLattice lat(2, 64);
  SUBCASE("constant") {
    const auto w = sample_environment(ConstantModel{1.0}, lat, 4.0, 1.0, 1);
    for (double v : w.stored_values()) REQUIRE(v == 1.0);
    CHECK(w.time_constant());
  }
  SUBCASE("degenerate product") {
    const auto w = sample_environment(ProductSeparableModel{ConstantLaw{2.0}, ConstantLaw{3.0}}, lat, 4.0, 1.0, 1);
    for (std::int64_t k = 0; k < 4; ++k)
      for (double v : w.slice(k)) REQUIRE(v == 6.0);
  }
  SUBCASE("static ergodic mean") {
    const auto w = sample_environment(StaticErgodicModel{UniformLaw{1.0, 3.0}}, lat, 4.0, 1.0, 9);
    CHECK(w.time_constant());
    const auto& v = w.stored_values();
    double s = 0.0;
    for (double x : v) s += x;
    const double m = s / static_cast<double>(v.size());
    CHECK(std::fabs(m - 2.0) < 3.0 * std::sqrt(1.0 / 3.0 / static_cast<double>(v.size())));
  }
  SUBCASE("product factorization") {
    const auto w = sample_environment(ProductSeparableModel{UniformLaw{1, 2}, UniformLaw{0.5, 1.5}}, lat, 6.0, 1.0, 2);
    CHECK_FALSE(w.time_constant());
    for (std::int64_t k = 1; k < 6; ++k) {
      const double ratio = w.omega(k, 0) / w.omega(0, 0);
      for (EdgeId e = 0; e < lat.num_edges(); e += 97) REQUIRE(w.omega(k, e) / w.omega(0, e) == Approx(ratio).epsilon(1e-14));
    }
  }
  SUBCASE("determinism and positivity") {
    const EnvironmentModel m = TimeRefreshModel{ParetoMixtureLaw{3.0, 3.0}, 0.5};
    const auto a = sample_environment(m, lat, 5.0, 0.5, 4);
    const auto b = sample_environment(m, lat, 5.0, 0.5, 4);
    CHECK(a.stored_values() == b.stored_values());
    for (double v : a.stored_values()) REQUIRE(v > 0.0);
    const auto c = sample_environment(m, lat, 5.0, 0.5, 5);
    CHECK(a.stored_values() != c.stored_values());
  }
  CHECK_THROWS(sample_environment(ConstantModel{1.0}, lat, 1.0, 0.3, 1));
  CHECK_THROWS(sample_environment(ConstantModel{1.0}, lat, -1.0, 1.0, 1));
}

TEST_CASE("refresh model changes at the declared rate") {
  const TorusLattice lat(2, 32);
  const double rate = 0.5, dt = 0.5;
  const auto w = sample_environment(TimeRefreshModel{UniformLaw{1, 2}, rate}, lat, 20.0, dt, 3);
  // a continuous law changes value exactly when a refresh lands in the interval
  double changed = 0.0, total = 0.0;
  for (std::int64_t k = 1; k < w.grid().count; ++k)
    for (EdgeId e = 0; e < lat.num_edges(); ++e) {
      changed += w.omega(k, e) != w.omega(k - 1, e) ? 1.0 : 0.0;
      total += 1.0;
    }
  const double p = 1.0 - std::exp(-rate * dt);
  CHECK(std::fabs(changed / total - p) < 4.0 * std::sqrt(p * (1 - p) / total));
}

TEST_CASE("space-time shift") {
  const TorusLattice lat(2, 8);
  const auto w = sample_environment(TimeRefreshModel{UniformLaw{1, 2}, 1.0}, lat, 4.0, 0.5, 6);
  const auto same = shift(w, 0.0, Coord{0, 0, 0, 0});
  CHECK(same.stored_values() == w.stored_values());
  const auto s = shift(w, 1.0, Coord{3, -2, 0, 0});
  // (tau_{s,z} w)_t(e) = w_{t+s}(e + z)
  for (std::int64_t k = 0; k + 2 < w.grid().count; ++k)
    for (EdgeId e = 0; e < lat.num_edges(); ++e) {
      const Vertex x = lat.edge_minus(e);
      const EdgeId ez = lat.edge(lat.translate(x, Coord{3, -2, 0, 0}), lat.edge_dir(e));
      REQUIRE(s.omega(k, e) == w.omega(k + 2, ez));
    }
  const auto back = shift(s, -1.0, Coord{-3, 2, 0, 0});
  // the shifted field of a non-periodic grid is kept on the overlap
  for (std::int64_t k = 2; k < back.grid().count; ++k)
    for (EdgeId e = 0; e < lat.num_edges(); ++e) REQUIRE(back.omega(k, e) == w.omega(k, e));
  const auto two = shift(shift(w, 0.5, Coord{1, 0, 0, 0}), 0.5, Coord{0, 1, 0, 0});
  const auto one = shift(w, 1.0, Coord{1, 1, 0, 0});
  for (std::int64_t k = 0; k + 2 < w.grid().count; ++k)
    for (EdgeId e = 0; e < lat.num_edges(); ++e) REQUIRE(two.omega(k, e) == one.omega(k, e));
  const auto c = sample_environment(ConstantModel{2.0}, lat, 4.0, 1.0, 1);
  CHECK(shift(c, 2.0, Coord{5, 1, 0, 0}).stored_values() == c.stored_values());
  CHECK_THROWS(shift(w, 0.3, Coord{}));
}

TEST_CASE("moment condition arithmetic") {
  const auto a = moment_condition_check({4.0, kInf, 4.0, kInf, 2});
  CHECK(a.holds);
  CHECK(a.lhs == Approx(0.5));
  CHECK(a.margin == Approx(0.5));
  const auto b = moment_condition_check({2.0, 2.0, 2.0, 2.0, 2});
  CHECK_FALSE(b.holds);
  CHECK(b.lhs == Approx(2.0));
  const auto c = moment_condition_check({4.0, 4.0, 4.0, 4.0, 2});
  CHECK(c.remark_applicable);
  CHECK(c.remark_lhs == Approx(2.0 / 3.0));
  CHECK(c.remark_holds);
  CHECK_THROWS(moment_condition_check({1.0, 2.0, 2.0, 2.0, 2}));
  const auto fin = moments_finite(HeavyTailModel{3.0, 5.0, 0.0}, 2.9, 5.1);
  CHECK(fin.omega_p_finite);
  CHECK_FALSE(fin.omega_inv_q_finite);
}

TEST_CASE("empirical moment norms") {
  const TorusLattice lat(2, 16);
  const SpaceTimeCylinder q{0.0, 4.0, 0, 1.0};
  const auto one = sample_environment(ConstantModel{1.0}, lat, 16.0, 16.0, 1);
  const auto n1 = empirical_moment_norms(one, {3.0, 5.0, 2.0, 7.0, 2}, q);
  CHECK(n1.mu_norm == Approx(4.0));
  CHECK(n1.nu_norm == Approx(4.0));
  const auto two = sample_environment(ConstantModel{2.0}, lat, 16.0, 16.0, 1);
  const auto n2 = empirical_moment_norms(two, {2.0, 2.0, 2.0, 2.0, 2}, q);
  CHECK(n2.mu_norm == Approx(8.0));
  CHECK(n2.nu_norm == Approx(2.0));
  const auto w = sample_environment(StaticErgodicModel{ParetoMixtureLaw{4.0, 4.0}}, lat, 16.0, 16.0, 3);
  double prev = 0.0;
  for (double p : {1.5, 2.0, 3.0, 6.0}) {
    const double v = empirical_moment_norms(w, {p, p, 2.0, 2.0, 2}, q).mu_norm;
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("ergodic averages") {
  const TorusLattice lat(2, 64);
  const auto c = sample_environment(ConstantModel{1.7}, lat, 1024.0, 1024.0, 1);
  CHECK(ergodic_average(conductance_functional(0), c, 31.0) == Approx(1.7));
  CHECK(ergodic_average(constant_functional(1.0), c, 10.0) == Approx(1.0));
  // uniform[1,3] over seeds: within 3 standard errors of 2
  std::vector<double> vals;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto w = sample_environment(StaticErgodicModel{UniformLaw{1.0, 3.0}}, lat, 1024.0, 1024.0, s);
    vals.push_back(ergodic_average(conductance_functional(0), w, 31.0));
  }
  double m = 0.0, v = 0.0;
  for (double x : vals) m += x / 10.0;
  for (double x : vals) v += (x - m) * (x - m) / 9.0;
  CHECK(std::fabs(m - 2.0) <= 3.0 * std::sqrt(v / 10.0) + 1e-3);
  CHECK_THROWS(ergodic_average(conductance_functional(0), c, 40.0));
}
