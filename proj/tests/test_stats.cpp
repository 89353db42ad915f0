#include <cmath>
#include <vector>

#include "doctest.h"
#include "rcm/rng.hpp"
#include "rcm/stats.hpp"

using namespace rcm;
using doctest::Approx;

TEST_CASE("quantiles and moments") {
  const auto q = quantiles({4.0, 1.0, 3.0, 2.0, 5.0});
  CHECK(q.min == 1.0);
  CHECK(q.max == 5.0);
  CHECK(q.median == 3.0);
  CHECK(q.q25 == 2.0);
  CHECK(q.q10 == Approx(1.4));
  CHECK(q.mean == 3.0);
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(mean(v) == 2.5);
  CHECK(sample_variance(v) == Approx(5.0 / 3.0));
}

TEST_CASE("dense matrix helpers") {
  Matrix m(2, 2);
  m(0, 0) = 2.0;
  m(0, 1) = m(1, 0) = 1.0;
  m(1, 1) = 2.0;
  const auto ev = symmetric_eigenvalues(m);
  CHECK(ev[0] == Approx(1.0).epsilon(1e-14));
  CHECK(ev[1] == Approx(3.0).epsilon(1e-14));
  const Matrix c = cholesky(m);
  CHECK(c(0, 0) == Approx(std::sqrt(2.0)));
  CHECK(c(0, 1) == 0.0);
  CHECK(c(1, 0) * c(1, 0) + c(1, 1) * c(1, 1) == Approx(2.0));
  Matrix bad(2, 2);
  bad(0, 0) = 1.0;
  bad(0, 1) = bad(1, 0) = 2.0;
  bad(1, 1) = 1.0;
  CHECK_THROWS(cholesky(bad));
  CHECK(is_symmetric(m, 0.0));
  CHECK(frobenius_norm(m - Matrix::identity(2, 2.0)) == Approx(std::sqrt(2.0)));
  CHECK(max_abs(m) == 2.0);

  // rows (1,1), (2,2), (3,3): perfectly correlated, variance 1
  const std::vector<double> rows{1, 1, 2, 2, 3, 3};
  const Matrix cov = sample_covariance(rows, 2);
  CHECK(cov(0, 0) == Approx(1.0));
  CHECK(cov(0, 1) == Approx(1.0));
}

TEST_CASE("distribution functions") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963984540054) == Approx(0.975).epsilon(1e-12));
  // tabulated Kolmogorov distribution
  CHECK(kolmogorov_sf(1.0) == Approx(0.26999967167735456).epsilon(1e-10));
  CHECK(kolmogorov_sf(1.3580986) == Approx(0.05).epsilon(1e-6));
  CHECK(kolmogorov_sf(0.0) == 1.0);
  CHECK(chi_square_sf(3.0, 2.0) == Approx(std::exp(-1.5)).epsilon(1e-12));
  CHECK(chi_square_sf(6.634896601021214, 1.0) == Approx(0.01).epsilon(1e-9));
  CHECK(poisson_pmf(0, 4.0) == Approx(std::exp(-4.0)));
  CHECK(poisson_pmf(3, 4.0) == Approx(std::exp(-4.0) * 64.0 / 6.0));
  CHECK(poisson_pmf(400, 4.0) >= 0.0);
}

TEST_CASE("goodness-of-fit tests") {
  CounterRng rng(21, StreamTag::corpus, 0);
  std::vector<double> x(2000);
  for (double& v : x) v = rng.normal();
  CHECK(ks_test(x, normal_cdf, 0.01).pass);
  auto shifted = x;
  for (double& v : shifted) v += 0.3;
  CHECK_FALSE(ks_test(shifted, normal_cdf, 0.01).pass);

  // lattice data: rounded normal with h = 1/4 against the continuous cdf
  std::vector<double> lat(5000);
  for (double& v : lat) v = std::round(4.0 * 2.0 * rng.normal()) / 4.0;
  const auto cdf = [](double t) { return normal_cdf(t / 2.0); };
  CHECK(ks_test_lattice(lat, 0.25, cdf, 0.01).pass);
  CHECK_FALSE(ks_test(lat, cdf, 0.01).pass);

  const std::vector<double> obs{52, 48, 50, 50}, expct{50, 50, 50, 50};
  CHECK(chi_square_gof(obs, expct, 0.01).pass);
  const std::vector<double> skew{90, 10, 50, 50};
  CHECK_FALSE(chi_square_gof(skew, expct, 0.01).pass);
}

TEST_CASE("energy distance two-sample test") {
  CounterRng rng(8, StreamTag::corpus, 1);
  std::vector<double> a(1000), b(1000), c(1000);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal();
  for (double& v : c) v = 1.5 * rng.normal();
  CHECK(energy_two_sample_test(a, b, 2, 200, 1, 0.01).pass);
  CHECK_FALSE(energy_two_sample_test(a, c, 2, 200, 1, 0.01).pass);
  const auto r1 = energy_two_sample_test(a, b, 2, 200, 1, 0.01);
  const auto r2 = energy_two_sample_test(a, b, 2, 200, 1, 0.01);
  CHECK(r1.statistic == r2.statistic);
  CHECK(r1.p_value == r2.p_value);
}

TEST_CASE("trend test") {
  const std::vector<double> ns{8, 16, 32};
  CHECK(trend_test(ns, {{1.0, 0.5, 0.25}, {1.1, 0.6, 0.2}, {0.9, 0.5, 0.3}}, 0.05).pass);
  const auto up = trend_test(ns, {{1.0, 2.0, 4.0}, {1.0, 2.1, 3.9}, {1.1, 1.9, 4.2}}, 0.05);
  CHECK_FALSE(up.pass);
  CHECK(up.mean_slope == Approx(1.0).epsilon(0.05));
  CHECK_THROWS(trend_test(ns, {{1.0, 0.0, 1.0}, {1.0, 1.0, 1.0}}, 0.05));
}
