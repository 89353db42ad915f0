#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "rcm/rng.hpp"
#include "rcm/stats.hpp"

using namespace rcm;

TEST_CASE("philox known-answer vectors") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::encrypt(C{0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::encrypt(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::encrypt(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
  CounterRng a(7, StreamTag::walker, 3), b(7, StreamTag::walker, 3);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  std::set<std::uint64_t> firsts;
  for (auto tag : {StreamTag::environment, StreamTag::walker, StreamTag::corpus, StreamTag::start})
    for (std::uint64_t s = 0; s < 4; ++s)
      for (std::uint64_t seed = 1; seed <= 2; ++seed) firsts.insert(CounterRng(seed, tag, s).next_u64());
  CHECK(firsts.size() == 32);

  // streams differing only in high bits stay apart
  CHECK(CounterRng(1, StreamTag::walker, 1ull << 40).next_u64() != CounterRng(1, StreamTag::walker, 0).next_u64());
}

TEST_CASE("uniform draws") {
  CounterRng rng(11, StreamTag::corpus, 0);
  const int n = 100000;
  std::vector<double> obs(10, 0.0), expct(10, n / 10.0);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    obs[static_cast<std::size_t>(u * 10.0)] += 1.0;
  }
  CHECK(lo < 1e-3);
  CHECK(hi > 1.0 - 1e-3);
  CHECK(chi_square_gof(obs, expct, 0.001).pass);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform_open();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("bounded integers") {
  CounterRng rng(5, StreamTag::corpus, 1);
  std::vector<double> obs(7, 0.0), expct(7, 70000 / 7.0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = rng.below(7);
    REQUIRE(k < 7);
    obs[k] += 1.0;
  }
  CHECK(chi_square_gof(obs, expct, 0.001).pass);
  CHECK(rng.below(1) == 0);
}

TEST_CASE("exponential and normal moments") {
  CounterRng rng(3, StreamTag::corpus, 2);
  const int n = 200000;
  std::vector<double> e(n), g(n);
  for (int i = 0; i < n; ++i) e[static_cast<std::size_t>(i)] = rng.exponential(4.0);
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = rng.normal();
  // means within 5 standard errors
  CHECK(std::fabs(mean(e) - 0.25) < 5.0 * 0.25 / std::sqrt(n));
  CHECK(std::fabs(mean(g)) < 5.0 / std::sqrt(n));
  CHECK(std::fabs(sample_variance(g) - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(ks_test(g, normal_cdf, 0.001).pass);
  CHECK(ks_test(e, [](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-4.0 * x); }, 0.001).pass);
}
