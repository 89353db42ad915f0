#include <cmath>
#include <vector>

#include "doctest.h"
#include "rcm/stats.hpp"
#include "rcm/walker.hpp"

using namespace rcm;
using doctest::Approx;

TEST_CASE("trajectory bookkeeping") {
  const TorusLattice lat(2, 16);
  const auto w = sample_environment(TimeRefreshModel{UniformLaw{0.5, 2.0}, 1.0}, lat, 10.0, 0.5, 2);
  CounterRng rng(1, StreamTag::walker, 0);
  const auto tr = simulate_vsrw(w, 0.25, 5, 9.0, rng);
  CHECK(tr.start_time == 0.25);
  CHECK(tr.end_time == 9.0);
  REQUIRE(tr.positions.size() == tr.num_jumps() + 1);
  REQUIRE(tr.jump_times.size() == tr.num_jumps() + 1);
  CHECK(tr.num_jumps() > 0);
  for (std::size_t k = 0; k < tr.num_jumps(); ++k) {
    REQUIRE(tr.jump_times[k + 1] > tr.jump_times[k]);
    const int s = tr.steps[k];
    REQUIRE(lat.neighbor(tr.positions[k], std::abs(s) - 1, s > 0 ? 1 : -1) == tr.positions[k + 1]);
  }
  CHECK(tr.position_at(0.25) == 5);
  CHECK(tr.position_at(9.0) == tr.positions.back());
  const auto lifted = lift_positions(tr, lat);
  const Coord end = lifted_end(tr, lat);
  CHECK(lifted.back() == end);
  CHECK(lat.index(end) == tr.positions.back());

  CounterRng again(1, StreamTag::walker, 0);
  const auto tr2 = simulate_vsrw(w, 0.25, 5, 9.0, again);
  CHECK(tr2.jump_times == tr.jump_times);
  CHECK(tr2.positions == tr.positions);
  const ConductanceField finite(lat, TimeGrid{0.0, 1.0, 2, false},
                                std::vector<double>(static_cast<std::size_t>(2 * lat.num_edges()), 1.0));
  CounterRng out(1, StreamTag::walker, 0);
  CHECK_THROWS(simulate_vsrw(finite, 0.0, 0, 3.0, out));
  CHECK_THROWS(simulate_vsrw(finite, 1.0, 0, 0.5, out));
}

TEST_CASE("unit conductances: holding times and jump counts") {
  const TorusLattice lat(2, 32);
  const auto w = sample_environment(ConstantModel{1.0}, lat, 1.0, 1.0, 1);
  std::vector<double> hold;
  std::vector<double> counts(40, 0.0);
  const double t = 1.0;
  const int paths = 20000;
  for (int p = 0; p < paths; ++p) {
    CounterRng rng(4, StreamTag::walker, static_cast<std::uint64_t>(p));
    const auto tr = simulate_vsrw(w, 0.0, 0, t, rng);
    counts[std::min<std::size_t>(tr.num_jumps(), 39)] += 1.0;
  }
  // first sojourns on a horizon long enough that censoring has probability e^-80
  for (int p = 0; p < 100000; ++p) {
    CounterRng rng(5, StreamTag::walker, static_cast<std::uint64_t>(p));
    hold.push_back(simulate_vsrw(w, 0.0, 0, 20.0, rng).jump_times.at(1));
  }
  CHECK(std::fabs(mean(hold) - 0.25) < 0.01 * 0.25);
  CHECK(ks_test(hold, [](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-4.0 * x); }, 0.001).pass);
  std::vector<double> expct(40);
  double rest = 1.0;
  for (std::size_t k = 0; k < 39; ++k) {
    expct[k] = paths * poisson_pmf(static_cast<std::int64_t>(k), 4.0 * t);
    rest -= poisson_pmf(static_cast<std::int64_t>(k), 4.0 * t);
  }
  expct[39] = paths * rest;
  CHECK(chi_square_gof(counts, expct, 0.001).pass);
}

TEST_CASE("jump directions follow the conductances") {
  const TorusLattice lat(1, 8);
  // edge x -> x+1 has weight 3 at x = 0, the edge into 0 has weight 1
  std::vector<double> v(8, 1.0);
  v[0] = 3.0;
  const ConductanceField w(lat, TimeGrid{0.0, 1.0, 1, false}, v);
  double right = 0.0;
  const int n = 20000;
  for (int p = 0; p < n; ++p) {
    CounterRng rng(6, StreamTag::walker, static_cast<std::uint64_t>(p));
    int dir, sign;
    choose_neighbor(w, 0, 0, w.mu(0, 0), rng, dir, sign);
    right += sign > 0 ? 1.0 : 0.0;
  }
  CHECK(std::fabs(right / n - 0.75) < 4.0 * std::sqrt(0.75 * 0.25 / n));
}

TEST_CASE("time change composes to the same law") {
  const TorusLattice lat(2, 16);
  const auto w = sample_environment(TimeRefreshModel{UniformLaw{0.5, 3.0}, 1.0}, lat, 4.0, 0.25, 5);
  std::vector<double> direct, composed;
  for (int p = 0; p < 2000; ++p) {
    CounterRng a(7, StreamTag::walker, static_cast<std::uint64_t>(p));
    CounterRng b(7, StreamTag::slowed_walker, static_cast<std::uint64_t>(p));
    const Coord x = lifted_end(simulate_vsrw(w, 0.5, 0, 3.5, a), lat);
    const auto slowed = simulate_slowed(w, 0.5, 0, 3.5, b);
    const auto tr = time_change_compose(slowed);
    REQUIRE(tr.start_time == Approx(0.5));
    REQUIRE(tr.end_time == Approx(3.5));
    const Coord y = lifted_end(tr, lat);
    direct.insert(direct.end(), {static_cast<double>(x[0]), static_cast<double>(x[1])});
    composed.insert(composed.end(), {static_cast<double>(y[0]), static_cast<double>(y[1])});
  }
  CHECK(energy_two_sample_test(direct, composed, 2, 200, 3, 0.01).pass);
}

TEST_CASE("rescaled paths") {
  const TorusLattice lat(1, 64);
  TrajectorySample tr;
  tr.start_time = 0.0;
  tr.start = 0;
  tr.jump_times = {0.0, 4.0, 8.0};
  tr.positions = {0, 1, 2};
  tr.steps = {1, 1};
  tr.end_time = 16.0;
  const auto r = rescale(tr, lat, 4.0, 1.0);
  CHECK(r.at(0.0)[0] == 0.0);
  CHECK(r.at(0.3)[0] == Approx(0.25));
  CHECK(r.at(0.6)[0] == Approx(0.5));
  CHECK(r.at(1.0)[0] == Approx(0.5));
}
