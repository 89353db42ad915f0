#include "rcm/walker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcm {

Vertex TrajectorySample::position_at(double t) const {
  if (t < start_time || t > end_time) throw std::out_of_range("time outside trajectory");
  const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  return positions[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double SlowedTrajectory::clock_at(double u) const {
  if (u <= knot_times.front()) return knot_values.front();
  if (u >= knot_times.back()) return knot_values.back();
  const auto it = std::upper_bound(knot_times.begin(), knot_times.end(), u);
  const std::size_t i = static_cast<std::size_t>(it - knot_times.begin());
  const double u0 = knot_times[i - 1], u1 = knot_times[i];
  const double w = (u - u0) / (u1 - u0);
  return knot_values[i - 1] + w * (knot_values[i] - knot_values[i - 1]);
}

void VsrwSampler::check_span(double s, double t_end) const {
  const TimeGrid& g = omega_.grid();
  if (!(t_end >= s)) throw std::invalid_argument("walk end time precedes start");
  if (g.periodic) return;
  const double tol = 1e-12 * std::max(1.0, std::fabs(g.end()));
  if (s < g.start - tol || t_end > g.end() + tol)
    throw std::out_of_range("walk time span beyond field horizon");
}

void choose_neighbor(const ConductanceField& omega, std::int64_t k, Vertex x, double mu,
                     CounterRng& rng, int& dir, int& sign) {
  const TorusLattice& lat = omega.lattice();
  const auto w = omega.slice(k);
  const int d = lat.dim();
  double target = rng.uniform() * mu;
  for (int i = 0; i < d; ++i) {
    for (int sg : {+1, -1}) {
      const double wi = w[static_cast<std::size_t>(lat.incident_edge(x, i, sg))];
      if (target < wi) {
        dir = i;
        sign = sg;
        return;
      }
      target -= wi;
    }
  }
  // rounding left target at the top of the range: take the last positive-weight edge
  dir = d - 1;
  sign = -1;
}

namespace {

Step encode(int dir, int sign) { return static_cast<Step>(sign * (dir + 1)); }

}  // namespace

TrajectorySample simulate_vsrw(const ConductanceField& omega, double s, Vertex x, double t_end,
                               CounterRng& rng) {
  TrajectorySample tr;
  tr.start_time = s;
  tr.start = x;
  tr.end_time = t_end;
  tr.jump_times.push_back(s);
  tr.positions.push_back(x);
  VsrwSampler(omega).run(s, x, t_end, rng, [&](const JumpEvent& ev) {
    tr.jump_times.push_back(ev.time);
    tr.positions.push_back(ev.to);
    tr.steps.push_back(encode(ev.dir, ev.sign));
  });
  return tr;
}

SlowedTrajectory simulate_slowed(const ConductanceField& omega, double s, Vertex x, double t_end,
                                 CounterRng& rng) {
  if (!(t_end >= s)) throw std::invalid_argument("walk end time precedes start");
  const TimeGrid& g = omega.grid();
  if (!g.periodic) {
    const double tol = 1e-12 * std::max(1.0, std::fabs(g.end()));
    if (s < g.start - tol || t_end > g.end() + tol)
      throw std::out_of_range("walk time span beyond field horizon");
  }
  const TorusLattice& lat = omega.lattice();
  SlowedTrajectory out;
  out.real_start = s;
  TrajectorySample& y = out.path;
  y.start_time = 0.0;
  y.start = x;
  y.jump_times.push_back(0.0);
  y.positions.push_back(x);
  out.clock.push_back(0.0);
  out.knot_times.push_back(0.0);
  out.knot_values.push_back(0.0);

  const double horizon = t_end - s;  // clock target
  double u = 0.0, T = 0.0;
  double budget = rng.exponential();
  std::int64_t k = g.interval_of(s);
  while (true) {
    const double mu = omega.mu(k, x);
    const double c = 1.0 / std::max(1.0, mu);  // dT/du
    const double rate = mu * c;                 // total jump rate of Y
    const double boundary_T = omega.time_constant() ? horizon : std::min(g.time(k + 1) - s, horizon);
    const double du_boundary = (boundary_T - T) / c;
    const double du_jump = budget / rate;
    if (du_jump < du_boundary) {
      u += du_jump;
      T += du_jump * c;
      int dir = 0, sign = 1;
      choose_neighbor(omega, k, x, mu, rng, dir, sign);
      x = lat.neighbor(x, dir, sign);
      y.jump_times.push_back(u);
      y.positions.push_back(x);
      y.steps.push_back(encode(dir, sign));
      out.clock.push_back(T);
      out.knot_times.push_back(u);
      out.knot_values.push_back(T);
      budget = rng.exponential();
    } else {
      budget = std::max(0.0, budget - rate * du_boundary);
      u += du_boundary;
      T = boundary_T;
      out.knot_times.push_back(u);
      out.knot_values.push_back(T);
      if (boundary_T >= horizon) break;
      ++k;
    }
  }
  y.end_time = u;
  return out;
}

TrajectorySample time_change_compose(const SlowedTrajectory& slowed) {
  TrajectorySample x;
  const TrajectorySample& y = slowed.path;
  x.start_time = slowed.real_start;
  x.start = y.start;
  x.positions = y.positions;
  x.steps = y.steps;
  x.jump_times.reserve(y.jump_times.size());
  for (std::size_t i = 0; i < y.jump_times.size(); ++i)
    x.jump_times.push_back(slowed.real_start + slowed.clock[i]);
  x.end_time = slowed.real_start + slowed.knot_values.back();
  for (std::size_t i = 1; i < x.jump_times.size(); ++i)
    if (!(x.jump_times[i] > x.jump_times[i - 1]))
      throw std::runtime_error("time change produced non-increasing jump times");
  return x;
}

std::vector<Coord> lift_positions(const TrajectorySample& traj, const TorusLattice& lat) {
  std::vector<Coord> out;
  out.reserve(traj.positions.size());
  Coord c = lat.coords(traj.start);
  out.push_back(c);
  for (Step s : traj.steps) {
    const int dir = std::abs(s) - 1;
    c[static_cast<std::size_t>(dir)] += s > 0 ? 1 : -1;
    out.push_back(c);
  }
  return out;
}

Coord lifted_end(const TrajectorySample& traj, const TorusLattice& lat) {
  Coord c = lat.coords(traj.start);
  for (Step s : traj.steps) c[static_cast<std::size_t>(std::abs(s) - 1)] += s > 0 ? 1 : -1;
  return c;
}

RescaledPath::RescaledPath(const TrajectorySample& traj, const TorusLattice& lat, double n, double T)
    : dim_(lat.dim()), horizon_(T) {
  if (!(n > 0.0)) throw std::invalid_argument("rescale: n must be positive");
  if (traj.end_time - traj.start_time < n * n * T * (1.0 - 1e-12))
    throw std::invalid_argument("rescale: trajectory horizon too short");
  const std::vector<Coord> lifted = lift_positions(traj, lat);
  for (std::size_t i = 0; i < lifted.size(); ++i) {
    const double t = (traj.jump_times[i] - traj.start_time) / (n * n);
    if (t > T) break;
    std::array<double, kMaxDim> p{};
    for (int j = 0; j < dim_; ++j)
      p[static_cast<std::size_t>(j)] = static_cast<double>(lifted[i][static_cast<std::size_t>(j)]) / n;
    times_.push_back(t);
    points_.push_back(p);
  }
}

std::array<double, kMaxDim> RescaledPath::at(double t) const {
  if (t < 0.0 || t > horizon_) throw std::out_of_range("rescaled time outside horizon");
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  return points_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

RescaledPath rescale(const TrajectorySample& traj, const TorusLattice& lat, double n, double T) {
  return RescaledPath(traj, lat, n, T);
}

}  // namespace rcm
