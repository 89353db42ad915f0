#pragma once

#include <cstdint>
#include <vector>

#include "rcm/environment.hpp"
#include "rcm/rng.hpp"

namespace rcm {

// Signed unit step: +(i+1) for +e_i, -(i+1) for -e_i.
using Step = std::int8_t;

struct TrajectorySample {
  double start_time = 0.0;
  Vertex start = 0;
  std::vector<double> jump_times;  // J_0 = start_time, then one entry per jump
  std::vector<Vertex> positions;   // positions[k] held on [J_k, J_{k+1})
  std::vector<Step> steps;         // steps[k-1] taken at J_k
  double end_time = 0.0;

  std::size_t num_jumps() const { return steps.size(); }
  // position at time t in [start_time, end_time]
  Vertex position_at(double t) const;
};

// Y runs on its own time axis u >= 0; the walk X started at real time s is
// X_{s+T(u)} = Y_u. T is piecewise linear with the listed knots.
struct SlowedTrajectory {
  double real_start = 0.0;
  TrajectorySample path;        // Y, path.start_time = 0
  std::vector<double> clock;    // T at each entry of path.jump_times
  std::vector<double> knot_times;
  std::vector<double> knot_values;

  double clock_at(double u) const;
};

// Called for every jump of an exact simulation: (time, from, to, dir, sign).
struct JumpEvent {
  double time;
  Vertex from;
  Vertex to;
  int dir;
  int sign;
};

// Exact VSRW sampler. run() advances one walker from (s, x) to t_end and
// reports each jump to the visitor; nothing is stored.
class VsrwSampler {
 public:
  explicit VsrwSampler(const ConductanceField& omega) : omega_(omega) {}

  template <class Visitor>
  Vertex run(double s, Vertex x, double t_end, CounterRng& rng, Visitor&& on_jump) const;

 private:
  void check_span(double s, double t_end) const;

  const ConductanceField& omega_;
};

// picks the neighbor of x in interval k with probability w(x,y)/mu
void choose_neighbor(const ConductanceField& omega, std::int64_t k, Vertex x, double mu,
                     CounterRng& rng, int& dir, int& sign);

TrajectorySample simulate_vsrw(const ConductanceField& omega, double s, Vertex x, double t_end,
                               CounterRng& rng);
SlowedTrajectory simulate_slowed(const ConductanceField& omega, double s, Vertex x, double t_end,
                                 CounterRng& rng);
TrajectorySample time_change_compose(const SlowedTrajectory& slowed);

// lifts torus positions to Z^d by accumulating steps from the start coordinates
std::vector<Coord> lift_positions(const TrajectorySample& traj, const TorusLattice& lat);
Coord lifted_end(const TrajectorySample& traj, const TorusLattice& lat);

// X^(n)_t = X_{n^2 t}/n along an unwrapped path
class RescaledPath {
 public:
  RescaledPath(const TrajectorySample& traj, const TorusLattice& lat, double n, double T);
  int dim() const { return dim_; }
  double horizon() const { return horizon_; }
  std::array<double, kMaxDim> at(double t) const;
  const std::vector<double>& times() const { return times_; }
  const std::vector<std::array<double, kMaxDim>>& points() const { return points_; }

 private:
  int dim_;
  double horizon_;
  std::vector<double> times_;
  std::vector<std::array<double, kMaxDim>> points_;
};

RescaledPath rescale(const TrajectorySample& traj, const TorusLattice& lat, double n, double T);

// ---- template implementation ---------------------------------------------

template <class Visitor>
Vertex VsrwSampler::run(double s, Vertex x, double t_end, CounterRng& rng, Visitor&& on_jump) const {
  check_span(s, t_end);
  const TimeGrid& g = omega_.grid();
  double t = s;
  double budget = rng.exponential();
  if (omega_.time_constant()) {
    while (true) {
      const double mu = omega_.mu(0, x);
      const double tj = t + budget / mu;
      if (tj >= t_end) return x;
      int dir, sign;
      choose_neighbor(omega_, 0, x, mu, rng, dir, sign);
      const Vertex y = omega_.lattice().neighbor(x, dir, sign);
      on_jump(JumpEvent{tj, x, y, dir, sign});
      x = y;
      t = tj;
      budget = rng.exponential();
    }
  }
  std::int64_t k = g.interval_of(t);
  while (true) {
    const double mu = omega_.mu(k, x);
    const double boundary = std::min(g.time(k + 1), t_end);
    const double need = budget / mu;
    if (t + need < boundary) {
      t += need;
      int dir, sign;
      choose_neighbor(omega_, k, x, mu, rng, dir, sign);
      const Vertex y = omega_.lattice().neighbor(x, dir, sign);
      on_jump(JumpEvent{t, x, y, dir, sign});
      x = y;
      budget = rng.exponential();
    } else {
      // compensator consumed up to the boundary; carry the rest
      budget = std::max(0.0, budget - mu * (boundary - t));
      if (boundary >= t_end) return x;
      t = boundary;
      ++k;
    }
  }
}

}  // namespace rcm
