#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcm/numeric.hpp"

namespace rcm {

inline constexpr int kMaxDim = 4;

using Vertex = std::int64_t;
using EdgeId = std::int64_t;
using Coord = std::array<std::int64_t, kMaxDim>;

using VertexField = std::vector<double>;
using EdgeField = std::vector<double>;

// Discrete torus {0..L-1}^d. Vertices are indexed row-major with the first
// axis fastest. Edge (x, i) joins e- = x and e+ = x + e_i, id = x*d + i.
class TorusLattice {
 public:
  TorusLattice() = default;
  TorusLattice(int dim, int side);

  int dim() const { return d_; }
  int side() const { return L_; }
  std::int64_t num_vertices() const { return n_; }
  std::int64_t num_edges() const { return n_ * d_; }

  Coord coords(Vertex v) const;
  Vertex index(const Coord& c) const;  // wraps every coordinate
  Vertex neighbor(Vertex v, int dir, int sign) const {
    return (*nbr_)[static_cast<std::size_t>(v * 2 * d_ + 2 * dir + (sign > 0 ? 0 : 1))];
  }
  Vertex translate(Vertex v, const Coord& z) const;

  EdgeId edge(Vertex tail, int dir) const { return tail * d_ + dir; }
  Vertex edge_minus(EdgeId e) const { return e / d_; }
  Vertex edge_plus(EdgeId e) const { return neighbor(e / d_, static_cast<int>(e % d_), +1); }
  int edge_dir(EdgeId e) const { return static_cast<int>(e % d_); }
  // edge between v and its neighbor in direction sign*e_dir
  EdgeId incident_edge(Vertex v, int dir, int sign) const {
    return sign > 0 ? v * d_ + dir : neighbor(v, dir, -1) * d_ + dir;
  }

  // minimal-image displacement from a to b, each component in (-L/2, L/2]
  Coord displacement(Vertex a, Vertex b) const;
  std::int64_t distance(Vertex a, Vertex b) const;

  // closed l1 ball of radius floor(r); throws if r >= L/2
  std::vector<Vertex> ball(Vertex center, double r) const;

  bool operator==(const TorusLattice& o) const { return d_ == o.d_ && L_ == o.L_; }

 private:
  int d_ = 0;
  int L_ = 0;
  std::int64_t n_ = 0;
  std::array<std::int64_t, kMaxDim> stride_{};
  std::shared_ptr<const std::vector<Vertex>> nbr_;
};

// Uniform time grid t_k = start + k*step, k in [0, count). Periodic grids
// repeat with period count*step.
struct TimeGrid {
  double start = 0.0;
  double step = 1.0;
  std::int64_t count = 1;
  bool periodic = false;

  double time(std::int64_t k) const { return start + static_cast<double>(k) * step; }
  double end() const { return time(count); }
  double period() const { return static_cast<double>(count) * step; }
  // grid index for an unwrapped index; throws outside support of non-periodic grids
  std::int64_t wrap(std::int64_t k) const;
  // unwrapped index of the interval containing t (floor, with a small snap)
  std::int64_t interval_of(double t) const;
  bool operator==(const TimeGrid& o) const {
    return start == o.start && step == o.step && count == o.count && periodic == o.periodic;
  }
};

enum class FieldKind { vertex, edge };

// Values per (time index, site, component); one contiguous block per time index.
class SpaceTimeField {
 public:
  SpaceTimeField() = default;
  SpaceTimeField(TorusLattice lattice, TimeGrid grid, FieldKind kind, int components = 1);

  const TorusLattice& lattice() const { return lattice_; }
  const TimeGrid& grid() const { return grid_; }
  FieldKind kind() const { return kind_; }
  int components() const { return components_; }
  std::int64_t sites() const {
    return kind_ == FieldKind::vertex ? lattice_.num_vertices() : lattice_.num_edges();
  }
  std::size_t slice_size() const { return static_cast<std::size_t>(sites() * components_); }

  std::span<double> slice(std::int64_t k) {
    return {values_.data() + static_cast<std::size_t>(k) * slice_size(), slice_size()};
  }
  std::span<const double> slice(std::int64_t k) const {
    return {values_.data() + static_cast<std::size_t>(k) * slice_size(), slice_size()};
  }
  double& at(std::int64_t k, std::int64_t site, int c = 0) {
    return values_[static_cast<std::size_t>(k) * slice_size() +
                   static_cast<std::size_t>(site * components_ + c)];
  }
  double at(std::int64_t k, std::int64_t site, int c = 0) const {
    return values_[static_cast<std::size_t>(k) * slice_size() +
                   static_cast<std::size_t>(site * components_ + c)];
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  TorusLattice lattice_;
  TimeGrid grid_;
  FieldKind kind_ = FieldKind::vertex;
  int components_ = 1;
  std::vector<double> values_;
};

// [t0, t0 + sigma n^2] x B(x0, sigma n)
struct SpaceTimeCylinder {
  double t0 = 0.0;
  double n = 1.0;
  Vertex x0 = 0;
  double sigma = 1.0;

  double radius() const { return sigma * n; }
  double duration() const { return sigma * n * n; }
  SpaceTimeCylinder scaled(double s) const { return {t0, n, x0, s}; }
};

// Grid realisation of a cylinder: the time indices with t_k in [t0, t0 + sigma n^2)
// and the ball sites.
struct SpaceTimeRegion {
  std::vector<std::int64_t> times;  // wrapped grid indices
  std::vector<Vertex> sites;
  double dt = 1.0;
  double duration() const { return dt * static_cast<double>(times.size()); }
};

SpaceTimeRegion make_region(const SpaceTimeCylinder& q, const TorusLattice& lattice,
                            const TimeGrid& grid);

struct NormSpec {
  double p = 1.0;
  double p_prime = 1.0;
  SpaceTimeCylinder region;
};

// ---- calculus -------------------------------------------------------------

EdgeField grad(const TorusLattice& lat, std::span<const double> f);
VertexField div(const TorusLattice& lat, std::span<const double> F);
VertexField generator_apply(const TorusLattice& lat, std::span<const double> omega,
                            std::span<const double> f);
// unchecked kernel: out = L f, out must not alias f
void generator_apply_into(const TorusLattice& lat, std::span<const double> omega,
                          std::span<const double> f, std::span<double> out);
double dirichlet_form(const TorusLattice& lat, std::span<const double> omega,
                      std::span<const double> f, std::span<const double> g);
EdgeField edge_average(const TorusLattice& lat, std::span<const double> f);
void measures_mu_nu(const TorusLattice& lat, std::span<const double> omega, bool floor,
                    VertexField& mu, VertexField& nu);
VertexField mu_of(const TorusLattice& lat, std::span<const double> omega, bool floor);
VertexField nu_of(const TorusLattice& lat, std::span<const double> omega, bool floor);

double inner(std::span<const double> a, std::span<const double> b);
// throws "degenerate conductance" on a nonpositive weight
void require_positive(std::span<const double> omega);

// ---- space-time averaged norms ---------------------------------------------

// ((1/|I|) sum_k dt ((1/|B|) sum_x |u(k,x)|^p)^{p'/p})^{1/p'}; infinite exponents give maxima.
template <class ValueFn>
double spacetime_norm_fn(ValueFn&& value, const SpaceTimeRegion& region, double p,
                         double p_prime) {
  if (region.times.empty() || region.sites.empty())
    throw std::invalid_argument("spacetime_norm: empty region");
  if (!(p > 0.0) || !(p_prime > 0.0))
    throw std::invalid_argument("spacetime_norm: exponents must be positive");
  const double nb = static_cast<double>(region.sites.size());
  double outer_max = 0.0;
  NeumaierSum outer;
  for (std::int64_t k : region.times) {
    double inner_val;
    if (std::isinf(p)) {
      inner_val = 0.0;
      for (Vertex x : region.sites) inner_val = std::max(inner_val, std::fabs(value(k, x)));
    } else {
      NeumaierSum s;
      for (Vertex x : region.sites) s.add(std::pow(std::fabs(value(k, x)), p));
      inner_val = std::pow(s.value() / nb, 1.0 / p);
    }
    if (std::isinf(p_prime))
      outer_max = std::max(outer_max, inner_val);
    else
      outer.add(std::pow(inner_val, p_prime));
  }
  if (std::isinf(p_prime)) return outer_max;
  return std::pow(outer.value() / static_cast<double>(region.times.size()), 1.0 / p_prime);
}

double spacetime_norm(const SpaceTimeField& u, const NormSpec& spec, int component = 0);
double spacetime_norm(const SpaceTimeField& u, const SpaceTimeRegion& region, double p,
                      double p_prime, int component = 0);

}  // namespace rcm
