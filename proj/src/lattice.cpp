#include "rcm/lattice.hpp"

#include <cmath>
#include <cstdlib>

namespace rcm {

TorusLattice::TorusLattice(int dim, int side) : d_(dim), L_(side) {
  if (dim < 1 || dim > kMaxDim)
    throw std::invalid_argument("lattice dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  if (side < 2) throw std::invalid_argument("lattice side must be at least 2");
  n_ = 1;
  for (int i = 0; i < d_; ++i) {
    stride_[static_cast<std::size_t>(i)] = n_;
    n_ *= L_;
  }
  auto table = std::make_shared<std::vector<Vertex>>(static_cast<std::size_t>(n_ * 2 * d_));
  for (Vertex v = 0; v < n_; ++v) {
    for (int i = 0; i < d_; ++i) {
      const std::int64_t s = stride_[static_cast<std::size_t>(i)];
      const std::int64_t xi = (v / s) % L_;
      const Vertex up = xi + 1 == L_ ? v - (L_ - 1) * s : v + s;
      const Vertex down = xi == 0 ? v + (L_ - 1) * s : v - s;
      (*table)[static_cast<std::size_t>(v * 2 * d_ + 2 * i)] = up;
      (*table)[static_cast<std::size_t>(v * 2 * d_ + 2 * i + 1)] = down;
    }
  }
  nbr_ = std::move(table);
}

Coord TorusLattice::coords(Vertex v) const {
  Coord c{};
  for (int i = 0; i < d_; ++i) c[static_cast<std::size_t>(i)] = (v / stride_[static_cast<std::size_t>(i)]) % L_;
  return c;
}

Vertex TorusLattice::index(const Coord& c) const {
  Vertex v = 0;
  for (int i = 0; i < d_; ++i) {
    std::int64_t xi = c[static_cast<std::size_t>(i)] % L_;
    if (xi < 0) xi += L_;
    v += xi * stride_[static_cast<std::size_t>(i)];
  }
  return v;
}

Vertex TorusLattice::translate(Vertex v, const Coord& z) const {
  Coord c = coords(v);
  for (int i = 0; i < d_; ++i) c[static_cast<std::size_t>(i)] += z[static_cast<std::size_t>(i)];
  return index(c);
}

Coord TorusLattice::displacement(Vertex a, Vertex b) const {
  const Coord ca = coords(a), cb = coords(b);
  Coord z{};
  for (int i = 0; i < d_; ++i) {
    std::int64_t dz = (cb[static_cast<std::size_t>(i)] - ca[static_cast<std::size_t>(i)]) % L_;
    if (dz < 0) dz += L_;
    if (2 * dz > L_) dz -= L_;
    z[static_cast<std::size_t>(i)] = dz;
  }
  return z;
}

std::int64_t TorusLattice::distance(Vertex a, Vertex b) const {
  const Coord z = displacement(a, b);
  std::int64_t s = 0;
  for (int i = 0; i < d_; ++i) s += std::llabs(z[static_cast<std::size_t>(i)]);
  return s;
}

std::vector<Vertex> TorusLattice::ball(Vertex center, double r) const {
  if (!(r >= 0.0)) throw std::invalid_argument("ball radius must be nonnegative");
  if (2.0 * r >= static_cast<double>(L_)) throw std::invalid_argument("ball wraps torus");
  const std::int64_t R = static_cast<std::int64_t>(std::floor(r));
  std::vector<Vertex> out;
  // enumerate offsets in the box [-R, R]^d in lexicographic order
  Coord off{};
  for (int i = 0; i < d_; ++i) off[static_cast<std::size_t>(i)] = -R;
  const Coord c0 = coords(center);
  while (true) {
    std::int64_t norm = 0;
    for (int i = 0; i < d_; ++i) norm += std::llabs(off[static_cast<std::size_t>(i)]);
    if (norm <= R) {
      Coord c{};
      for (int i = 0; i < d_; ++i)
        c[static_cast<std::size_t>(i)] = c0[static_cast<std::size_t>(i)] + off[static_cast<std::size_t>(i)];
      out.push_back(index(c));
    }
    int i = 0;
    while (i < d_ && off[static_cast<std::size_t>(i)] == R) {
      off[static_cast<std::size_t>(i)] = -R;
      ++i;
    }
    if (i == d_) break;
    ++off[static_cast<std::size_t>(i)];
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::int64_t TimeGrid::wrap(std::int64_t k) const {
  if (periodic) {
    std::int64_t w = k % count;
    return w < 0 ? w + count : w;
  }
  if (k < 0 || k >= count) throw std::out_of_range("time index outside field support");
  return k;
}

std::int64_t TimeGrid::interval_of(double t) const {
  const double x = (t - start) / step;
  double f = std::floor(x);
  // snap values a rounding error below a grid point up to it
  if (x - f > 1.0 - 1e-12) f += 1.0;
  return static_cast<std::int64_t>(f);
}

SpaceTimeField::SpaceTimeField(TorusLattice lattice, TimeGrid grid, FieldKind kind, int components)
    : lattice_(std::move(lattice)), grid_(grid), kind_(kind), components_(components) {
  if (grid_.count < 1) throw std::invalid_argument("time grid must have at least one point");
  if (!(grid_.step > 0.0)) throw std::invalid_argument("time step must be positive");
  if (components < 1) throw std::invalid_argument("field needs at least one component");
  values_.assign(static_cast<std::size_t>(grid_.count) * slice_size(), 0.0);
}

SpaceTimeRegion make_region(const SpaceTimeCylinder& q, const TorusLattice& lattice,
                            const TimeGrid& grid) {
  if (!(q.n > 0.0)) throw std::invalid_argument("cylinder scale must be positive");
  if (!(q.sigma > 0.0) || q.sigma > 1.0) throw std::invalid_argument("cylinder fraction must lie in (0,1]");
  SpaceTimeRegion r;
  r.dt = grid.step;
  r.sites = lattice.ball(q.x0, q.radius());
  const double eps = 1e-9;
  const auto first = static_cast<std::int64_t>(std::ceil((q.t0 - grid.start) / grid.step - eps));
  const auto last =
      static_cast<std::int64_t>(std::ceil((q.t0 + q.duration() - grid.start) / grid.step - eps));
  for (std::int64_t k = first; k < last; ++k) r.times.push_back(grid.wrap(k));
  if (r.times.empty()) throw std::invalid_argument("spacetime region contains no grid time");
  return r;
}

// ---- calculus -------------------------------------------------------------

EdgeField grad(const TorusLattice& lat, std::span<const double> f) {
  const int d = lat.dim();
  EdgeField g(static_cast<std::size_t>(lat.num_edges()));
  for (Vertex x = 0; x < lat.num_vertices(); ++x)
    for (int i = 0; i < d; ++i)
      g[static_cast<std::size_t>(x * d + i)] =
          f[static_cast<std::size_t>(lat.neighbor(x, i, +1))] - f[static_cast<std::size_t>(x)];
  return g;
}

VertexField div(const TorusLattice& lat, std::span<const double> F) {
  VertexField out(static_cast<std::size_t>(lat.num_vertices()), 0.0);
  for (EdgeId e = 0; e < lat.num_edges(); ++e) {
    out[static_cast<std::size_t>(lat.edge_plus(e))] += F[static_cast<std::size_t>(e)];
    out[static_cast<std::size_t>(lat.edge_minus(e))] -= F[static_cast<std::size_t>(e)];
  }
  return out;
}

void generator_apply_into(const TorusLattice& lat, std::span<const double> omega,
                          std::span<const double> f, std::span<double> out) {
  const int d = lat.dim();
  const std::int64_t n = lat.num_vertices();
  for (Vertex x = 0; x < n; ++x) {
    const double fx = f[static_cast<std::size_t>(x)];
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
      const Vertex up = lat.neighbor(x, i, +1);
      const Vertex dn = lat.neighbor(x, i, -1);
      acc += omega[static_cast<std::size_t>(x * d + i)] * (f[static_cast<std::size_t>(up)] - fx);
      acc += omega[static_cast<std::size_t>(dn * d + i)] * (f[static_cast<std::size_t>(dn)] - fx);
    }
    out[static_cast<std::size_t>(x)] = acc;
  }
}

void require_positive(std::span<const double> omega) {
  for (double w : omega)
    if (!(w > 0.0)) throw std::invalid_argument("degenerate conductance");
}

VertexField generator_apply(const TorusLattice& lat, std::span<const double> omega,
                            std::span<const double> f) {
  require_positive(omega);
  VertexField out(static_cast<std::size_t>(lat.num_vertices()));
  generator_apply_into(lat, omega, f, out);
  return out;
}

double dirichlet_form(const TorusLattice& lat, std::span<const double> omega,
                      std::span<const double> f, std::span<const double> g) {
  require_positive(omega);
  const int d = lat.dim();
  NeumaierSum s;
  for (Vertex x = 0; x < lat.num_vertices(); ++x) {
    for (int i = 0; i < d; ++i) {
      const Vertex y = lat.neighbor(x, i, +1);
      const double gf = f[static_cast<std::size_t>(y)] - f[static_cast<std::size_t>(x)];
      const double gg = g[static_cast<std::size_t>(y)] - g[static_cast<std::size_t>(x)];
      s.add(omega[static_cast<std::size_t>(x * d + i)] * gf * gg);
    }
  }
  return s.value();
}

EdgeField edge_average(const TorusLattice& lat, std::span<const double> f) {
  const int d = lat.dim();
  EdgeField a(static_cast<std::size_t>(lat.num_edges()));
  for (Vertex x = 0; x < lat.num_vertices(); ++x)
    for (int i = 0; i < d; ++i)
      a[static_cast<std::size_t>(x * d + i)] =
          0.5 * (f[static_cast<std::size_t>(lat.neighbor(x, i, +1))] + f[static_cast<std::size_t>(x)]);
  return a;
}

void measures_mu_nu(const TorusLattice& lat, std::span<const double> omega, bool floor,
                    VertexField& mu, VertexField& nu) {
  require_positive(omega);
  mu = mu_of(lat, omega, floor);
  nu = nu_of(lat, omega, floor);
}

VertexField mu_of(const TorusLattice& lat, std::span<const double> omega, bool floor) {
  const int d = lat.dim();
  VertexField mu(static_cast<std::size_t>(lat.num_vertices()));
  for (Vertex x = 0; x < lat.num_vertices(); ++x) {
    double s = 0.0;
    for (int i = 0; i < d; ++i)
      s += omega[static_cast<std::size_t>(x * d + i)] +
           omega[static_cast<std::size_t>(lat.neighbor(x, i, -1) * d + i)];
    mu[static_cast<std::size_t>(x)] = floor ? std::max(1.0, s) : s;
  }
  return mu;
}

VertexField nu_of(const TorusLattice& lat, std::span<const double> omega, bool floor) {
  const int d = lat.dim();
  VertexField nu(static_cast<std::size_t>(lat.num_vertices()));
  for (Vertex x = 0; x < lat.num_vertices(); ++x) {
    double s = 0.0;
    for (int i = 0; i < d; ++i)
      s += 1.0 / omega[static_cast<std::size_t>(x * d + i)] +
           1.0 / omega[static_cast<std::size_t>(lat.neighbor(x, i, -1) * d + i)];
    nu[static_cast<std::size_t>(x)] = floor ? std::max(1.0, s) : s;
  }
  return nu;
}

double inner(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("inner: size mismatch");
  NeumaierSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

double spacetime_norm(const SpaceTimeField& u, const SpaceTimeRegion& region, double p,
                      double p_prime, int component) {
  if (u.kind() != FieldKind::vertex) throw std::invalid_argument("spacetime_norm needs a vertex field");
  return spacetime_norm_fn([&](std::int64_t k, Vertex x) { return u.at(k, x, component); }, region,
                           p, p_prime);
}

double spacetime_norm(const SpaceTimeField& u, const NormSpec& spec, int component) {
  return spacetime_norm(u, make_region(spec.region, u.lattice(), u.grid()), spec.p, spec.p_prime,
                        component);
}

}  // namespace rcm
