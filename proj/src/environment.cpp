#include "rcm/environment.hpp"

#include <cmath>
#include <sstream>

#include "rcm/parallel.hpp"

namespace rcm {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double pareto(double alpha, CounterRng& rng) { return std::pow(rng.uniform_open(), -1.0 / alpha); }

bool is_integer_ratio(double a, double b, std::int64_t& ratio) {
  const double r = a / b;
  const double rr = std::round(r);
  if (std::fabs(r - rr) > 1e-9 * std::max(1.0, std::fabs(r))) return false;
  ratio = static_cast<std::int64_t>(rr);
  return true;
}

}  // namespace

double sample_law(const Law& law, CounterRng& rng) {
  return std::visit(
      Overloaded{
          [](const ConstantLaw& l) { return l.value; },
          [&](const UniformLaw& l) { return rng.uniform(l.low, l.high); },
          [&](const TwoPointLaw& l) { return rng.uniform() < l.p_low ? l.low : l.high; },
          [&](const ParetoMixtureLaw& l) {
            const bool upper = rng.uniform() < 0.5;
            return upper ? pareto(l.alpha_upper, rng) : 1.0 / pareto(l.alpha_lower, rng);
          },
      },
      law);
}

double law_mean(const Law& law) {
  return std::visit(
      Overloaded{
          [](const ConstantLaw& l) { return l.value; },
          [](const UniformLaw& l) { return 0.5 * (l.low + l.high); },
          [](const TwoPointLaw& l) { return l.p_low * l.low + (1.0 - l.p_low) * l.high; },
          [](const ParetoMixtureLaw& l) {
            const double up = l.alpha_upper > 1.0 ? l.alpha_upper / (l.alpha_upper - 1.0) : kInf;
            const double low = l.alpha_lower / (l.alpha_lower + 1.0);
            return 0.5 * (up + low);
          },
      },
      law);
}

void validate_law(const Law& law) {
  std::visit(Overloaded{
                 [](const ConstantLaw& l) {
                   if (!(l.value > 0.0)) throw std::invalid_argument("constant law needs value > 0");
                 },
                 [](const UniformLaw& l) {
                   if (!(l.low > 0.0) || !(l.high >= l.low))
                     throw std::invalid_argument("uniform law needs 0 < low <= high");
                 },
                 [](const TwoPointLaw& l) {
                   if (!(l.low > 0.0) || !(l.high > 0.0) || !(l.p_low >= 0.0 && l.p_low <= 1.0))
                     throw std::invalid_argument("two-point law needs positive values and p_low in [0,1]");
                 },
                 [](const ParetoMixtureLaw& l) {
                   if (!(l.alpha_upper > 0.0) || !(l.alpha_lower > 0.0))
                     throw std::invalid_argument("pareto tail exponents must be positive");
                 },
             },
             law);
}

std::string law_name(const Law& law) {
  return std::visit(Overloaded{
                        [](const ConstantLaw&) { return std::string("constant"); },
                        [](const UniformLaw&) { return std::string("uniform"); },
                        [](const TwoPointLaw&) { return std::string("two_point"); },
                        [](const ParetoMixtureLaw&) { return std::string("pareto_mixture"); },
                    },
                    law);
}

std::string model_name(const EnvironmentModel& m) {
  return std::visit(Overloaded{
                        [](const ConstantModel&) { return std::string("constant"); },
                        [](const StaticErgodicModel&) { return std::string("static_ergodic"); },
                        [](const ProductSeparableModel&) { return std::string("product_separable"); },
                        [](const TimeRefreshModel&) { return std::string("time_refresh"); },
                        [](const HeavyTailModel&) { return std::string("heavy_tail"); },
                    },
                    m);
}

bool model_is_static(const EnvironmentModel& m) {
  return std::visit(Overloaded{
                        [](const ConstantModel&) { return true; },
                        [](const StaticErgodicModel&) { return true; },
                        [](const ProductSeparableModel& p) {
                          return std::holds_alternative<ConstantLaw>(p.time_law);
                        },
                        [](const TimeRefreshModel& t) { return t.rate == 0.0; },
                        [](const HeavyTailModel& h) { return h.refresh_rate == 0.0; },
                    },
                    m);
}

void validate_model(const EnvironmentModel& m) {
  std::visit(Overloaded{
                 [](const ConstantModel& c) {
                   if (!(c.c > 0.0)) throw std::invalid_argument("constant model needs c > 0");
                 },
                 [](const StaticErgodicModel& s) { validate_law(s.law); },
                 [](const ProductSeparableModel& p) {
                   validate_law(p.space_law);
                   validate_law(p.time_law);
                 },
                 [](const TimeRefreshModel& t) {
                   validate_law(t.law);
                   if (!(t.rate >= 0.0)) throw std::invalid_argument("refresh rate must be >= 0");
                 },
                 [](const HeavyTailModel& h) {
                   validate_law(ParetoMixtureLaw{h.alpha_upper, h.alpha_lower});
                   if (!(h.refresh_rate >= 0.0)) throw std::invalid_argument("refresh rate must be >= 0");
                 },
             },
             m);
}

namespace {

TailFiniteness law_tails(const Law& law, double p, double q) {
  if (const auto* pm = std::get_if<ParetoMixtureLaw>(&law))
    return {p < pm->alpha_upper, q < pm->alpha_lower};
  return {true, true};  // bounded away from 0 and infinity
}

}  // namespace

TailFiniteness moments_finite(const EnvironmentModel& m, double p, double q) {
  return std::visit(Overloaded{
                        [](const ConstantModel&) { return TailFiniteness{true, true}; },
                        [&](const StaticErgodicModel& s) { return law_tails(s.law, p, q); },
                        [&](const ProductSeparableModel& s) {
                          const auto a = law_tails(s.space_law, p, q);
                          const auto b = law_tails(s.time_law, p, q);
                          return TailFiniteness{a.omega_p_finite && b.omega_p_finite,
                                                a.omega_inv_q_finite && b.omega_inv_q_finite};
                        },
                        [&](const TimeRefreshModel& s) { return law_tails(s.law, p, q); },
                        [&](const HeavyTailModel& h) {
                          return TailFiniteness{p < h.alpha_upper, q < h.alpha_lower};
                        },
                    },
                    m);
}

// ---- ConductanceField ------------------------------------------------------

ConductanceField::ConductanceField(TorusLattice lattice, TimeGrid grid, std::vector<double> values)
    : lattice_(std::move(lattice)), grid_(grid), values_(std::move(values)) {
  if (grid_.count < 1 || !(grid_.step > 0.0)) throw std::invalid_argument("invalid time grid");
  const auto ne = static_cast<std::size_t>(lattice_.num_edges());
  if (values_.size() == ne) {
    stored_ = 1;
  } else if (values_.size() == ne * static_cast<std::size_t>(grid_.count)) {
    stored_ = grid_.count;
  } else {
    throw std::invalid_argument("conductance values do not match lattice and grid");
  }
  require_positive(values_);
  time_constant_ = true;
  for (std::int64_t k = 1; k < stored_ && time_constant_; ++k)
    for (std::size_t e = 0; e < ne; ++e)
      if (values_[static_cast<std::size_t>(k) * ne + e] != values_[e]) {
        time_constant_ = false;
        break;
      }
  if (time_constant_ && stored_ > 1) {
    values_.resize(ne);
    stored_ = 1;
  }
}

ConductanceField ConductanceField::constant(const TorusLattice& lattice, const TimeGrid& grid,
                                            double c) {
  return ConductanceField(lattice, grid,
                          std::vector<double>(static_cast<std::size_t>(lattice.num_edges()), c));
}

ConductanceField ConductanceField::from_field(const SpaceTimeField& f) {
  if (f.kind() != FieldKind::edge || f.components() != 1)
    throw std::invalid_argument("conductance field must be a scalar edge field");
  return ConductanceField(f.lattice(), f.grid(), f.values());
}

double ConductanceField::mu(std::int64_t k, Vertex x) const {
  const auto w = slice(k);
  const int d = lattice_.dim();
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    s += w[static_cast<std::size_t>(x * d + i)] +
         w[static_cast<std::size_t>(lattice_.neighbor(x, i, -1) * d + i)];
  return s;
}

double ConductanceField::max_mu() const {
  double m = 0.0;
  for (std::int64_t k = 0; k < stored_; ++k)
    for (Vertex x = 0; x < lattice_.num_vertices(); ++x) m = std::max(m, mu(k, x));
  return m;
}

SpaceTimeField ConductanceField::to_field() const {
  SpaceTimeField f(lattice_, grid_, FieldKind::edge, 1);
  for (std::int64_t k = 0; k < grid_.count; ++k) {
    const auto s = slice(k);
    std::copy(s.begin(), s.end(), f.slice(k).begin());
  }
  return f;
}

// ---- sampling ---------------------------------------------------------------

ConductanceField sample_environment(const EnvironmentModel& model, const TorusLattice& lattice,
                                    double horizon, double dt, std::uint64_t seed) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  validate_model(model);
  std::int64_t K = 0;
  if (!is_integer_ratio(horizon, dt, K) || K < 1)
    throw std::invalid_argument("horizon must be a whole multiple of dt");
  const TimeGrid grid{0.0, dt, K, true};
  const std::int64_t ne = lattice.num_edges();
  const auto une = static_cast<std::size_t>(ne);

  auto edge_rng = [&](EdgeId e) { return CounterRng(seed, StreamTag::environment, static_cast<std::uint64_t>(e)); };
  // one stream per (interval, edge); interval in the high word
  auto cell_rng = [&](std::int64_t k, EdgeId e) {
    return CounterRng(seed, StreamTag::refresh,
                      (static_cast<std::uint64_t>(k) << 32) | static_cast<std::uint64_t>(e));
  };

  auto refresh_field = [&](const Law& law, double rate) {
    std::vector<double> v(une * static_cast<std::size_t>(K));
    const double p_refresh = -std::expm1(-rate * dt);
    parallel_for(ne, [&](std::int64_t lo, std::int64_t hi) {
      for (EdgeId e = lo; e < hi; ++e) {
        CounterRng r0 = edge_rng(e);
        double w = sample_law(law, r0);
        v[static_cast<std::size_t>(e)] = w;
        for (std::int64_t k = 1; k < K; ++k) {
          CounterRng r = cell_rng(k, e);
          if (r.uniform() < p_refresh) w = sample_law(law, r);
          v[static_cast<std::size_t>(k) * une + static_cast<std::size_t>(e)] = w;
        }
      }
    });
    return v;
  };

  auto static_field = [&](const Law& law) {
    std::vector<double> v(une);
    parallel_for(ne, [&](std::int64_t lo, std::int64_t hi) {
      for (EdgeId e = lo; e < hi; ++e) {
        CounterRng r = edge_rng(e);
        v[static_cast<std::size_t>(e)] = sample_law(law, r);
      }
    });
    return v;
  };

  std::vector<double> values = std::visit(
      Overloaded{
          [&](const ConstantModel& c) { return std::vector<double>(une, c.c); },
          [&](const StaticErgodicModel& s) { return static_field(s.law); },
          [&](const ProductSeparableModel& s) {
            const std::vector<double> f = static_field(s.space_law);
            std::vector<double> g(static_cast<std::size_t>(K));
            for (std::int64_t k = 0; k < K; ++k) {
              CounterRng r(seed, StreamTag::refresh, static_cast<std::uint64_t>(k) | (1ull << 63));
              g[static_cast<std::size_t>(k)] = sample_law(s.time_law, r);
            }
            std::vector<double> v(une * static_cast<std::size_t>(K));
            for (std::int64_t k = 0; k < K; ++k)
              for (std::size_t e = 0; e < une; ++e)
                v[static_cast<std::size_t>(k) * une + e] = f[e] * g[static_cast<std::size_t>(k)];
            return v;
          },
          [&](const TimeRefreshModel& t) {
            return t.rate == 0.0 ? static_field(t.law) : refresh_field(t.law, t.rate);
          },
          [&](const HeavyTailModel& h) {
            const Law law = ParetoMixtureLaw{h.alpha_upper, h.alpha_lower};
            return h.refresh_rate == 0.0 ? static_field(law) : refresh_field(law, h.refresh_rate);
          },
      },
      model);
  for (double w : values)
    if (!(w > 0.0) || !std::isfinite(w)) throw std::runtime_error("sampled a nonpositive conductance");
  return ConductanceField(lattice, grid, std::move(values));
}

ConductanceField shift(const ConductanceField& omega, double s, const Coord& z) {
  const TimeGrid& g = omega.grid();
  std::int64_t m = 0;
  if (!is_integer_ratio(s, g.step, m)) throw std::invalid_argument("shift time must be a multiple of dt");
  const TorusLattice& lat = omega.lattice();
  const int d = lat.dim();
  const auto une = static_cast<std::size_t>(lat.num_edges());
  TimeGrid ng = g;
  std::int64_t time_offset = m;
  if (!g.periodic) {
    // non-periodic: relabel the support instead of moving data
    ng.start = g.start - static_cast<double>(m) * g.step;
    time_offset = 0;
  }
  const std::int64_t slices = omega.stored_slices();
  std::vector<double> out(une * static_cast<std::size_t>(slices));
  for (std::int64_t k = 0; k < slices; ++k) {
    const auto src = omega.slice(slices == 1 ? 0 : k + time_offset);
    for (Vertex x = 0; x < lat.num_vertices(); ++x) {
      const Vertex xz = lat.translate(x, z);
      for (int i = 0; i < d; ++i)
        out[static_cast<std::size_t>(k) * une + static_cast<std::size_t>(x * d + i)] =
            src[static_cast<std::size_t>(xz * d + i)];
    }
  }
  return ConductanceField(lat, ng, std::move(out));
}

// ---- moment conditions -----------------------------------------------------

MomentCheck moment_condition_check(const MomentExponents& e) {
  for (double v : {e.p, e.p_prime, e.q, e.q_prime})
    if (!(v > 1.0)) throw std::invalid_argument("moment exponents must exceed 1");
  if (e.d < 1) throw std::invalid_argument("dimension must be positive");
  MomentCheck c;
  const double pp_factor = conjugate_exponent(e.p_prime);          // p'/(p'-1)
  const double qq_factor = 1.0 + inv_exponent(e.q_prime);          // (q'+1)/q'
  c.lhs = inv_exponent(e.p) * pp_factor * qq_factor + inv_exponent(e.q);
  c.rhs = 2.0 / static_cast<double>(e.d);
  c.margin = c.rhs - c.lhs;
  c.holds = c.lhs < c.rhs;
  c.remark_applicable = e.p == e.p_prime && e.q == e.q_prime;
  if (c.remark_applicable) {
    const double a = std::isinf(e.p) ? 0.0 : 1.0 / (e.p - 1.0);
    c.remark_lhs = a + a * inv_exponent(e.q) + inv_exponent(e.q);
    c.remark_holds = c.remark_lhs < c.rhs;
  }
  return c;
}

namespace {

MomentNorms measure_norms(const ConductanceField& omega, double p, double pp, double q, double qp,
                          const SpaceTimeCylinder& cyl, bool floor) {
  const SpaceTimeRegion region = make_region(cyl, omega.lattice(), omega.grid());
  // cache mu and nu per wrapped interval
  std::vector<VertexField> mu(static_cast<std::size_t>(omega.grid().count));
  std::vector<VertexField> nu(mu.size());
  for (std::int64_t k : region.times) {
    const std::size_t key = omega.time_constant() ? 0 : static_cast<std::size_t>(k);
    if (mu[key].empty()) {
      mu[key] = mu_of(omega.lattice(), omega.slice(k), floor);
      nu[key] = nu_of(omega.lattice(), omega.slice(k), floor);
    }
  }
  auto key_of = [&](std::int64_t k) { return omega.time_constant() ? 0 : static_cast<std::size_t>(k); };
  MomentNorms out;
  out.mu_norm = spacetime_norm_fn(
      [&](std::int64_t k, Vertex x) { return mu[key_of(k)][static_cast<std::size_t>(x)]; }, region, p, pp);
  out.nu_norm = spacetime_norm_fn(
      [&](std::int64_t k, Vertex x) { return nu[key_of(k)][static_cast<std::size_t>(x)]; }, region, q, qp);
  return out;
}

}  // namespace

MomentNorms empirical_moment_norms(const ConductanceField& omega, const MomentExponents& e,
                                   const SpaceTimeCylinder& q) {
  return measure_norms(omega, e.p, e.p_prime, e.q, e.q_prime, q, false);
}

MomentNorms floored_moment_norms(const ConductanceField& omega, double p, double p_prime, double q,
                                 double q_prime, const SpaceTimeCylinder& cyl) {
  return measure_norms(omega, p, p_prime, q, q_prime, cyl, true);
}

// ---- ergodic averages -----------------------------------------------------

LocalFunctional conductance_functional(int dir) {
  return [dir](const ConductanceField& w, std::int64_t k, Vertex x) {
    return w.omega(k, w.lattice().edge(x, dir));
  };
}

LocalFunctional mu_functional() {
  return [](const ConductanceField& w, std::int64_t k, Vertex x) { return w.mu(k, x); };
}

LocalFunctional constant_functional(double c) {
  return [c](const ConductanceField&, std::int64_t, Vertex) { return c; };
}

double ergodic_average(const LocalFunctional& phi, const ConductanceField& omega, double n) {
  if (!(n > 0.0)) throw std::invalid_argument("ergodic_average: n must be positive");
  const TimeGrid& g = omega.grid();
  const double T = n * n;
  if (T > g.period() * (1.0 + 1e-12))
    throw std::invalid_argument("ergodic_average: n^2 exceeds the field horizon");
  if (2.0 * n >= static_cast<double>(omega.lattice().side()))
    throw std::invalid_argument("ergodic_average: n too large for the torus");
  const std::vector<Vertex> ball = omega.lattice().ball(0, n);
  NeumaierSum total;
  double covered = 0.0;
  for (std::int64_t k = 0; covered < T * (1.0 - 1e-15); ++k) {
    const double w = std::min(g.step, T - covered);
    NeumaierSum s;
    for (Vertex x : ball) s.add(phi(omega, k, x));
    total.add(w * s.value() / static_cast<double>(ball.size()));
    covered += w;
  }
  return total.value() / T;
}

}  // namespace rcm
