#include "rcm/moser.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rcm/linalg.hpp"
#include "rcm/numeric.hpp"
#include "rcm/parallel.hpp"

namespace rcm {

namespace {

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

std::vector<char> membership(const TorusLattice& lat, const std::vector<Vertex>& sites) {
  std::vector<char> in(sz(lat.num_vertices()), 0);
  for (Vertex x : sites) in[sz(x)] = 1;
  return in;
}

// unwrapped times of the grid points make_region picks for q
std::vector<double> region_times(const SpaceTimeCylinder& q, const TimeGrid& g) {
  const double eps = 1e-9;
  const auto first = static_cast<std::int64_t>(std::ceil((q.t0 - g.start) / g.step - eps));
  const auto last = static_cast<std::int64_t>(std::ceil((q.t0 + q.duration() - g.start) / g.step - eps));
  std::vector<double> t;
  for (std::int64_t k = first; k < last; ++k) t.push_back(g.time(k));
  return t;
}

std::span<const double> omega_at(const ConductanceField& omega, double t) {
  return omega.slice(omega.grid().interval_of(t));
}

double ratio_of(double lhs, double rhs) {
  if (rhs > 0.0) return lhs / rhs;
  return lhs > 0.0 ? kInf : 0.0;
}

void check_exponent(double p, const char* name) {
  if (!(p > 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (1, inf]");
}

EdgeField unit_edges(const TorusLattice& lat) { return EdgeField(sz(lat.num_edges()), 1.0); }

}  // namespace

// ---- parameter algebra -----------------------------------------------------------

double rho(double d_prime, double q) {
  if (!(d_prime >= 2.0)) throw std::invalid_argument("rho: d' must be >= 2");
  if (!(q >= 1.0)) throw std::invalid_argument("rho: q must lie in [1, inf]");
  if (std::isinf(q) && d_prime == 2.0) throw std::invalid_argument("rho: q = inf requires d' > 2");
  return d_prime / (d_prime - 2.0 + d_prime * inv_exponent(q));
}

double kappa_partial_sum(double alpha, int terms) {
  NeumaierSum s;
  for (int k = 0; k < terms; ++k) s.add(std::pow(alpha, -k));
  return 0.5 * s.value();
}

IterationConstants iteration_constants(const MoserParams& m, double n) {
  check_exponent(m.p, "p");
  check_exponent(m.p_prime, "p'");
  check_exponent(m.q, "q");
  check_exponent(m.q_prime, "q'");
  if (m.d < 2 || m.d_prime < m.d) throw std::invalid_argument("need d' >= d >= 2");
  if (!(m.sigma_prime >= 0.5) || !(m.sigma_prime < m.sigma) || !(m.sigma <= 1.0))
    throw std::invalid_argument("need 1/2 <= sigma' < sigma <= 1");
  if (!(n > 1.0)) throw std::invalid_argument("iteration constants need n > 1");

  IterationConstants c;
  const double w = std::isinf(m.q_prime) ? 1.0 : m.q_prime / (m.q_prime + 1.0);
  c.condition_lhs =
      inv_exponent(m.p) * conjugate_exponent(m.p_prime) / w + inv_exponent(m.q);
  c.condition_rhs = 2.0 / m.d_prime;
  if (!(c.condition_lhs < c.condition_rhs))
    throw std::invalid_argument("moment exponent condition violated: margin " +
                                std::to_string(c.condition_rhs - c.condition_lhs));
  c.rho = rho(m.d_prime, m.q);
  c.p_star = conjugate_exponent(m.p);
  c.p_star_prime = conjugate_exponent(m.p_prime);
  c.alpha = 1.0 / c.p_star + (1.0 / c.p_star_prime) * (1.0 - 1.0 / c.rho) * w;
  if (!(c.alpha > 1.0)) throw std::runtime_error("iteration exponent alpha <= 1");
  c.alpha_p_star_le_rho = c.alpha * c.p_star <= c.rho * (1.0 + 1e-12);
  c.alpha_p_star_prime_gt = c.alpha * c.p_star_prime > w;

  const double log_n = std::log(n);
  c.k_stop = 0;
  while (std::pow(c.alpha, c.k_stop) < log_n) ++c.k_stop;
  for (int k = 0; k <= c.k_stop + 1; ++k) {
    c.alpha_k.push_back(std::pow(c.alpha, k));
    const double half = std::ldexp(1.0, -k);
    c.sigma_k.push_back(m.sigma_prime + half * (m.sigma - m.sigma_prime));
    c.tau_k.push_back(0.5 * half * (m.sigma - m.sigma_prime));
  }
  c.kappa = c.alpha / (2.0 * (c.alpha - 1.0));
  c.kappa_partial = kappa_partial_sum(c.alpha, c.k_stop + 1);
  c.gamma = 1.0;
  for (int k = 1;; ++k) {
    const double t = std::pow(c.alpha, -k);
    if (t < 1e-18) break;
    c.gamma *= 1.0 - t;
  }
  c.gamma_partial = 1.0;
  for (int k = 1; k <= c.k_stop; ++k) c.gamma_partial *= 1.0 - std::pow(c.alpha, -k);
  c.beta_threshold = 2.0 * c.rho * std::max(1.0, c.p_star_prime / c.p_star);
  return c;
}

// ---- appendix inequalities -------------------------------------------------------

double tilde_pow(double a, double alpha) {
  if (a == 0.0) return 0.0;
  const double m = std::pow(std::fabs(a), alpha);
  return a > 0.0 ? m : -m;
}

double tilde_pow_diff(double a, double b, double alpha) {
  if (a == 0.0 || b == 0.0 || (a > 0.0) != (b > 0.0)) return tilde_pow(a, alpha) - tilde_pow(b, alpha);
  const double aa = std::fabs(a);
  const double ab = std::fabs(b);
  // |a|^al - |b|^al = |b|^al expm1(al log1p((|a| - |b|)/|b|))
  const double m = std::pow(ab, alpha) * std::expm1(alpha * std::log1p((aa - ab) / ab));
  return a > 0.0 ? m : -m;
}

namespace {

struct Sampler {
  CounterRng rng;

  double magnitude_real(bool allow_zero) {
    const auto kind = rng.below(allow_zero ? 4 : 3);
    if (kind == 0) return rng.uniform(-3.0, 3.0);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    if (kind == 1) return sign * std::pow(10.0, rng.uniform(-3.0, 3.0));
    if (kind == 2) return sign * rng.uniform(0.5, 1.5);
    return 0.0;
  }
  // b close to a with probability 1/3
  std::pair<double, double> pair(bool allow_zero) {
    const double a = magnitude_real(allow_zero);
    if (a != 0.0 && rng.below(3) == 0) {
      const double eps = std::pow(10.0, rng.uniform(-10.0, -1.0)) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      return {a, a * (1.0 + eps)};
    }
    return {a, magnitude_real(allow_zero)};
  }
  double exponent(double lo, double hi, double gap) {
    for (;;) {
      const double s = rng.uniform(lo, hi);
      if (std::fabs(s) >= gap) return s;
    }
  }
};

constexpr double kSlack = 1e-12;
constexpr std::int64_t kBlock = 10000;

struct Tally {
  std::int64_t trials = 0;
  std::int64_t violations = 0;
  std::int64_t literal = 0;
  double max_ratio = 0.0;
  void record(double lhs, double rhs) {
    ++trials;
    if (lhs > rhs * (1.0 + kSlack)) ++violations;
    if (rhs > 0.0) max_ratio = std::max(max_ratio, lhs / rhs);
  }
};

}  // namespace

AppendixReport appendix_inequality_suite(std::int64_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("appendix suite needs at least one trial");
  const std::int64_t blocks = (trials + kBlock - 1) / kBlock;
  std::vector<std::array<Tally, 4>> per_block(sz(blocks));
  parallel_for(blocks, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t blk = b0; blk < b1; ++blk) {
      Sampler s{CounterRng(seed, StreamTag::corpus, static_cast<std::uint64_t>(blk))};
      auto& t = per_block[sz(blk)];
      const std::int64_t count = std::min(kBlock, trials - blk * kBlock);
      for (std::int64_t i = 0; i < count; ++i) {
        {  // (i): alpha, beta in +-[0.05, 4]; zeros only when every power is positive
          const double al = s.exponent(-4.0, 4.0, 0.05);
          const double be = s.exponent(-4.0, 4.0, 0.05);
          const bool zeros = al > 0.0 && be > 0.0 && al >= be;
          const auto [a, b] = s.pair(zeros);
          const double lhs = std::fabs(tilde_pow_diff(a, b, al));
          const double rhs = std::max(1.0, std::fabs(al / be)) * std::fabs(tilde_pow_diff(a, b, be)) *
                             (std::pow(std::fabs(a), al - be) + std::pow(std::fabs(b), al - be));
          t[0].record(lhs, rhs);
        }
        {  // (ii) all reals, alpha in (1/2, 5]
          const double al = 0.5 + 4.5 * s.rng.uniform_open();
          const auto [a, b] = s.pair(true);
          const double lhs = std::pow(tilde_pow_diff(a, b, al), 2);
          const double rhs =
              std::fabs(al * al / (2.0 * al - 1.0)) * (a - b) * tilde_pow_diff(a, b, 2.0 * al - 1.0);
          t[1].record(lhs, rhs);
        }
        {  // (ii) positive reals, alpha in +-[0.05, 4] away from 1/2; product taken in absolute value
          double al;
          do al = s.exponent(-4.0, 4.0, 0.05);
          while (std::fabs(al - 0.5) < 0.05);
          auto [a, b] = s.pair(false);
          a = std::fabs(a);
          b = std::fabs(b);
          const double lhs = std::pow(tilde_pow_diff(a, b, al), 2);
          const double literal =
              std::fabs(al * al / (2.0 * al - 1.0)) * (a - b) * tilde_pow_diff(a, b, 2.0 * al - 1.0);
          t[2].record(lhs, std::fabs(literal));
          if (lhs > literal * (1.0 + kSlack)) ++t[2].literal;
        }
        {  // (iii) all reals, alpha in [1/2, 5]
          const double al = s.rng.uniform(0.5, 5.0);
          const auto [a, b] = s.pair(true);
          const double lhs =
              (std::pow(std::fabs(a), 2.0 * al - 1.0) + std::pow(std::fabs(b), 2.0 * al - 1.0)) *
              std::fabs(a - b);
          const double rhs = 4.0 * std::fabs(tilde_pow_diff(a, b, al)) *
                             (std::pow(std::fabs(a), al) + std::pow(std::fabs(b), al));
          t[3].record(lhs, rhs);
        }
      }
    }
  });
  AppendixReport report;
  const char* names[4] = {"chain_upper_bound", "polarisation_real", "polarisation_positive",
                          "chain_lower_bound"};
  report.pass = true;
  for (int j = 0; j < 4; ++j) {
    AppendixStat st;
    st.name = names[j];
    for (const auto& b : per_block) {
      st.trials += b[sz(j)].trials;
      st.violations += b[sz(j)].violations;
      st.literal_violations += b[sz(j)].literal;
      st.max_ratio = std::max(st.max_ratio, b[sz(j)].max_ratio);
    }
    report.pass = report.pass && st.violations == 0;
    report.items.push_back(st);
  }
  return report;
}

// ---- cutoffs -------------------------------------------------------------------

double CutoffPair::zeta(double t) const {
  if (t <= ramp_start) return 1.0;
  if (t >= ramp_end) return 0.0;
  return (ramp_end - t) / (ramp_end - ramp_start);
}

std::vector<Vertex> inner_boundary(const TorusLattice& lat, const std::vector<Vertex>& ball) {
  const auto in = membership(lat, ball);
  std::vector<Vertex> out;
  for (Vertex x : ball) {
    bool edge = false;
    for (int i = 0; i < lat.dim() && !edge; ++i)
      edge = !in[sz(lat.neighbor(x, i, +1))] || !in[sz(lat.neighbor(x, i, -1))];
    if (edge) out.push_back(x);
  }
  return out;
}

CutoffPair build_cutoffs(int k, const MoserParams& params, double n, const TorusLattice& lat, Vertex x0,
                         double t0) {
  if (k < 0) throw std::invalid_argument("cutoff level must be >= 0");
  if (!(n > 0.0)) throw std::invalid_argument("cutoff scale must be positive");
  const double span = params.sigma - params.sigma_prime;
  if (!(params.sigma_prime >= 0.5) || !(span > 0.0) || !(params.sigma <= 1.0))
    throw std::invalid_argument("need 1/2 <= sigma' < sigma <= 1");
  const double half = std::ldexp(1.0, -k);
  const double s_k = params.sigma_prime + half * span;
  const double s_k1 = params.sigma_prime + 0.5 * half * span;
  const double tau = 0.5 * half * span;
  if (s_k * n >= 0.5 * lat.side()) throw std::invalid_argument("cutoff ball wraps the torus");

  CutoffPair c;
  c.k = k;
  c.n = n;
  c.x0 = x0;
  c.t0 = t0;
  c.outer_radius = static_cast<std::int64_t>(std::floor(s_k * n));
  c.inner_radius = static_cast<std::int64_t>(std::floor(s_k1 * n));
  c.tau_n = tau * n;
  const auto width = static_cast<double>(c.outer_radius - c.inner_radius);
  if (width < c.tau_n * (1.0 - 1e-12))
    throw std::invalid_argument("cutoff geometry: ramp of " + std::to_string(width) +
                                " sites is narrower than tau_k n = " + std::to_string(c.tau_n));
  c.eta.assign(sz(lat.num_vertices()), 0.0);
  for (Vertex x = 0; x < lat.num_vertices(); ++x) {
    const auto r = static_cast<double>(lat.distance(x0, x));
    c.eta[sz(x)] = std::clamp((static_cast<double>(c.outer_radius) - r) / width, 0.0, 1.0);
  }
  c.ramp_start = t0 + s_k1 * n * n;
  c.ramp_end = t0 + s_k * n * n;
  return c;
}

CutoffCheck check_cutoffs(const CutoffPair& c, const MoserParams& params, const TorusLattice& lat) {
  CutoffCheck out;
  out.support = out.inner_one = out.boundary_zero = out.zeta_ok = true;
  for (Vertex x = 0; x < lat.num_vertices(); ++x) {
    const std::int64_t r = lat.distance(c.x0, x);
    const double e = c.eta[sz(x)];
    if (e < 0.0 || e > 1.0) out.support = false;
    if (r > c.outer_radius && e != 0.0) out.support = false;
    if (r <= c.inner_radius && e != 1.0) out.inner_one = false;
  }
  for (Vertex x : inner_boundary(lat, lat.ball(c.x0, static_cast<double>(c.outer_radius))))
    if (c.eta[sz(x)] != 0.0) out.boundary_zero = false;
  const EdgeField g = grad(lat, c.eta);
  for (double v : g) out.max_gradient = std::max(out.max_gradient, std::fabs(v));
  out.gradient = out.max_gradient <= (1.0 / c.tau_n) * (1.0 + 1e-12);

  const double span = params.sigma - params.sigma_prime;
  const double tau = std::ldexp(0.5 * span, -c.k);
  const double slope_cap = 1.0 / (tau * c.n * c.n);
  const int samples = 2000;
  const double lo = c.t0;
  const double hi = c.ramp_end + 0.25 * (c.ramp_end - c.t0);
  double prev_t = lo, prev = c.zeta(lo);
  for (int i = 0; i <= samples; ++i) {
    const double t = lo + (hi - lo) * i / samples;
    const double z = c.zeta(t);
    if (z < 0.0 || z > 1.0) out.zeta_ok = false;
    if (t <= c.ramp_start && z != 1.0) out.zeta_ok = false;
    if (t >= c.ramp_end && z != 0.0) out.zeta_ok = false;
    if (i > 0 && std::fabs(z - prev) > slope_cap * (t - prev_t) * (1.0 + 1e-9)) out.zeta_ok = false;
    prev = z;
    prev_t = t;
  }
  if (c.zeta_slope() > slope_cap * (1.0 + 1e-12)) out.zeta_ok = false;
  return out;
}

// ---- Poincare and Sobolev ---------------------------------------------------------

CheckResult poincare_check(std::span<const double> u, const TorusLattice& lat, Vertex center, double n) {
  if (u.size() != sz(lat.num_vertices())) throw std::invalid_argument("poincare_check: size mismatch");
  const std::vector<Vertex> ball = lat.ball(center, n);
  const auto in = membership(lat, ball);
  NeumaierSum m;
  for (Vertex x : ball) m.add(u[sz(x)]);
  const double mean_b = m.value() / static_cast<double>(ball.size());
  NeumaierSum lhs, rhs;
  for (Vertex x : ball) {
    lhs.add(std::fabs(u[sz(x)] - mean_b));
    for (int i = 0; i < lat.dim(); ++i) {
      const Vertex y = lat.neighbor(x, i, +1);
      if (in[sz(y)]) rhs.add(std::fabs(u[sz(x)] - u[sz(y)]));
    }
  }
  CheckResult r;
  r.lhs = lhs.value();
  r.rhs = n * rhs.value();
  r.ratio = ratio_of(r.lhs, r.rhs);
  return r;
}

CheckResult sobolev_check(const SpaceTimeField& u, const ConductanceField& omega,
                          const SpaceTimeCylinder& q_cyl, double q, double q_prime) {
  const TorusLattice& lat = u.lattice();
  if (!(lat == omega.lattice())) throw std::invalid_argument("sobolev_check: lattice mismatch");
  if (u.kind() != FieldKind::vertex || u.components() != 1)
    throw std::invalid_argument("sobolev_check: u must be a scalar vertex field");
  check_exponent(q, "q");
  check_exponent(q_prime, "q'");
  const double rh = rho(lat.dim(), q);
  const SpaceTimeRegion region = make_region(q_cyl, lat, u.grid());
  const std::vector<double> times = region_times(q_cyl, u.grid());

  std::vector<char> in_time(sz(u.grid().count), 0);
  for (std::int64_t k : region.times) in_time[sz(k)] = 1;
  auto allowed = membership(lat, region.sites);
  for (Vertex x : inner_boundary(lat, region.sites)) allowed[sz(x)] = 0;
  for (std::int64_t k = 0; k < u.grid().count; ++k) {
    const auto s = u.slice(k);
    for (Vertex x = 0; x < lat.num_vertices(); ++x)
      if (s[sz(x)] != 0.0 && (!in_time[sz(k)] || !allowed[sz(x)]))
        throw std::invalid_argument("sobolev_check: u violates the support condition");
  }

  const double w = std::isinf(q_prime) ? 1.0 : q_prime / (q_prime + 1.0);
  CheckResult r;
  r.lhs = spacetime_norm_fn(
      [&](std::int64_t k, Vertex x) { return u.at(k, x) * u.at(k, x); }, region, rh, w);

  std::vector<VertexField> nu(region.times.size());
  NeumaierSum energy;
  for (std::size_t i = 0; i < region.times.size(); ++i) {
    const auto om = omega_at(omega, times[i]);
    nu[i] = nu_of(lat, om, true);
    const auto s = u.slice(region.times[i]);
    energy.add(dirichlet_form(lat, om, s, s));
  }
  std::vector<std::size_t> pos(sz(u.grid().count), 0);
  for (std::size_t i = 0; i < region.times.size(); ++i) pos[sz(region.times[i])] = i;
  const double nu_norm = spacetime_norm_fn(
      [&](std::int64_t k, Vertex x) { return nu[pos[sz(k)]][sz(x)]; }, region, q, q_prime);
  const double nb = static_cast<double>(region.sites.size());
  const double n = q_cyl.radius();
  r.rhs = n * n * nu_norm * energy.value() / static_cast<double>(region.times.size()) / nb;
  r.ratio = ratio_of(r.lhs, r.rhs);
  return r;
}

// ---- interpolation -------------------------------------------------------------------

double interpolation_gamma2(double rh, double q_prime, double gamma1) {
  if (!(rh > 1.0)) throw std::invalid_argument("interpolation: rho must exceed 1");
  if (!(gamma1 > 1.0)) throw std::invalid_argument("interpolation: gamma1 must exceed 1");
  const double w = std::isinf(q_prime) ? 1.0 : q_prime / (q_prime + 1.0);
  return (1.0 - 1.0 / rh) * w / (1.0 - 1.0 / gamma1);
}

InterpolationResult interpolation_check(const SpaceTimeField& u, double rh, double q_prime, double gamma1,
                                        double gamma2, const SpaceTimeCylinder& q_cyl) {
  if (!(rh > 1.0)) throw std::invalid_argument("interpolation: rho must exceed 1");
  if (!(q_prime >= 1.0)) throw std::invalid_argument("interpolation: q' must lie in [1, inf]");
  const double w = std::isinf(q_prime) ? 1.0 : q_prime / (q_prime + 1.0);
  if (!(gamma1 > 1.0) || gamma1 > rh * (1.0 + 1e-12))
    throw std::invalid_argument("interpolation: need 1 < gamma1 <= rho");
  if (!std::isfinite(gamma2) || gamma2 < w * (1.0 - 1e-12))
    throw std::invalid_argument("interpolation: need q'/(q'+1) <= gamma2 < inf");
  const double cond = 1.0 / gamma1 + (1.0 / gamma2) * (1.0 - 1.0 / rh) * w;
  if (std::fabs(cond - 1.0) > 1e-12)
    throw std::invalid_argument("interpolation: exponent condition off by " + std::to_string(cond - 1.0));
  const SpaceTimeRegion region = make_region(q_cyl, u.lattice(), u.grid());
  InterpolationResult r;
  r.lhs = spacetime_norm(u, region, gamma1, gamma2);
  r.rhs = spacetime_norm(u, region, 1.0, kInf) + spacetime_norm(u, region, rh, w);
  r.pass = r.lhs <= r.rhs * (1.0 + 1e-12);
  return r;
}

InterpolationSuite interpolation_suite(std::int64_t instances, std::uint64_t seed) {
  if (instances < 1) throw std::invalid_argument("interpolation_suite: instances must be positive");
  std::vector<double> lhs(sz(instances)), rhs(sz(instances));
  parallel_for(instances, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      CounterRng rng(seed, StreamTag::corpus, (std::uint64_t{1} << 40) | static_cast<std::uint64_t>(i));
      const int side = rng.uniform() < 0.5 ? 8 : 16;
      const double n = static_cast<double>(2 + rng.below(static_cast<std::uint64_t>(side / 4 - 1)));
      const TorusLattice lat(2, side);
      const SpaceTimeCylinder q{0.0, n, static_cast<Vertex>(rng.below(static_cast<std::uint64_t>(lat.num_vertices()))),
                                0.5 + 0.5 * rng.uniform()};
      // the cylinder spans 4 to 16 of the 16 slices
      const TimeGrid g{0.0, q.duration() / (4.0 + 12.0 * rng.uniform()), 16, false};
      SpaceTimeField u(lat, g, FieldKind::vertex);
      const double scale = std::exp(4.0 * rng.normal());
      const double zero_frac = rng.uniform();
      for (double& v : u.values()) {
        if (rng.uniform() < zero_frac) continue;
        v = scale * std::exp(2.0 * rng.normal()) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      }
      const double rh = 1.0 + 7.0 * rng.uniform_open();
      const double qp = rng.uniform() < 0.2 ? kInf : 1.0 + 9.0 * rng.uniform();
      const double g1 = 1.0 + (rh - 1.0) * rng.uniform_open();
      const auto r = interpolation_check(u, rh, qp, g1, interpolation_gamma2(rh, qp, g1), q);
      lhs[sz(i)] = r.lhs;
      rhs[sz(i)] = r.rhs;
    }
  });
  InterpolationSuite s;
  s.instances = instances;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (!(lhs[i] <= rhs[i] * (1.0 + 1e-12))) ++s.violations;
    if (rhs[i] > 0.0) s.max_ratio = std::max(s.max_ratio, lhs[i] / rhs[i]);
  }
  s.pass = s.violations == 0;
  return s;
}

// ---- energy estimate ------------------------------------------------------------------

SpaceTimeField solve_backward_poisson(const ConductanceField& omega, std::span<const double> grad_f,
                                      std::span<const double> terminal, double t_start, double dt,
                                      std::int64_t steps, double tol) {
  const TorusLattice& lat = omega.lattice();
  const std::int64_t N = lat.num_vertices();
  if (grad_f.size() != sz(lat.num_edges()) || terminal.size() != sz(N))
    throw std::invalid_argument("solve_backward_poisson: size mismatch");
  if (!(dt > 0.0) || steps < 1) throw std::invalid_argument("solve_backward_poisson: bad time window");
  SpaceTimeField u(lat, TimeGrid{t_start, dt, steps + 1, false}, FieldKind::vertex);
  std::copy(terminal.begin(), terminal.end(), u.slice(steps).begin());
  KrylovOptions ko;
  ko.abs_tol = tol * dt;
  ko.max_iterations = 20000;
  std::vector<double> rhs(sz(N)), diag(sz(N)), tmp(sz(N));
  EdgeField flux(grad_f.size());
  for (std::int64_t k = steps - 1; k >= 0; --k) {
    const auto om = omega_at(omega, u.grid().time(k));
    for (std::size_t e = 0; e < flux.size(); ++e) flux[e] = om[e] * grad_f[e];
    const VertexField source = div(lat, flux);
    const auto next = u.slice(k + 1);
    for (Vertex x = 0; x < N; ++x) {
      rhs[sz(x)] = next[sz(x)] - dt * source[sz(x)];
      diag[sz(x)] = 1.0;
    }
    const VertexField mu = mu_of(lat, om, false);
    for (Vertex x = 0; x < N; ++x) diag[sz(x)] += dt * mu[sz(x)];
    auto cur = u.slice(k);
    std::copy(next.begin(), next.end(), cur.begin());
    const LinearOp A = [&](std::span<const double> x, std::span<double> y) {
      generator_apply_into(lat, om, x, tmp);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - dt * tmp[i];
    };
    const KrylovResult kr = pcg(A, diag, rhs, cur, ko);
    if (!kr.converged) throw std::runtime_error("solve_backward_poisson: linear solve did not converge");
  }
  return u;
}

EnergyResult energy_estimate_check(const SpaceTimeField& u, const ConductanceField& omega,
                                   std::span<const double> grad_f, const CutoffPair& cut, double sigma_k,
                                   double alpha, double p, double p_prime, double tol) {
  const TorusLattice& lat = u.lattice();
  if (!(lat == omega.lattice())) throw std::invalid_argument("energy_estimate_check: lattice mismatch");
  if (!(alpha >= 1.0)) throw std::invalid_argument("energy_estimate_check: alpha must be >= 1");
  if (!(p > 1.0) || !(p_prime > 1.0) || std::isinf(p) || std::isinf(p_prime))
    throw std::invalid_argument("energy_estimate_check: p, p' must lie in (1, inf)");
  if (grad_f.size() != sz(lat.num_edges()) || cut.eta.size() != sz(lat.num_vertices()))
    throw std::invalid_argument("energy_estimate_check: size mismatch");
  const double n = cut.n;
  double grad_f_max = 0.0;
  for (double g : grad_f) grad_f_max = std::max(grad_f_max, std::fabs(g));
  if (grad_f_max > (1.0 / n) * (1.0 + 1e-12))
    throw std::invalid_argument("energy_estimate_check: |grad f| exceeds 1/n");

  const SpaceTimeCylinder q_cyl = cut.cylinder(sigma_k);
  if (std::fabs(q_cyl.t0 + q_cyl.duration() - cut.ramp_end) > 1e-9 * std::max(1.0, cut.ramp_end))
    throw std::invalid_argument("energy_estimate_check: cylinder does not end where zeta vanishes");
  const TimeGrid& g = u.grid();
  const SpaceTimeRegion region = make_region(q_cyl, lat, g);
  const std::vector<double> times = region_times(q_cyl, g);
  const std::int64_t N = lat.num_vertices();
  const double dt = g.step;
  const double nb = static_cast<double>(region.sites.size());
  const double len = region.duration();

  EnergyResult r;
  NeumaierSum energy;
  EdgeField flux(grad_f.size());
  VertexField Lu(sz(N)), ua(sz(N));
  for (std::size_t i = 0; i < region.times.size(); ++i) {
    const std::int64_t k = region.times[i];
    if (!g.periodic && k + 1 >= g.count)
      throw std::invalid_argument("energy_estimate_check: u does not extend past the cylinder");
    const auto om = omega_at(omega, times[i]);
    const auto cur = u.slice(k);
    const auto next = u.slice(g.periodic ? (k + 1) % g.count : k + 1);
    generator_apply_into(lat, om, cur, Lu);
    for (std::size_t e = 0; e < flux.size(); ++e) flux[e] = om[e] * grad_f[e];
    const VertexField source = div(lat, flux);
    for (Vertex x : region.sites) {
      const double res = (next[sz(x)] - cur[sz(x)]) / dt + Lu[sz(x)] - source[sz(x)];
      r.equation_residual = std::max(r.equation_residual, std::fabs(res));
    }

    const double z = cut.zeta(times[i]);
    for (Vertex x = 0; x < N; ++x) ua[sz(x)] = tilde_pow(cur[sz(x)], alpha);
    NeumaierSum sup;
    for (Vertex x : region.sites) sup.add(std::pow(cut.eta[sz(x)] * ua[sz(x)], 2));
    r.lhs_sup = std::max(r.lhs_sup, z * sup.value() / nb);
    NeumaierSum form;
    for (EdgeId e = 0; e < lat.num_edges(); ++e) {
      const Vertex a = lat.edge_minus(e), b = lat.edge_plus(e);
      const double w2 = 0.5 * (cut.eta[sz(a)] * cut.eta[sz(a)] + cut.eta[sz(b)] * cut.eta[sz(b)]);
      if (w2 == 0.0) continue;
      const double dg = ua[sz(b)] - ua[sz(a)];
      form.add(w2 * om[sz(e)] * dg * dg);
    }
    energy.add(dt * z * form.value() / nb);
  }
  if (r.equation_residual > tol)
    throw std::runtime_error("energy_estimate_check: u is not a solution (residual " +
                             std::to_string(r.equation_residual) + ")");
  r.lhs_sup /= len;
  r.lhs_energy = energy.value() / len;

  // floored mu on the cylinder, evaluated on u's grid
  std::vector<VertexField> mu(region.times.size());
  std::vector<std::size_t> pos(sz(g.count), 0);
  for (std::size_t i = 0; i < region.times.size(); ++i) {
    mu[i] = mu_of(lat, omega_at(omega, times[i]), true);
    pos[sz(region.times[i])] = i;
  }
  const double mu_norm = spacetime_norm_fn(
      [&](std::int64_t k, Vertex x) { return mu[pos[sz(k)]][sz(x)]; }, region, p, p_prime);
  const double ps = conjugate_exponent(p), pps = conjugate_exponent(p_prime);
  auto upow = [&](double e) {
    return spacetime_norm_fn([&](std::int64_t k, Vertex x) { return std::pow(std::fabs(u.at(k, x)), e); },
                             region, ps, pps);
  };
  const EdgeField geta = grad(lat, cut.eta);
  double geta_max = 0.0, cross_max = 0.0;
  for (std::size_t e = 0; e < geta.size(); ++e) {
    geta_max = std::max(geta_max, std::fabs(geta[e]));
    cross_max = std::max(cross_max, std::fabs(geta[e] * grad_f[e]));
  }
  const double a2 = alpha * alpha * mu_norm;
  r.rhs_cutoff = a2 * (geta_max * geta_max + cut.zeta_slope()) * upow(2.0 * alpha);
  r.rhs_cross = a2 * cross_max * upow(2.0 * alpha - 1.0);
  r.rhs_drift = a2 * grad_f_max * grad_f_max * upow(2.0 * alpha - 2.0);
  r.constant = ratio_of(r.lhs(), r.rhs());
  return r;
}

// ---- maximal inequality ---------------------------------------------------------------

SpaceTimeField corrector_component(const CorrectorSolution& sol, int j, double scale,
                                   std::int64_t slices_if_static) {
  const TorusLattice& lat = sol.lattice();
  if (j < 0 || j >= sol.dim()) throw std::invalid_argument("corrector_component: bad component");
  const TimeGrid& sg = sol.grid();
  const bool expand = sg.count == 1;
  if (expand && slices_if_static < 1) throw std::invalid_argument("corrector_component: need >= 1 slice");
  const TimeGrid g = expand ? TimeGrid{sg.start, sg.period() / static_cast<double>(slices_if_static),
                                       slices_if_static, true}
                            : sg;
  SpaceTimeField u(lat, g, FieldKind::vertex);
  const int d = sol.dim();
  for (std::int64_t k = 0; k < g.count; ++k) {
    const auto s = sol.chi.slice(expand ? 0 : k);
    auto out = u.slice(k);
    for (Vertex x = 0; x < lat.num_vertices(); ++x) out[sz(x)] = scale * s[sz(x * d + j)];
  }
  return u;
}

MaximalResult maximal_inequality_evaluate(const SpaceTimeField& u, const ConductanceField& omega, double n,
                                          const MoserParams& params, double alpha_norm) {
  if (!(n >= 2.0)) throw std::invalid_argument("maximal inequality needs n >= 2");
  if (!(alpha_norm > 0.0)) throw std::invalid_argument("maximal inequality needs alpha_norm > 0");
  const IterationConstants ic = iteration_constants(params, n);
  const TorusLattice& lat = u.lattice();
  const double t0 = u.grid().start;
  const SpaceTimeCylinder q{t0, n, 0, 1.0};
  MaximalResult r;
  r.kappa = ic.kappa;
  r.gamma = ic.gamma;
  const MomentNorms mn = floored_moment_norms(omega, params.p, params.p_prime, params.q, params.q_prime, q);
  r.mu_norm = mn.mu_norm;
  r.nu_norm = mn.nu_norm;
  r.lhs = spacetime_norm(u, make_region(q.scaled(params.sigma_prime), lat, u.grid()), kInf, kInf);
  r.u_norm = spacetime_norm(u, make_region(q.scaled(params.sigma), lat, u.grid()), alpha_norm, alpha_norm);
  const double span = params.sigma - params.sigma_prime;
  r.rhs = std::pow(r.mu_norm * r.nu_norm / (span * span), r.kappa) * std::pow(r.u_norm, r.gamma);
  r.ratio = ratio_of(r.lhs, r.rhs);
  for (int k = 0; k <= ic.k_stop; ++k) {
    const double ak = ic.alpha_k[sz(k)];
    const SpaceTimeRegion rk = make_region(q.scaled(ic.sigma_k[sz(k)]), lat, u.grid());
    const double norm = spacetime_norm(u, rk, 2.0 * ak * ic.p_star, 2.0 * ak * ic.p_star_prime);
    r.chain_norms.push_back(norm);
    r.chain_gamma.push_back(norm >= 1.0 ? 1.0 : 1.0 - 1.0 / ak);
  }
  return r;
}

MaximalResult maximal_inequality_check(const ConductanceField& omega, double n, const MoserParams& params,
                                       double alpha_norm, const SolverOptions& opt, int j) {
  iteration_constants(params, n);
  const CorrectorSolution sol = solve_corrector(omega, opt);
  const SpaceTimeField u = corrector_component(sol, j, -1.0 / n, 16);
  return maximal_inequality_evaluate(u, omega, n, params, alpha_norm);
}

// ---- corpora ---------------------------------------------------------------------------

namespace {

std::vector<Vertex> interior_sites(const TorusLattice& lat, Vertex center, double r) {
  const std::vector<Vertex> ball = lat.ball(center, r);
  const auto bnd = membership(lat, inner_boundary(lat, ball));
  std::vector<Vertex> out;
  for (Vertex x : ball)
    if (!bnd[sz(x)]) out.push_back(x);
  return out;
}

}  // namespace

VertexField smooth_noise_field(const TorusLattice& lat, Vertex center, double r, std::uint64_t seed,
                               std::uint64_t stream) {
  const std::vector<Vertex> inner = interior_sites(lat, center, r);
  const auto in = membership(lat, inner);
  CounterRng rng(seed, StreamTag::corpus, stream);
  VertexField u(sz(lat.num_vertices()), 0.0);
  for (Vertex x : inner) u[sz(x)] = rng.normal();
  const EdgeField ones = unit_edges(lat);
  const double h = 1.0 / (4.0 * lat.dim());
  VertexField Lu(u.size());
  for (int pass = 0; pass < 2; ++pass) {
    generator_apply_into(lat, ones, u, Lu);
    for (std::size_t x = 0; x < u.size(); ++x) u[x] = in[x] ? u[x] + h * Lu[x] : 0.0;
  }
  return u;
}

VertexField tent_field(const TorusLattice& lat, Vertex center, double r) {
  const double R = std::floor(r);
  VertexField u(sz(lat.num_vertices()), 0.0);
  for (Vertex x : lat.ball(center, r)) u[sz(x)] = R - static_cast<double>(lat.distance(center, x));
  return u;
}

VertexField spike_field(const TorusLattice& lat, Vertex center, double r, std::uint64_t seed,
                        std::uint64_t stream) {
  const std::vector<Vertex> inner = interior_sites(lat, center, r);
  VertexField u(sz(lat.num_vertices()), 0.0);
  if (inner.empty()) return u;
  CounterRng rng(seed, StreamTag::corpus, stream);
  const auto count = 1 + rng.below(3);
  for (std::uint64_t i = 0; i < count; ++i) {
    const Vertex x = inner[sz(static_cast<std::int64_t>(rng.below(inner.size())))];
    u[sz(x)] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.0, 10.0);
  }
  return u;
}

SpaceTimeField compact_spacetime_field(const TorusLattice& lat, const TimeGrid& grid,
                                       const SpaceTimeCylinder& cyl, CorpusKind kind, std::uint64_t seed,
                                       std::uint64_t stream) {
  SpaceTimeField u(lat, grid, FieldKind::vertex);
  const SpaceTimeRegion region = make_region(cyl, lat, grid);
  const double r = cyl.radius();
  if (kind == CorpusKind::spike) {
    CounterRng rng(seed, StreamTag::corpus, stream);
    const std::int64_t k = region.times[sz(static_cast<std::int64_t>(rng.below(region.times.size())))];
    const VertexField f = spike_field(lat, cyl.x0, r, seed, stream ^ 0x5bd1e995ull);
    std::copy(f.begin(), f.end(), u.slice(k).begin());
    return u;
  }
  const VertexField tent = kind == CorpusKind::tent ? tent_field(lat, cyl.x0, r) : VertexField{};
  for (std::size_t i = 0; i < region.times.size(); ++i) {
    const VertexField f = kind == CorpusKind::tent
                              ? tent
                              : smooth_noise_field(lat, cyl.x0, r, seed, (stream << 16) + i);
    std::copy(f.begin(), f.end(), u.slice(region.times[i]).begin());
  }
  if (kind == CorpusKind::tent)
    for (Vertex x : inner_boundary(lat, region.sites))
      for (std::int64_t k : region.times) u.at(k, x) = 0.0;
  return u;
}

// ---- empirical-constant trends ----------------------------------------------------------

ConstantTrendReport moser_constant_trends(const ConstantTrendConfig& cfg) {
  if (cfg.n_list.empty() || cfg.seeds.size() < 2)
    throw std::invalid_argument("constant trends need scales and at least two seeds");
  if (cfg.corpus_size < 1 || cfg.time_slices < 1 || cfg.side_factor < 4)
    throw std::invalid_argument("constant trends: bad corpus, slice or side settings");
  validate_model(cfg.model);
  bool want[4] = {false, false, false, false};
  const char* known[4] = {"poincare", "sobolev", "energy", "maximal"};
  for (const std::string& c : cfg.checks) {
    const auto it = std::find(std::begin(known), std::end(known), c);
    if (it == std::end(known)) throw std::invalid_argument("constant trends: unknown check " + c);
    want[it - std::begin(known)] = true;
  }
  MoserParams params = cfg.params;
  params.d = cfg.dim;
  params.d_prime = std::max(params.d_prime, static_cast<double>(cfg.dim));
  const double beta = iteration_constants(params, cfg.n_list.back()).beta_threshold;

  ConstantTrendReport rep;
  rep.model = model_name(cfg.model);
  for (int n : cfg.n_list) rep.ns.push_back(n);
  const char* names[5] = {"poincare", "sobolev", "energy", "maximal_below_beta", "maximal_above_beta"};
  const int group[5] = {0, 1, 2, 3, 3};
  std::vector<int> rows;
  for (int c = 0; c < 5; ++c) {
    if (!want[group[c]]) continue;
    rows.push_back(c);
    ConstantTrend t;
    t.check = names[c];
    t.per_seed.assign(cfg.seeds.size(), std::vector<double>(cfg.n_list.size(), 0.0));
    rep.checks.push_back(t);
  }
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
      const int n = cfg.n_list[ni];
      const double nd = n;
      const TorusLattice lat(cfg.dim, cfg.side_factor * n);
      const double horizon = nd * nd;
      const double step = horizon / cfg.time_slices;
      const std::uint64_t env_seed = cfg.seeds[si] + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(n);
      const ConductanceField omega = sample_environment(cfg.model, lat, horizon, step, env_seed);
      const std::uint64_t corpus_seed = env_seed ^ 0xC2B2AE3D27D4EB4Full;
      const SpaceTimeCylinder q{0.0, nd, 0, 1.0};
      double vals[5] = {0, 0, 0, 0, 0};

      const TimeGrid ugrid{0.0, step, cfg.time_slices, false};
      for (int t = 0; t < cfg.corpus_size; ++t) {
        const auto st = static_cast<std::uint64_t>(t);
        if (want[0]) {
          vals[0] = std::max(vals[0], poincare_check(smooth_noise_field(lat, 0, nd, corpus_seed, 2 * st), lat, 0, nd).ratio);
          vals[0] = std::max(vals[0], poincare_check(spike_field(lat, 0, nd, corpus_seed, 2 * st + 1), lat, 0, nd).ratio);
        }
        if (want[1])
          for (CorpusKind kind : {CorpusKind::smooth_noise, CorpusKind::spike}) {
            const std::uint64_t stream = (1ull << 32) + 2 * st + (kind == CorpusKind::spike ? 1 : 0);
            const SpaceTimeField u = compact_spacetime_field(lat, ugrid, q, kind, corpus_seed, stream);
            vals[1] = std::max(vals[1], sobolev_check(u, omega, q, params.q, params.q_prime).ratio);
          }
      }

      if (want[2] || want[3]) {
        SolverOptions opt = cfg.solver;
        if (!model_is_static(cfg.model) && opt.dt == 0.0) opt.dt = -1.0;
        const CorrectorSolution sol = solve_corrector(omega, opt);
        const CutoffPair cut = build_cutoffs(0, params, nd, lat);
        for (int j = 0; j < cfg.dim; ++j) {
          const SpaceTimeField u = corrector_component(sol, j, -1.0 / nd, cfg.time_slices);
          if (want[2]) {
            EdgeField gf(sz(lat.num_edges()), 0.0);
            for (EdgeId e = 0; e < lat.num_edges(); ++e)
              if (lat.edge_dir(e) == j) gf[sz(e)] = 1.0 / nd;
            for (double alpha : {1.0, 2.0})
              vals[2] = std::max(vals[2], energy_estimate_check(u, omega, gf, cut, params.sigma, alpha, params.p,
                                                                params.p_prime, 1e-8)
                                              .constant);
          }
          if (want[3]) {
            vals[3] = std::max(vals[3], maximal_inequality_evaluate(u, omega, nd, params, 1.0).ratio);
            vals[4] = std::max(vals[4], maximal_inequality_evaluate(u, omega, nd, params, beta + 1.0).ratio);
          }
        }
      }
      for (std::size_t r = 0; r < rows.size(); ++r) rep.checks[r].per_seed[si][ni] = vals[rows[r]];
    }
  }
  rep.pass = true;
  for (auto& c : rep.checks) {
    for (const auto& row : c.per_seed)
      for (double v : row) c.finite = c.finite && std::isfinite(v) && v > 0.0;
    if (c.finite) c.trend = trend_test(rep.ns, c.per_seed, cfg.level);
    rep.pass = rep.pass && c.finite && c.trend.pass;
  }
  return rep;
}

}  // namespace rcm
