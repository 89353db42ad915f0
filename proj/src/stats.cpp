#include "rcm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "rcm/numeric.hpp"
#include "rcm/rng.hpp"

namespace rcm {

Matrix Matrix::identity(int n, double scale) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = scale;
  return m;
}

Matrix operator-(const Matrix& x, const Matrix& y) {
  if (x.rows != y.rows || x.cols != y.cols) throw std::invalid_argument("matrix shape mismatch");
  Matrix r = x;
  for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] -= y.a[i];
  return r;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (double v : m.a) s = std::max(s, std::fabs(v));
  return s;
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows != m.cols) return false;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < i; ++j)
      if (std::fabs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

std::vector<double> symmetric_eigenvalues(const Matrix& m) {
  if (m.rows != m.cols) throw std::invalid_argument("eigenvalues: matrix not square");
  const int n = m.rows;
  Matrix a = m;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) a(i, j) = a(j, i) = 0.5 * (m(i, j) + m(j, i));
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-300) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

Matrix cholesky(const Matrix& m) {
  if (m.rows != m.cols) throw std::invalid_argument("cholesky: matrix not square");
  const int n = m.rows;
  Matrix l(n, n);
  for (int j = 0; j < n; ++j) {
    double s = m(j, j);
    for (int k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (!(s > 0.0)) throw std::domain_error("cholesky: matrix not positive definite");
    l(j, j) = std::sqrt(s);
    for (int i = j + 1; i < n; ++i) {
      double t = m(i, j);
      for (int k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  return l;
}

double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) throw std::invalid_argument("quantile of empty sample");
  const double pos = q * static_cast<double>(s.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return s[lo] + w * (s[hi] - s[lo]);
}

Quantiles quantiles(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("quantiles of empty sample");
  std::sort(v.begin(), v.end());
  Quantiles q;
  q.min = v.front();
  q.max = v.back();
  q.q10 = quantile_sorted(v, 0.10);
  q.q25 = quantile_sorted(v, 0.25);
  q.median = quantile_sorted(v, 0.50);
  q.q75 = quantile_sorted(v, 0.75);
  q.q90 = quantile_sorted(v, 0.90);
  q.mean = mean(v);
  return q;
}

double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  NeumaierSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("variance needs two samples");
  const double m = mean(v);
  NeumaierSum s;
  for (double x : v) s.add((x - m) * (x - m));
  return s.value() / static_cast<double>(v.size() - 1);
}

Matrix sample_covariance(std::span<const double> rows, int dim) {
  if (dim <= 0 || rows.size() % static_cast<std::size_t>(dim) != 0)
    throw std::invalid_argument("sample_covariance: bad shape");
  const std::size_t n = rows.size() / static_cast<std::size_t>(dim);
  if (n < 2) throw std::invalid_argument("sample_covariance needs two rows");
  std::vector<double> m(static_cast<std::size_t>(dim), 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (int i = 0; i < dim; ++i) m[static_cast<std::size_t>(i)] += rows[r * dim + i];
  for (double& x : m) x /= static_cast<double>(n);
  Matrix c(dim, dim);
  for (std::size_t r = 0; r < n; ++r)
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        c(i, j) += (rows[r * dim + i] - m[static_cast<std::size_t>(i)]) *
                   (rows[r * dim + j] - m[static_cast<std::size_t>(j)]);
  for (double& x : c.a) x /= static_cast<double>(n - 1);
  return c;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.0) {
    // Jacobi theta form converges fast for small lambda
    const double pi = 3.14159265358979323846;
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double a = (2.0 * k - 1.0) * pi / lambda;
      s += std::exp(-a * a / 8.0);
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

namespace {

TestResult finish_ks(const char* name, double D, std::size_t n, double level) {
  TestResult r;
  r.name = name;
  r.statistic = D;
  const double sn = std::sqrt(static_cast<double>(n));
  // finite-n correction of the limiting law
  r.p_value = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * D);
  r.level = level;
  r.pass = r.p_value >= level;
  return r;
}

}  // namespace

TestResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf, double level) {
  if (x.empty()) throw std::invalid_argument("ks_test: empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double D = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    D = std::max({D, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return finish_ks("ks", D, x.size(), level);
}

TestResult ks_test_lattice(std::vector<double> x, double h, const std::function<double(double)>& cdf,
                           double level) {
  if (x.empty()) throw std::invalid_argument("ks_test_lattice: empty sample");
  if (!(h > 0.0)) throw std::invalid_argument("ks_test_lattice: spacing must be positive");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double D = 0.0;
  std::size_t i = 0;
  while (i < x.size()) {
    std::size_t j = i;
    while (j < x.size() && x[j] == x[i]) ++j;
    const double below = static_cast<double>(i) / n;
    const double upto = static_cast<double>(j) / n;
    D = std::max({D, std::fabs(upto - cdf(x[i] + 0.5 * h)), std::fabs(below - cdf(x[i] - 0.5 * h))});
    i = j;
  }
  return finish_ks("ks_lattice", D, x.size(), level);
}

double chi_square_sf(double stat, double df) {
  if (df <= 0) return 1.0;
  if (stat <= 0) return 1.0;
  return boost::math::gamma_q(df / 2.0, stat / 2.0);
}

TestResult chi_square_gof(std::span<const double> observed, std::span<const double> expected,
                          double level, double min_expected) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chi_square_gof: size mismatch");
  // pool adjacent cells left to right until each has enough expected mass
  std::vector<double> o, e;
  double ao = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    ao += observed[i];
    ae += expected[i];
    if (ae >= min_expected) {
      o.push_back(ao);
      e.push_back(ae);
      ao = ae = 0.0;
    }
  }
  if (ae > 0.0 || ao > 0.0) {
    if (e.empty()) {
      o.push_back(ao);
      e.push_back(ae);
    } else {
      o.back() += ao;
      e.back() += ae;
    }
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (e[i] <= 0.0) {
      if (o[i] > 0.0) stat = kInf;
      continue;
    }
    stat += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
  }
  TestResult r;
  r.name = "chi_square";
  r.statistic = stat;
  r.p_value = std::isinf(stat) ? 0.0 : chi_square_sf(stat, static_cast<double>(o.size()) - 1.0);
  r.level = level;
  r.pass = r.p_value >= level;
  return r;
}

double poisson_pmf(std::int64_t k, double lambda) {
  if (k < 0) return 0.0;
  if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
  const double kd = static_cast<double>(k);
  return std::exp(kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0));
}

namespace {

struct Atoms {
  std::vector<std::vector<double>> points;
  std::vector<int> label;  // atom index per pooled point
};

Atoms make_atoms(std::span<const double> x, std::span<const double> y, int dim) {
  std::map<std::vector<double>, int> index;
  Atoms a;
  auto add = [&](std::span<const double> s) {
    for (std::size_t r = 0; r * dim < s.size(); ++r) {
      std::vector<double> p(s.begin() + static_cast<std::ptrdiff_t>(r * dim),
                            s.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
      auto [it, fresh] = index.emplace(p, static_cast<int>(a.points.size()));
      if (fresh) a.points.push_back(std::move(p));
      a.label.push_back(it->second);
    }
  };
  add(x);
  add(y);
  return a;
}

std::vector<double> subsample(std::span<const double> s, int dim, std::size_t keep, CounterRng& rng) {
  const std::size_t n = s.size() / static_cast<std::size_t>(dim);
  if (n <= keep) return {s.begin(), s.end()};
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < keep; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::vector<double> out;
  out.reserve(keep * static_cast<std::size_t>(dim));
  for (std::size_t i : idx)
    for (int c = 0; c < dim; ++c) out.push_back(s[i * dim + c]);
  return out;
}

}  // namespace

TestResult energy_two_sample_test(std::span<const double> x, std::span<const double> y, int dim,
                                  int n_permutations, std::uint64_t seed, double level,
                                  int max_atoms) {
  if (dim <= 0 || x.size() % dim != 0 || y.size() % dim != 0 || x.empty() || y.empty())
    throw std::invalid_argument("energy test: bad sample shape");
  CounterRng sub_rng(seed, StreamTag::permutation, ~0ull);
  std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  Atoms atoms = make_atoms(xs, ys, dim);
  if (atoms.points.size() > static_cast<std::size_t>(max_atoms)) {
    const std::size_t keep = static_cast<std::size_t>(max_atoms / 2);
    xs = subsample(x, dim, keep, sub_rng);
    ys = subsample(y, dim, keep, sub_rng);
    atoms = make_atoms(xs, ys, dim);
  }
  const std::size_t nx = xs.size() / dim, ny = ys.size() / dim;
  const std::size_t m = atoms.points.size();
  std::vector<double> D(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (int c = 0; c < dim; ++c) {
        const double d = atoms.points[i][c] - atoms.points[j][c];
        s += d * d;
      }
      D[i * m + j] = std::sqrt(s);
    }
  std::vector<double> total(m, 0.0);
  for (int l : atoms.label) total[static_cast<std::size_t>(l)] += 1.0;
  std::vector<double> Dt(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) Dt[i] += D[i * m + j] * total[j];
  const double fx = static_cast<double>(nx), fy = static_cast<double>(ny);
  std::vector<double> cx(m), Dcx(m);
  auto statistic = [&](const std::vector<int>& labels) {
    std::fill(cx.begin(), cx.end(), 0.0);
    for (std::size_t i = 0; i < nx; ++i) cx[static_cast<std::size_t>(labels[i])] += 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += D[i * m + j] * cx[j];
      Dcx[i] = s;
    }
    // cy = total - cx
    double xx = 0.0, xy = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double cy = total[i] - cx[i];
      const double Dcy = Dt[i] - Dcx[i];
      xx += cx[i] * Dcx[i];
      xy += cy * Dcx[i];
      yy += cy * Dcy;
    }
    const double e = 2.0 * xy / (fx * fy) - xx / (fx * fx) - yy / (fy * fy);
    return fx * fy / (fx + fy) * e;
  };
  const double observed = statistic(atoms.label);
  std::vector<int> perm = atoms.label;
  int exceed = 0;
  for (int p = 0; p < n_permutations; ++p) {
    CounterRng rng(seed, StreamTag::permutation, static_cast<std::uint64_t>(p));
    perm = atoms.label;
    for (std::size_t i = 0; i < nx; ++i) std::swap(perm[i], perm[i + rng.below(perm.size() - i)]);
    if (statistic(perm) >= observed) ++exceed;
  }
  TestResult r;
  r.name = "energy";
  r.statistic = observed;
  r.p_value = (1.0 + exceed) / (1.0 + n_permutations);
  r.level = level;
  r.pass = r.p_value >= level;
  return r;
}

TrendResult trend_test(const std::vector<double>& ns, const std::vector<std::vector<double>>& per_seed,
                       double level) {
  if (ns.size() < 2) throw std::invalid_argument("trend_test needs two scales");
  if (per_seed.size() < 2) throw std::invalid_argument("trend_test needs two seeds");
  TrendResult tr;
  tr.level = level;
  std::vector<double> lx(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) lx[i] = std::log(ns[i]);
  const double mx = mean(lx);
  double sxx = 0.0;
  for (double v : lx) sxx += (v - mx) * (v - mx);
  for (const auto& vals : per_seed) {
    if (vals.size() != ns.size()) throw std::invalid_argument("trend_test: ragged input");
    std::vector<double> ly(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (!(vals[i] > 0.0)) throw std::invalid_argument("trend_test: values must be positive");
      ly[i] = std::log(vals[i]);
    }
    const double my = mean(ly);
    double sxy = 0.0;
    for (std::size_t i = 0; i < ly.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my);
    tr.slopes.push_back(sxy / sxx);
  }
  tr.mean_slope = mean(tr.slopes);
  const double var = sample_variance(tr.slopes);
  tr.std_error = std::sqrt(var / static_cast<double>(tr.slopes.size()));
  const double df = static_cast<double>(tr.slopes.size() - 1);
  if (tr.std_error == 0.0) {
    tr.t_statistic = tr.mean_slope > 0 ? kInf : (tr.mean_slope < 0 ? -kInf : 0.0);
    tr.p_value = tr.mean_slope > 0 ? 0.0 : 1.0;
  } else {
    tr.t_statistic = tr.mean_slope / tr.std_error;
    boost::math::students_t dist(df);
    tr.p_value = boost::math::cdf(boost::math::complement(dist, tr.t_statistic));
  }
  tr.pass = tr.p_value >= level;
  return tr;
}

}  // namespace rcm
