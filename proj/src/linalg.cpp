#include "rcm/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace rcm {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

void remove_mean(std::span<double> a) {
  if (a.empty()) return;
  double s = 0.0;
  for (double v : a) s += v;
  const double m = s / static_cast<double>(a.size());
  for (double& v : a) v -= m;
}

namespace {

void true_residual(const LinearOp& A, std::span<const double> b, std::span<const double> x,
                   std::vector<double>& r, std::vector<double>& tmp, bool project) {
  A(x, tmp);
  for (std::size_t i = 0; i < b.size(); ++i) r[i] = b[i] - tmp[i];
  if (project) remove_mean(r);
}

}  // namespace

KrylovResult pcg(const LinearOp& A, std::span<const double> diag, std::span<const double> b,
                 std::span<double> x, const KrylovOptions& opt) {
  const std::size_t n = b.size();
  std::vector<double> r(n), z(n), p(n), q(n), tmp(n);
  KrylovResult res;
  if (opt.project_mean) remove_mean(x);
  true_residual(A, b, x, r, tmp, opt.project_mean);
  res.residual = norm_inf(r);
  // outer loop restarts from the true residual when the recurrence drifts
  while (res.residual > opt.abs_tol && res.iterations < opt.max_iterations) {
    for (std::size_t i = 0; i < n; ++i) z[i] = diag.empty() ? r[i] : r[i] / diag[i];
    if (opt.project_mean) remove_mean(z);
    p = z;
    double rz = dot(r, z);
    const int start = res.iterations;
    while (res.iterations < opt.max_iterations) {
      A(p, q);
      if (opt.project_mean) remove_mean(q);
      const double pq = dot(p, q);
      if (!(pq > 0.0)) break;
      const double a = rz / pq;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += a * p[i];
        r[i] -= a * q[i];
      }
      ++res.iterations;
      if (norm_inf(r) <= 0.5 * opt.abs_tol) break;
      for (std::size_t i = 0; i < n; ++i) z[i] = diag.empty() ? r[i] : r[i] / diag[i];
      if (opt.project_mean) remove_mean(z);
      const double rz_new = dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    if (opt.project_mean) remove_mean(x);
    true_residual(A, b, x, r, tmp, opt.project_mean);
    const double prev = res.residual;
    res.residual = norm_inf(r);
    // no progress in a whole sweep: rounding floor reached
    if (res.iterations == start || res.residual >= prev) break;
  }
  res.converged = res.residual <= opt.abs_tol;
  return res;
}

KrylovResult gmres(const LinearOp& A, std::span<const double> diag, std::span<const double> b,
                   std::span<double> x, const KrylovOptions& opt) {
  const std::size_t n = b.size();
  const int m = std::max(1, opt.restart);
  std::vector<std::vector<double>> V(static_cast<std::size_t>(m + 1), std::vector<double>(n));
  std::vector<double> H(static_cast<std::size_t>((m + 1) * m));
  std::vector<double> cs(static_cast<std::size_t>(m)), sn(static_cast<std::size_t>(m)),
      g(static_cast<std::size_t>(m + 1)), y(static_cast<std::size_t>(m));
  std::vector<double> r(n), w(n), tmp(n);
  auto h = [&](int i, int j) -> double& { return H[static_cast<std::size_t>(i * m + j)]; };
  auto precond = [&](std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = diag.empty() ? in[i] : in[i] / diag[i];
    if (opt.project_mean) remove_mean(out);
  };

  KrylovResult res;
  if (opt.project_mean) remove_mean(x);
  true_residual(A, b, x, r, tmp, opt.project_mean);
  res.residual = norm_inf(r);
  int stalls = 0;
  while (res.residual > opt.abs_tol && res.iterations < opt.max_iterations) {
    const double beta = norm2(r);
    if (beta == 0.0) break;
    for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    // the 2-norm bounds the max norm, so this target is sufficient
    const double target = 0.5 * opt.abs_tol;
    int j = 0;
    for (; j < m && res.iterations < opt.max_iterations; ++j) {
      precond(V[static_cast<std::size_t>(j)], tmp);
      A(tmp, w);
      if (opt.project_mean) remove_mean(w);
      for (int i = 0; i <= j; ++i) {
        h(i, j) = dot(w, V[static_cast<std::size_t>(i)]);
        for (std::size_t k = 0; k < n; ++k) w[k] -= h(i, j) * V[static_cast<std::size_t>(i)][k];
      }
      h(j + 1, j) = norm2(w);
      if (h(j + 1, j) > 0.0)
        for (std::size_t k = 0; k < n; ++k) V[static_cast<std::size_t>(j + 1)][k] = w[k] / h(j + 1, j);
      for (int i = 0; i < j; ++i) {
        const double a = h(i, j), c = h(i + 1, j);
        h(i, j) = cs[static_cast<std::size_t>(i)] * a + sn[static_cast<std::size_t>(i)] * c;
        h(i + 1, j) = -sn[static_cast<std::size_t>(i)] * a + cs[static_cast<std::size_t>(i)] * c;
      }
      const double den = std::hypot(h(j, j), h(j + 1, j));
      cs[static_cast<std::size_t>(j)] = den == 0.0 ? 1.0 : h(j, j) / den;
      sn[static_cast<std::size_t>(j)] = den == 0.0 ? 0.0 : h(j + 1, j) / den;
      h(j, j) = den;
      h(j + 1, j) = 0.0;
      g[static_cast<std::size_t>(j + 1)] = -sn[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>(j)];
      g[static_cast<std::size_t>(j)] *= cs[static_cast<std::size_t>(j)];
      ++res.iterations;
      if (std::fabs(g[static_cast<std::size_t>(j + 1)]) <= target || den == 0.0) {
        ++j;
        break;
      }
    }
    // back substitution and update
    for (int i = j - 1; i >= 0; --i) {
      double s = g[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < j; ++k) s -= h(i, k) * y[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(i)] = h(i, i) == 0.0 ? 0.0 : s / h(i, i);
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (int i = 0; i < j; ++i)
      for (std::size_t k = 0; k < n; ++k) w[k] += y[static_cast<std::size_t>(i)] * V[static_cast<std::size_t>(i)][k];
    precond(w, tmp);
    for (std::size_t k = 0; k < n; ++k) x[k] += tmp[k];
    if (opt.project_mean) remove_mean(x);
    const double prev = res.residual;
    true_residual(A, b, x, r, tmp, opt.project_mean);
    res.residual = norm_inf(r);
    if (res.residual >= 0.999 * prev && ++stalls >= 3) break;
  }
  res.converged = res.residual <= opt.abs_tol;
  return res;
}

}  // namespace rcm
