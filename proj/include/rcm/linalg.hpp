#pragma once

#include <functional>
#include <span>
#include <vector>

namespace rcm {

// y = A x
using LinearOp = std::function<void(std::span<const double> x, std::span<double> y)>;

struct KrylovOptions {
  double abs_tol = 1e-12;  // stop when max |b - A x| <= abs_tol
  int max_iterations = 10000;
  int restart = 60;           // GMRES cycle length
  bool project_mean = false;  // work on the zero-mean subspace (singular Laplacians)
};

struct KrylovResult {
  int iterations = 0;
  double residual = 0.0;  // max-abs true residual at exit
  bool converged = false;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a);
void remove_mean(std::span<double> a);

// Jacobi-preconditioned conjugate gradients for symmetric positive (semi)definite A.
// x holds the initial guess on entry.
KrylovResult pcg(const LinearOp& A, std::span<const double> diag, std::span<const double> b,
                 std::span<double> x, const KrylovOptions& opt);

// Restarted GMRES with modified Gram-Schmidt and optional right Jacobi
// preconditioner (empty diag = none). x holds the initial guess on entry.
KrylovResult gmres(const LinearOp& A, std::span<const double> diag, std::span<const double> b,
                   std::span<double> x, const KrylovOptions& opt);

}  // namespace rcm
