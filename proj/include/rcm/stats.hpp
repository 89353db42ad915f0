#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rcm {

// Small dense row-major matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c, double v = 0.0) : rows(r), cols(c), a(static_cast<std::size_t>(r * c), v) {}
  static Matrix identity(int n, double scale = 1.0);
  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i * cols + j)]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i * cols + j)]; }
};

Matrix operator-(const Matrix& x, const Matrix& y);
double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
bool is_symmetric(const Matrix& m, double tol);
// eigenvalues of a symmetric matrix, ascending (cyclic Jacobi)
std::vector<double> symmetric_eigenvalues(const Matrix& m);
// lower-triangular factor; throws unless positive definite
Matrix cholesky(const Matrix& m);

struct Quantiles {
  double min = 0, q10 = 0, q25 = 0, median = 0, q75 = 0, q90 = 0, max = 0, mean = 0;
};
// linear interpolation between order statistics
Quantiles quantiles(std::vector<double> v);
double quantile_sorted(const std::vector<double>& sorted, double q);

double mean(std::span<const double> v);
double sample_variance(std::span<const double> v);
// rows of `dim` values each
Matrix sample_covariance(std::span<const double> rows, int dim);

struct TestResult {
  std::string name;
  double statistic = 0.0;
  double p_value = 1.0;
  double level = 0.01;
  bool pass = true;  // p_value >= level
};

double normal_cdf(double x);
// P(sqrt(n) D_n > lambda) in the Kolmogorov limit
double kolmogorov_sf(double lambda);

// one-sample KS against a continuous cdf
TestResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf, double level);
// KS for data on the lattice h Z: the ECDF at each atom is compared with the cdf
// at the surrounding half-lattice points
TestResult ks_test_lattice(std::vector<double> x, double h,
                           const std::function<double(double)>& cdf, double level);

// Pearson chi-square; cells with expected count < min_expected are pooled with neighbours
TestResult chi_square_gof(std::span<const double> observed, std::span<const double> expected,
                          double level, double min_expected = 5.0);
double chi_square_sf(double stat, double df);

double poisson_pmf(std::int64_t k, double lambda);

// Two-sample energy-distance permutation test on points in R^dim. Duplicate
// points are merged into weighted atoms; if there are more than max_atoms
// atoms each sample is subsampled to max_atoms/2 points first.
TestResult energy_two_sample_test(std::span<const double> x, std::span<const double> y, int dim,
                                  int n_permutations, std::uint64_t seed, double level,
                                  int max_atoms = 2000);

// Trend of log(value) against log(n), one slope per seed; one-sided t-test for
// a positive mean slope. pass means no significant increase.
struct TrendResult {
  std::vector<double> slopes;
  double mean_slope = 0.0;
  double std_error = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;  // P(T >= t) under zero mean slope
  double level = 0.05;
  bool pass = true;
};
TrendResult trend_test(const std::vector<double>& ns, const std::vector<std::vector<double>>& per_seed,
                       double level);

}  // namespace rcm
