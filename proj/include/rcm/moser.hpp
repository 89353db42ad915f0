#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcm/corrector.hpp"
#include "rcm/environment.hpp"
#include "rcm/lattice.hpp"
#include "rcm/stats.hpp"

namespace rcm {

struct MoserParams {
  double p = 8.0;
  double p_prime = 8.0;
  double q = 8.0;
  double q_prime = 8.0;
  double d_prime = 2.0;
  int d = 2;
  double sigma = 1.0;
  double sigma_prime = 0.5;
};

// d' / (d' - 2 + d'/q)
double rho(double d_prime, double q);

struct IterationConstants {
  double rho = 0.0;
  double p_star = 0.0;
  double p_star_prime = 0.0;
  double alpha = 0.0;
  double condition_lhs = 0.0;  // left side of the exponent condition
  double condition_rhs = 0.0;  // 2/d'
  int k_stop = 0;              // first k with alpha^k >= ln n
  std::vector<double> alpha_k;  // k = 0 .. k_stop + 1
  std::vector<double> sigma_k;
  std::vector<double> tau_k;
  double kappa = 0.0;           // (1/2) sum_{k>=0} alpha^-k
  double kappa_partial = 0.0;   // sum to k_stop
  double gamma = 0.0;           // prod_{k>=1} (1 - alpha^-k)
  double gamma_partial = 0.0;   // product to k_stop
  double beta_threshold = 0.0;  // 2 rho max(1, p'_* / p_*)
  bool alpha_p_star_le_rho = false;
  bool alpha_p_star_prime_gt = false;
};

IterationConstants iteration_constants(const MoserParams& params, double n);
// partial sum (1/2) sum_{k<terms} alpha^-k
double kappa_partial_sum(double alpha, int terms);

// |a|^alpha sign(a)
double tilde_pow(double a, double alpha);
// tilde_pow(a, alpha) - tilde_pow(b, alpha) without cancellation for close a, b
double tilde_pow_diff(double a, double b, double alpha);

struct AppendixStat {
  std::string name;
  std::int64_t trials = 0;
  std::int64_t violations = 0;
  double max_ratio = 0.0;               // max lhs/rhs
  std::int64_t literal_violations = 0;  // printed form without the absolute value (diagnostic)
};

struct AppendixReport {
  std::vector<AppendixStat> items;
  bool pass = false;
};

AppendixReport appendix_inequality_suite(std::int64_t trials, std::uint64_t seed);

// ---- cutoffs -------------------------------------------------------------------

struct CutoffPair {
  int k = 0;
  double n = 1.0;
  Vertex x0 = 0;
  double t0 = 0.0;
  std::int64_t outer_radius = 0;  // floor(sigma_k n)
  std::int64_t inner_radius = 0;  // floor(sigma_{k+1} n)
  double tau_n = 0.0;             // tau_k n
  VertexField eta;
  double ramp_start = 0.0;  // t0 + sigma_{k+1} n^2
  double ramp_end = 0.0;    // t0 + sigma_k n^2

  double zeta(double t) const;
  double zeta_slope() const { return 1.0 / (ramp_end - ramp_start); }
  SpaceTimeCylinder cylinder(double sigma_k) const { return {t0, n, x0, sigma_k}; }
};

CutoffPair build_cutoffs(int k, const MoserParams& params, double n, const TorusLattice& lat,
                         Vertex x0 = 0, double t0 = 0.0);

struct CutoffCheck {
  bool support = false;       // eta = 0 outside B_k
  bool inner_one = false;     // eta = 1 on B_{k+1}
  bool boundary_zero = false; // eta = 0 on the inner boundary of B_k
  bool gradient = false;      // max |grad eta| <= 1/(tau_k n)
  bool zeta_ok = false;       // zeta = 1 on I_{k+1}, 0 after the ramp, slope bound
  double max_gradient = 0.0;
  bool all() const { return support && inner_one && boundary_zero && gradient && zeta_ok; }
};
CutoffCheck check_cutoffs(const CutoffPair& c, const MoserParams& params, const TorusLattice& lat);

// points of B with a neighbour outside B
std::vector<Vertex> inner_boundary(const TorusLattice& lat, const std::vector<Vertex>& ball);

// ---- inequality checks ------------------------------------------------------------

struct CheckResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;  // lhs / rhs, 0 when both vanish
};

CheckResult poincare_check(std::span<const double> u, const TorusLattice& lat, Vertex center, double n);

// u must vanish outside the cylinder's ball, on its inner boundary and outside its time span
CheckResult sobolev_check(const SpaceTimeField& u, const ConductanceField& omega,
                          const SpaceTimeCylinder& q_cyl, double q, double q_prime);

struct InterpolationResult {
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};
// gamma2 solving the interpolation condition for given rho, q', gamma1
double interpolation_gamma2(double rho, double q_prime, double gamma1);
InterpolationResult interpolation_check(const SpaceTimeField& u, double rho, double q_prime,
                                        double gamma1, double gamma2, const SpaceTimeCylinder& q_cyl);

struct InterpolationSuite {
  std::int64_t instances = 0;
  std::int64_t violations = 0;
  double max_ratio = 0.0;  // max lhs / rhs
  bool pass = false;
};
// random fields, cylinders and admissible (rho, q', gamma1) on a d = 2 torus
InterpolationSuite interpolation_suite(std::int64_t instances, std::uint64_t seed);

struct EnergyResult {
  double lhs_sup = 0.0;     // (1/|I|) max_t zeta avg (eta u~^a)^2
  double lhs_energy = 0.0;  // (1/|I|) int zeta E_{t,eta^2}(u~^a)/|B|
  double rhs_cutoff = 0.0;  // mu-norm (|grad eta|^2 + |zeta'|) || |u|^{2a} ||
  double rhs_cross = 0.0;   // mu-norm |grad eta grad f| || |u|^{2a-1} ||
  double rhs_drift = 0.0;   // mu-norm |grad f|^2 || |u|^{2a-2} ||
  double equation_residual = 0.0;
  double constant = 0.0;    // smallest C_2 making the inequality hold
  double lhs() const { return lhs_sup + lhs_energy; }
  double rhs() const { return rhs_cutoff + rhs_cross + rhs_drift; }
};

// u solves (u_{k+1} - u_k)/dt + L_k u_k = div(w_k grad f) on the cutoff cylinder; throws otherwise
EnergyResult energy_estimate_check(const SpaceTimeField& u, const ConductanceField& omega,
                                   std::span<const double> grad_f, const CutoffPair& cut,
                                   double sigma_k, double alpha, double p, double p_prime,
                                   double tol = 1e-8);

// Backward implicit solve of (u_{k+1} - u_k)/dt + L_k u_k = div(w_k grad f) on
// [t_start, t_start + steps dt] from terminal data; the result has steps + 1 slices.
SpaceTimeField solve_backward_poisson(const ConductanceField& omega, std::span<const double> grad_f,
                                      std::span<const double> terminal, double t_start, double dt,
                                      std::int64_t steps, double tol = 1e-12);

// scale * chi^j on a grid with the given slices per period (static solutions are copied per slice)
SpaceTimeField corrector_component(const CorrectorSolution& sol, int j, double scale,
                                   std::int64_t slices_if_static);

struct MaximalResult {
  double lhs = 0.0;         // max over Q(sigma' n) of |u|
  double rhs = 0.0;         // (|1 v mu| |1 v nu| / (sigma - sigma')^2)^kappa ||u||^gamma
  double ratio = 0.0;
  double mu_norm = 0.0;
  double nu_norm = 0.0;
  double u_norm = 0.0;      // ||u||_{a,a,Q(sigma n)}
  double kappa = 0.0;
  double gamma = 0.0;
  // iteration chain per instance: ||u||_{2 a_k p_*, 2 a_k p'_*, Q(sigma_k n)} and the
  // exponent gamma_k it selects (1 when the norm is >= 1, else 1 - 1/a_k)
  std::vector<double> chain_norms;
  std::vector<double> chain_gamma;
};

MaximalResult maximal_inequality_evaluate(const SpaceTimeField& u, const ConductanceField& omega,
                                          double n, const MoserParams& params, double alpha_norm);
// solves the corrector and evaluates u = -chi^j / n on Q(n) at the origin
MaximalResult maximal_inequality_check(const ConductanceField& omega, double n, const MoserParams& params,
                                       double alpha_norm, const SolverOptions& opt = {}, int j = 0);

// ---- corpora -------------------------------------------------------------------------

// Gaussian noise on the interior of B(center, r), smoothed twice by the lazy unit-weight
// averaging step and cut back to the interior.
VertexField smooth_noise_field(const TorusLattice& lat, Vertex center, double r, std::uint64_t seed,
                               std::uint64_t stream);
// (floor(r) - dist)_+
VertexField tent_field(const TorusLattice& lat, Vertex center, double r);
// a few random interior sites with random signed magnitudes
VertexField spike_field(const TorusLattice& lat, Vertex center, double r, std::uint64_t seed,
                        std::uint64_t stream);

enum class CorpusKind { smooth_noise, tent, spike };

// Space-time test function on `grid`: zero outside the cylinder and on the inner boundary
// of its ball. Noise is drawn afresh per slice, a spike lives on one random slice, the tent
// is constant in time.
SpaceTimeField compact_spacetime_field(const TorusLattice& lat, const TimeGrid& grid,
                                       const SpaceTimeCylinder& cyl, CorpusKind kind,
                                       std::uint64_t seed, std::uint64_t stream);

// ---- empirical-constant trends ---------------------------------------------------------

struct ConstantTrendConfig {
  EnvironmentModel model;
  int dim = 2;
  std::vector<int> n_list{8, 16, 32};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int corpus_size = 20;   // per kind and instance
  int side_factor = 4;    // L = side_factor * n
  int time_slices = 16;   // field and test-function slices per n^2
  MoserParams params;
  SolverOptions solver;
  double level = 0.05;
  // any of "poincare", "sobolev", "energy", "maximal" (the last gives two rows)
  std::vector<std::string> checks{"poincare", "sobolev", "energy", "maximal"};
};

struct ConstantTrend {
  std::string check;
  std::vector<std::vector<double>> per_seed;  // [seed][n index]
  bool finite = true;
  TrendResult trend;
};

struct ConstantTrendReport {
  std::string model;
  std::vector<double> ns;
  std::vector<ConstantTrend> checks;
  bool pass = false;
};

// Poincare, Sobolev, energy (alpha in {1, 2}) and maximal (alpha_norm 1 and beta + 1)
// constants per seed and scale, with one trend test per check.
ConstantTrendReport moser_constant_trends(const ConstantTrendConfig& cfg);

}  // namespace rcm
