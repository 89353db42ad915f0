#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rcm/environment.hpp"
#include "rcm/lattice.hpp"
#include "rcm/linalg.hpp"
#include "rcm/stats.hpp"

namespace rcm {

enum class TimeDifference { forward, centered };

struct SolverOptions {
  double tol = 1e-10;           // max-abs residual of the discrete equation
  int max_iterations = 5000;    // Krylov iterations (outer for the periodic solver)
  int restart = 100;
  double dt = 0.0;              // solver step; must divide the field step; 0 = auto, < 0 = field step
  double memory_cap_bytes = 2e9;
  bool warm_start = true;       // periodic solver: start from the static corrector of the time mean
  TimeDifference time_difference = TimeDifference::forward;  // regularized solver
};

struct CorrectorSolution {
  SpaceTimeField chi;  // vertex field with d components on a periodic grid
  double residual = 0.0;
  double tol = 0.0;
  double beta = 0.0;
  int iterations = 0;
  std::string method;
  std::vector<double> gauge;  // mean removed per (slice, component) by the final projection
  double mass_drift = 0.0;    // max |mean of a slice| before projection

  const TorusLattice& lattice() const { return chi.lattice(); }
  const TimeGrid& grid() const { return chi.grid(); }
  int dim() const { return chi.components(); }
  // periodic in t, linear between grid points
  double chi_at(double t, Vertex x, int j) const;
  // Phi^j = Pi^j - chi^j on the lift
  double phi_at(double t, const Coord& lifted, int j) const;
};

// chi evaluator used by path checks: (t, x, j) -> chi^j(t, x)
using ChiFunction = std::function<double(double, Vertex, int)>;
ChiFunction chi_function(const CorrectorSolution& sol);

// div(w grad Pi^j)(x) = w(x - e_j, x) - w(x, x + e_j)
VertexField drift_divergence(const TorusLattice& lat, std::span<const double> omega, int j);

CorrectorSolution solve_static_corrector(const ConductanceField& omega, const SolverOptions& opt);
// time-periodic corrector by implicit stepping and shooting on the period map
CorrectorSolution solve_poisson_time_periodic(const ConductanceField& omega,
                                              const SolverOptions& opt);
// static solver for time-constant fields, periodic solver otherwise
CorrectorSolution solve_corrector(const ConductanceField& omega, const SolverOptions& opt);
CorrectorSolution solve_regularized(const ConductanceField& omega, double beta,
                                    const SolverOptions& opt);

// max over slices, sites and components of |(Phi_{k+1} - Phi_k)/dt + L_k Phi_k|
double harmonic_residual(const CorrectorSolution& sol, const ConductanceField& omega);

// solver step implied by opt for this field
double solver_step(const ConductanceField& omega, const SolverOptions& opt);

struct RegularizedEnergy {
  double dirichlet = 0.0;  // avg_{k,x} sum_{y~x} w (grad psi)^2
  double time_diff = 0.0;  // avg (D0 psi)^2
  double l2 = 0.0;         // avg psi^2
  double lhs = 0.0;        // dirichlet + beta (time_diff + l2)
  double mu_average = 0.0;
};
RegularizedEnergy regularized_energy(const CorrectorSolution& sol, const ConductanceField& omega,
                                     int j, TimeDifference diff = TimeDifference::forward);

// ---- path-level checks -----------------------------------------------------

// sum over edges of w (grad Phi^i)(grad Phi^j), times 2, averaged over sites and slices
Matrix covariance_estimate(const CorrectorSolution& sol, const ConductanceField& omega);

struct MartingaleOptions {
  std::int64_t n_paths = 10000;
  std::vector<double> t_grid;  // increasing, t_grid[0] is the start time
  Vertex start = 0;
  std::uint64_t seed = 1;
  double sigma_level = 3.0;    // mean increments within this many standard errors
  double qv_tolerance = 0.05;  // relative error of the ensemble-mean quadratic variation
  double chi_step = 0.0;       // breakpoints of chi in time (0 = none)
};

struct IncrementStat {
  int interval;
  int coord;
  double mean;
  double std_error;
  double z;
  bool pass;
};

struct QvStat {
  std::vector<double> direction;
  double empirical;
  double predicted;
  double relative_error;
  bool pass;
};

struct MartingaleReport {
  std::vector<IncrementStat> increments;
  std::vector<QvStat> qv;
  bool increments_pass = false;
  bool qv_pass = false;
  bool pass = false;
};

MartingaleReport martingale_check(const ChiFunction& chi, const ConductanceField& omega,
                                  const MartingaleOptions& opt);
MartingaleReport martingale_check(const CorrectorSolution& sol, const ConductanceField& omega,
                                  const MartingaleOptions& opt);

struct ControlReport {
  std::vector<double> values;  // per-path sup statistic, path order
  Quantiles quantiles;
};

// sup_{0<=t<=T} |chi(n^2 t, X_{n^2 t})| / n along walks started at (start_time, start)
ControlReport corrector_control(const CorrectorSolution& sol, const ConductanceField& omega, double n,
                                double T, std::int64_t n_paths, std::uint64_t seed,
                                double start_time = 0.0, Vertex start = 0);

// ---- sublinearity ------------------------------------------------------------

struct SublinearityConfig {
  EnvironmentModel model;
  int dim = 2;
  std::vector<int> n_list;
  std::vector<std::uint64_t> seeds;
  double env_dt = 1.0;      // time step of sampled dynamic fields
  int time_slices = 0;      // if > 0 the step is n^2 / time_slices instead of env_dt
  int side_factor = 4;      // L = side_factor * n
  SolverOptions solver;
  double max_cells = 5e8;   // cap on L^d * slices * d before a scale is skipped
};

struct SublinearityRow {
  int n;
  std::uint64_t seed;
  int side;
  double max_stat;  // max over Q(n) of |chi| / n
  double l1_stat;   // n^-3 int_0^{n^2} |B(n)|^-1 sum_B |chi| dt
  double residual;
  int iterations;
  std::string status;  // "ok" or "skipped: ..."
};

struct SublinearityTable {
  std::vector<SublinearityRow> rows;
  bool partial = false;
  // seed averages per n (same order as n_list; NaN when skipped)
  std::vector<double> mean_max_stat;
  std::vector<double> mean_l1_stat;
};

SublinearityTable sublinearity_profile(const SublinearityConfig& cfg);

// statistics of one solved instance on Q(n) = [0, n^2] x B(0, n)
void sublinearity_stats(const CorrectorSolution& sol, double n, double& max_stat, double& l1_stat);

}  // namespace rcm
