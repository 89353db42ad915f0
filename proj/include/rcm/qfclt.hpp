#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcm/corrector.hpp"
#include "rcm/environment.hpp"
#include "rcm/stats.hpp"

namespace rcm {

struct ExperimentConfig {
  EnvironmentModel model;
  std::uint64_t seed = 1;
  int dim = 2;
  int side = 128;                 // L
  double env_dt = 1.0;            // field step of dynamic models
  std::vector<int> n_list{16, 32};
  std::int64_t walkers = 10000;
  double T = 1.0;                 // horizon multiplier: walks run to T n^2
  double level = 0.01;            // family level, Bonferroni-split across coordinates and scales
  int permutations = 200;         // energy-distance tests
  bool formula = true;            // solve the corrector for the formula covariance and control
  std::int64_t control_paths = 1000;
  double covariance_tolerance = 0.10;   // relative Frobenius, empirical vs reference
  bool reference_identity = false;      // compare with 2 c I (constant model) instead of the formula
  SolverOptions solver;
  double max_cells = 5e8;         // corrector cap on L^d * slices * d
};

// throws std::invalid_argument naming the offending field
void validate_experiment(const ExperimentConfig& cfg);

struct FunctionalStat {
  std::string name;
  double empirical = 0.0;
  double std_error = 0.0;
  double gaussian = 0.0;  // value under N(0, T Sigma_ref)
};

struct ScaleReport {
  int n = 0;
  Matrix covariance;              // empirical Cov(X^(n)_T) / T
  std::vector<double> eigenvalues;
  bool psd = false;
  std::vector<TestResult> ks;     // one per coordinate, lattice corrected, vs fitted normal
  TestResult joint;               // energy distance vs lattice-rounded Gaussian at t = T
  TestResult increments;          // joint increments over [0, T/4], [T/4, T/2], [T/2, T]
  double covariance_error = 0.0;  // relative Frobenius vs the reference (NaN without one)
  bool covariance_pass = true;
  Quantiles control;              // sup |chi| / n along paths
  bool has_control = false;
  std::vector<FunctionalStat> functionals;
  bool pass = false;
};

struct ScaleConsistency {
  int n_small = 0;
  int n_large = 0;
  double max_z = 0.0;      // max over entries of |S_small - S_large| / SE
  double threshold = 0.0;
  bool pass = false;
};

struct QfcltReport {
  std::string model;
  std::uint64_t seed = 0;
  int dim = 2;
  int side = 0;
  Matrix formula_covariance;      // empty without a solved corrector
  std::vector<double> formula_eigenvalues;
  double formula_min_eigenvalue = 0.0;
  double corrector_residual = 0.0;
  Matrix reference;               // matrix the empirical covariances are compared with
  std::string reference_kind;     // "formula", "identity" or "none"
  std::vector<ScaleReport> scales;
  std::vector<ScaleConsistency> consistency;
  bool partial = false;
  std::vector<std::string> notes;
  bool pass = false;
};

QfcltReport run_qfclt(const ExperimentConfig& cfg);

struct EnvironmentProcessReport {
  std::vector<double> times;
  std::vector<double> means;
  std::vector<double> std_errors;
  std::vector<double> stationary;  // spatial average of phi at each time (exact stationary value)
  double max_pair_z = 0.0;         // max |m_a - m_b| / sqrt(se_a^2 + se_b^2), diagnostic
  double max_stationary_z = 0.0;   // max |m_t - stationary_t| / se_t
  double sigma_level = 3.0;
  bool pass = false;
};

// walkers from the uniform law at the grid start; phi(tau_{t, X_t} w) averaged per time and
// compared with the spatial average at that time, which the uniform law keeps invariant
EnvironmentProcessReport environment_process_check(const ConductanceField& omega, std::int64_t n_paths,
                                                   const std::vector<double>& t_list,
                                                   const LocalFunctional& phi, std::uint64_t seed,
                                                   double sigma_level = 3.0);

}  // namespace rcm
