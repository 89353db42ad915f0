#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>

#include "rcm/lattice.hpp"
#include "rcm/rng.hpp"

namespace rcm {

// ---- single-edge laws -------------------------------------------------------

struct ConstantLaw {
  double value = 1.0;
};
struct UniformLaw {
  double low = 1.0;
  double high = 2.0;
};
struct TwoPointLaw {
  double low = 1.0;
  double high = 2.0;
  double p_low = 0.5;
};
// With probability 1/2 a Pareto(alpha_upper) value on [1, inf), otherwise the
// reciprocal of a Pareto(alpha_lower) value. E[w^p] < inf iff p < alpha_upper,
// E[w^-q] < inf iff q < alpha_lower.
struct ParetoMixtureLaw {
  double alpha_upper = 4.0;
  double alpha_lower = 4.0;
};

using Law = std::variant<ConstantLaw, UniformLaw, TwoPointLaw, ParetoMixtureLaw>;

double sample_law(const Law& law, CounterRng& rng);
double law_mean(const Law& law);
void validate_law(const Law& law);
std::string law_name(const Law& law);

// ---- environment models ---------------------------------------------------

struct ConstantModel {
  double c = 1.0;
};
struct StaticErgodicModel {
  Law law;
};
// w_k(e) = f(e) g(k): f iid over edges, g iid over time intervals
struct ProductSeparableModel {
  Law space_law;
  Law time_law;
};
// each edge resampled from law at rate `rate`, discretised to the grid
struct TimeRefreshModel {
  Law law;
  double rate = 1.0;
};
struct HeavyTailModel {
  double alpha_upper = 4.0;
  double alpha_lower = 4.0;
  double refresh_rate = 0.0;  // 0 gives a static field
};

using EnvironmentModel = std::variant<ConstantModel, StaticErgodicModel, ProductSeparableModel,
                                      TimeRefreshModel, HeavyTailModel>;

std::string model_name(const EnvironmentModel& m);
bool model_is_static(const EnvironmentModel& m);
void validate_model(const EnvironmentModel& m);

struct TailFiniteness {
  bool omega_p_finite;     // E[w^p] < inf
  bool omega_inv_q_finite; // E[w^-q] < inf
};
TailFiniteness moments_finite(const EnvironmentModel& m, double p, double q);

// ---- conductance field ----------------------------------------------------

// Positive weights per (time interval, edge) on a uniform grid. Time-constant
// fields keep a single stored slice shared by every interval.
class ConductanceField {
 public:
  ConductanceField() = default;
  // values: one slice per grid interval, or a single slice for a static field
  ConductanceField(TorusLattice lattice, TimeGrid grid, std::vector<double> values);
  static ConductanceField constant(const TorusLattice& lattice, const TimeGrid& grid, double c);
  static ConductanceField from_field(const SpaceTimeField& f);

  const TorusLattice& lattice() const { return lattice_; }
  const TimeGrid& grid() const { return grid_; }
  bool periodic() const { return grid_.periodic; }
  bool time_constant() const { return time_constant_; }
  std::int64_t stored_slices() const { return stored_; }

  // k is an unwrapped interval index
  std::span<const double> slice(std::int64_t k) const {
    const std::size_t s = time_constant_ ? 0 : static_cast<std::size_t>(grid_.wrap(k));
    const std::size_t e = static_cast<std::size_t>(lattice_.num_edges());
    return {values_.data() + s * e, e};
  }
  double omega(std::int64_t k, EdgeId e) const { return slice(k)[static_cast<std::size_t>(e)]; }
  // total jump rate at x in interval k
  double mu(std::int64_t k, Vertex x) const;
  double max_mu() const;

  SpaceTimeField to_field() const;
  const std::vector<double>& stored_values() const { return values_; }

 private:
  TorusLattice lattice_;
  TimeGrid grid_;
  std::vector<double> values_;
  std::int64_t stored_ = 0;
  bool time_constant_ = true;
};

ConductanceField sample_environment(const EnvironmentModel& model, const TorusLattice& lattice,
                                    double horizon, double dt, std::uint64_t seed);

// (tau_{s,z} w)_t(x, y) = w_{t+s}(x+z, y+z); s must be a multiple of dt
ConductanceField shift(const ConductanceField& omega, double s, const Coord& z);

// ---- moment conditions -----------------------------------------------------

struct MomentExponents {
  double p = 2.0;
  double p_prime = 2.0;
  double q = 2.0;
  double q_prime = 2.0;
  int d = 2;
};

struct MomentCheck {
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs
  bool remark_applicable = false;  // p = p' and q = q'
  double remark_lhs = 0.0;
  bool remark_holds = false;
};

MomentCheck moment_condition_check(const MomentExponents& e);

struct MomentNorms {
  double mu_norm;
  double nu_norm;
};
// unfloored mu, nu norms over the cylinder
MomentNorms empirical_moment_norms(const ConductanceField& omega, const MomentExponents& e,
                                   const SpaceTimeCylinder& q);
// floored variants used by the Moser chain
MomentNorms floored_moment_norms(const ConductanceField& omega, double p, double p_prime,
                                 double q, double q_prime, const SpaceTimeCylinder& cyl);

// ---- ergodic averages ------------------------------------------------------

// phi(tau_{t_k, x} w) evaluated directly on w at interval k and site x
using LocalFunctional = std::function<double(const ConductanceField&, std::int64_t k, Vertex x)>;

LocalFunctional conductance_functional(int dir);
LocalFunctional mu_functional();
LocalFunctional constant_functional(double c);

// (1/n^2) int_0^{n^2} |B(n)|^{-1} sum_{x in B(n)} phi(tau_{t,x} w) dt, time measured from the grid start
double ergodic_average(const LocalFunctional& phi, const ConductanceField& omega, double n);

}  // namespace rcm
