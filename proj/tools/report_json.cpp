#include "report_json.hpp"

#include <cmath>

namespace rcmlab {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

namespace {

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

}  // namespace

json to_json(const rcm::Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols; ++j) row.push_back(num(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

json to_json(const rcm::Quantiles& q) {
  return {{"min", num(q.min)},       {"q10", num(q.q10)}, {"q25", num(q.q25)}, {"median", num(q.median)},
          {"q75", num(q.q75)},       {"q90", num(q.q90)}, {"max", num(q.max)}, {"mean", num(q.mean)}};
}

json to_json(const rcm::TestResult& t) {
  return {{"name", t.name}, {"statistic", num(t.statistic)}, {"p_value", num(t.p_value)}, {"level", num(t.level)},
          {"pass", t.pass}};
}

json to_json(const rcm::TrendResult& t) {
  return {{"slopes", nums(t.slopes)},       {"mean_slope", num(t.mean_slope)}, {"std_error", num(t.std_error)},
          {"t_statistic", num(t.t_statistic)}, {"p_value", num(t.p_value)},  {"level", num(t.level)},
          {"pass", t.pass}};
}

json to_json(const rcm::MomentCheck& m) {
  return {{"holds", m.holds},
          {"lhs", num(m.lhs)},
          {"rhs", num(m.rhs)},
          {"margin", num(m.margin)},
          {"remark_applicable", m.remark_applicable},
          {"remark_lhs", num(m.remark_lhs)},
          {"remark_holds", m.remark_holds}};
}

json to_json(const rcm::AppendixReport& r) {
  json items = json::array();
  for (const auto& s : r.items)
    items.push_back({{"name", s.name},
                     {"trials", s.trials},
                     {"violations", s.violations},
                     {"max_ratio", num(s.max_ratio)},
                     {"literal_violations", s.literal_violations}});
  return {{"items", items}, {"pass", r.pass}};
}

json to_json(const rcm::InterpolationSuite& s) {
  return {{"instances", s.instances}, {"violations", s.violations}, {"max_ratio", num(s.max_ratio)}, {"pass", s.pass}};
}

json to_json(const rcm::ConstantTrendReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    json per_seed = json::array();
    for (const auto& row : c.per_seed) per_seed.push_back(nums(row));
    checks.push_back({{"check", c.check}, {"per_seed", per_seed}, {"finite", c.finite}, {"trend", to_json(c.trend)}});
  }
  return {{"model", r.model}, {"n", nums(r.ns)}, {"checks", checks}, {"pass", r.pass}};
}

json to_json(const rcm::SublinearityTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"n", r.n},
                    {"seed", r.seed},
                    {"side", r.side},
                    {"max_stat", num(r.max_stat)},
                    {"l1_stat", num(r.l1_stat)},
                    {"residual", num(r.residual)},
                    {"iterations", r.iterations},
                    {"status", r.status}});
  return {{"rows", rows},
          {"partial", t.partial},
          {"mean_max_stat", nums(t.mean_max_stat)},
          {"mean_l1_stat", nums(t.mean_l1_stat)}};
}

json to_json(const rcm::QfcltReport& r) {
  json scales = json::array();
  for (const auto& s : r.scales) {
    json ks = json::array();
    for (const auto& t : s.ks) ks.push_back(to_json(t));
    json fn = json::array();
    for (const auto& f : s.functionals)
      fn.push_back({{"name", f.name},
                    {"empirical", num(f.empirical)},
                    {"std_error", num(f.std_error)},
                    {"gaussian", num(f.gaussian)}});
    json js = {{"n", s.n},
               {"covariance", to_json(s.covariance)},
               {"eigenvalues", nums(s.eigenvalues)},
               {"psd", s.psd},
               {"ks", ks},
               {"joint", to_json(s.joint)},
               {"increments", to_json(s.increments)},
               {"covariance_error", num(s.covariance_error)},
               {"covariance_pass", s.covariance_pass},
               {"functionals", fn},
               {"pass", s.pass}};
    js["control"] = s.has_control ? to_json(s.control) : json(nullptr);
    scales.push_back(js);
  }
  json cons = json::array();
  for (const auto& c : r.consistency)
    cons.push_back({{"n_small", c.n_small},
                    {"n_large", c.n_large},
                    {"max_z", num(c.max_z)},
                    {"threshold", num(c.threshold)},
                    {"pass", c.pass}});
  return {{"model", r.model},
          {"seed", r.seed},
          {"dim", r.dim},
          {"side", r.side},
          {"formula_covariance", to_json(r.formula_covariance)},
          {"formula_eigenvalues", nums(r.formula_eigenvalues)},
          {"formula_min_eigenvalue", num(r.formula_min_eigenvalue)},
          {"corrector_residual", num(r.corrector_residual)},
          {"reference", to_json(r.reference)},
          {"reference_kind", r.reference_kind},
          {"scales", scales},
          {"consistency", cons},
          {"partial", r.partial},
          {"notes", r.notes},
          {"pass", r.pass}};
}

json to_json(const rcm::EnvironmentProcessReport& r) {
  return {{"times", nums(r.times)},
          {"means", nums(r.means)},
          {"std_errors", nums(r.std_errors)},
          {"stationary", nums(r.stationary)},
          {"max_pair_z", num(r.max_pair_z)},
          {"max_stationary_z", num(r.max_stationary_z)},
          {"sigma_level", num(r.sigma_level)},
          {"pass", r.pass}};
}

}  // namespace rcmlab
