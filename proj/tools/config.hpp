#pragma once

#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "rcm/corrector.hpp"
#include "rcm/environment.hpp"
#include "rcm/moser.hpp"
#include "rcm/qfclt.hpp"

namespace rcmlab {

using nlohmann::json;

// Usage or configuration problem; maps to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strict view of a YAML mapping. Every key read is recorded; finish() collects the rest and
// the root section's finish() reports all of them. Values read are echoed into `effective`.
class Section {
 public:
  Section(YAML::Node node, std::string path, json* effective);

  bool has(const std::string& key) const;
  double number(const std::string& key);  // required
  double number(const std::string& key, double fallback);
  std::int64_t integer(const std::string& key);
  std::int64_t integer(const std::string& key, std::int64_t fallback);
  bool boolean(const std::string& key, bool fallback);
  std::string text(const std::string& key);
  std::string text(const std::string& key, const std::string& fallback);
  std::vector<std::int64_t> integers(const std::string& key);
  std::vector<std::int64_t> integers(const std::string& key, const std::vector<std::int64_t>& fallback);
  std::vector<double> numbers(const std::string& key);
  Section child(const std::string& key);  // required mapping
  // records keys never read; on the root section throws if any were recorded anywhere
  void finish() const;
  std::string name(const std::string& key) const;  // dotted path of a key
  json* effective() { return eff_; }

 private:
  YAML::Node node(const std::string& key, bool required);
  YAML::Node node_;
  std::string path_;
  json* eff_;
  std::set<std::string> used_;
  std::shared_ptr<std::vector<std::string>> unknown_;
  bool root_ = true;
};

// exponent: number > 1 or the string "inf"
double exponent(Section& s, const std::string& key);
double exponent(Section& s, const std::string& key, double fallback);

rcm::Law parse_law(Section s);
rcm::EnvironmentModel parse_model(Section s);
rcm::SolverOptions parse_solver(Section s, double tol_override);
rcm::MoserParams parse_moser(Section s, int dim);

struct LatticeSpec {
  int dim = 2;
  int side = 0;
};
LatticeSpec parse_lattice(Section s);

struct TimeSpec {
  double horizon = 0.0;
  double dt = 0.0;
};
TimeSpec parse_time(Section s);

// FNV-1a 64-bit
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace rcmlab
