#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "rcm/lattice.hpp"
#include "rcm/numeric.hpp"

namespace rcmlab {

Section::Section(YAML::Node node, std::string path, json* effective)
    : node_(std::move(node)), path_(std::move(path)), eff_(effective),
      unknown_(std::make_shared<std::vector<std::string>>()) {
  if (!node_.IsMap()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected a mapping");
  if (eff_ && !eff_->is_object()) *eff_ = json::object();
}

std::string Section::name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

bool Section::has(const std::string& key) const { return static_cast<bool>(node_[key]); }

YAML::Node Section::node(const std::string& key, bool required) {
  used_.insert(key);
  YAML::Node n = node_[key];
  if (!n && required) throw ConfigError("missing required key " + name(key));
  return n;
}

namespace {

template <class T>
T scalar_as(const YAML::Node& n, const std::string& name, const char* what) {
  if (!n.IsScalar()) throw ConfigError(name + ": expected " + what);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(name + ": expected " + what);
  }
}

}  // namespace

double Section::number(const std::string& key) {
  const double v = scalar_as<double>(node(key, true), name(key), "a number");
  if (!std::isfinite(v)) throw ConfigError(name(key) + ": expected a finite number");
  if (eff_) (*eff_)[key] = v;
  return v;
}

double Section::number(const std::string& key, double fallback) {
  if (has(key)) return number(key);
  used_.insert(key);
  if (eff_) (*eff_)[key] = fallback;
  return fallback;
}

std::int64_t Section::integer(const std::string& key) {
  const auto v = scalar_as<long long>(node(key, true), name(key), "an integer");
  if (eff_) (*eff_)[key] = v;
  return v;
}

std::int64_t Section::integer(const std::string& key, std::int64_t fallback) {
  if (has(key)) return integer(key);
  used_.insert(key);
  if (eff_) (*eff_)[key] = fallback;
  return fallback;
}

bool Section::boolean(const std::string& key, bool fallback) {
  bool v = fallback;
  if (has(key)) v = scalar_as<bool>(node(key, true), name(key), "true or false");
  used_.insert(key);
  if (eff_) (*eff_)[key] = v;
  return v;
}

std::string Section::text(const std::string& key) {
  const auto v = scalar_as<std::string>(node(key, true), name(key), "a string");
  if (eff_) (*eff_)[key] = v;
  return v;
}

std::string Section::text(const std::string& key, const std::string& fallback) {
  if (has(key)) return text(key);
  used_.insert(key);
  if (eff_) (*eff_)[key] = fallback;
  return fallback;
}

std::vector<std::int64_t> Section::integers(const std::string& key) {
  const YAML::Node n = node(key, true);
  if (!n.IsSequence() || n.size() == 0) throw ConfigError(name(key) + ": expected a non-empty list of integers");
  std::vector<std::int64_t> out;
  for (const auto& e : n) out.push_back(scalar_as<long long>(e, name(key), "a list of integers"));
  if (eff_) (*eff_)[key] = out;
  return out;
}

std::vector<std::int64_t> Section::integers(const std::string& key, const std::vector<std::int64_t>& fallback) {
  if (has(key)) return integers(key);
  used_.insert(key);
  if (eff_) (*eff_)[key] = fallback;
  return fallback;
}

std::vector<double> Section::numbers(const std::string& key) {
  const YAML::Node n = node(key, true);
  if (!n.IsSequence() || n.size() == 0) throw ConfigError(name(key) + ": expected a non-empty list of numbers");
  std::vector<double> out;
  for (const auto& e : n) out.push_back(scalar_as<double>(e, name(key), "a list of numbers"));
  if (eff_) (*eff_)[key] = out;
  return out;
}

Section Section::child(const std::string& key) {
  const YAML::Node n = node(key, true);
  Section c(n, name(key), eff_ ? &(*eff_)[key] : nullptr);
  c.unknown_ = unknown_;
  c.root_ = false;
  return c;
}

void Section::finish() const {
  for (const auto& kv : node_) {
    const auto k = kv.first.as<std::string>();
    if (!used_.count(k)) unknown_->push_back(name(k));
  }
  if (!root_ || unknown_->empty()) return;
  std::string list;
  for (const auto& k : *unknown_) list += (list.empty() ? "" : ", ") + k;
  throw ConfigError("unknown config keys: " + list);
}

double exponent(Section& s, const std::string& key) {
  std::string raw;
  try {
    raw = s.text(key);
  } catch (const ConfigError&) {
    throw ConfigError(s.name(key) + ": expected a number or inf");
  }
  double v = 0.0;
  if (raw == "inf" || raw == ".inf") {
    v = rcm::kInf;
  } else {
    char* end = nullptr;
    v = std::strtod(raw.c_str(), &end);
    if (end == raw.c_str() || *end != '\0') throw ConfigError(s.name(key) + ": expected a number or inf");
  }
  if (!(v > 1.0)) throw ConfigError(s.name(key) + ": exponent must lie in (1, inf]");
  return v;
}

double exponent(Section& s, const std::string& key, double fallback) {
  if (s.has(key)) return exponent(s, key);
  (void)s.text(key, std::isinf(fallback) ? "inf" : std::to_string(fallback));
  return fallback;
}

rcm::Law parse_law(Section s) {
  const std::string type = s.text("type");
  rcm::Law law;
  if (type == "constant") {
    law = rcm::ConstantLaw{s.number("value")};
  } else if (type == "uniform") {
    law = rcm::UniformLaw{s.number("low"), s.number("high")};
  } else if (type == "two_point") {
    law = rcm::TwoPointLaw{s.number("low"), s.number("high"), s.number("p_low")};
  } else if (type == "pareto_mixture") {
    law = rcm::ParetoMixtureLaw{s.number("alpha_upper"), s.number("alpha_lower")};
  } else {
    throw ConfigError(s.name("type") + ": unknown law '" + type + "'");
  }
  s.finish();
  try {
    rcm::validate_law(law);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.name("type") + ": " + e.what());
  }
  return law;
}

rcm::EnvironmentModel parse_model(Section s) {
  const std::string type = s.text("type");
  rcm::EnvironmentModel m;
  if (type == "constant") {
    m = rcm::ConstantModel{s.number("c")};
  } else if (type == "static_ergodic") {
    m = rcm::StaticErgodicModel{parse_law(s.child("law"))};
  } else if (type == "product_separable") {
    m = rcm::ProductSeparableModel{parse_law(s.child("space_law")), parse_law(s.child("time_law"))};
  } else if (type == "time_refresh") {
    rcm::Law law = parse_law(s.child("law"));
    m = rcm::TimeRefreshModel{law, s.number("rate")};
  } else if (type == "heavy_tail") {
    m = rcm::HeavyTailModel{s.number("alpha_upper"), s.number("alpha_lower"), s.number("refresh_rate")};
  } else {
    throw ConfigError(s.name("type") + ": unknown model '" + type + "'");
  }
  s.finish();
  try {
    rcm::validate_model(m);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.name("type") + ": " + e.what());
  }
  return m;
}

rcm::SolverOptions parse_solver(Section s, double tol_override) {
  rcm::SolverOptions o;
  o.tol = s.number("tol", o.tol);
  if (tol_override > 0.0) o.tol = tol_override;
  o.max_iterations = static_cast<int>(s.integer("max_iterations", o.max_iterations));
  o.restart = static_cast<int>(s.integer("restart", o.restart));
  o.dt = s.number("dt", o.dt);
  o.memory_cap_bytes = s.number("memory_cap_bytes", o.memory_cap_bytes);
  o.warm_start = s.boolean("warm_start", o.warm_start);
  const std::string diff = s.text("time_difference", "forward");
  if (diff == "forward")
    o.time_difference = rcm::TimeDifference::forward;
  else if (diff == "centered")
    o.time_difference = rcm::TimeDifference::centered;
  else
    throw ConfigError(s.name("time_difference") + ": expected forward or centered");
  s.finish();
  if (!(o.tol > 0.0)) throw ConfigError(s.name("tol") + ": must be positive");
  if (o.max_iterations < 1) throw ConfigError(s.name("max_iterations") + ": must be >= 1");
  if (o.restart < 1) throw ConfigError(s.name("restart") + ": must be >= 1");
  return o;
}

rcm::MoserParams parse_moser(Section s, int dim) {
  rcm::MoserParams m;
  m.p = exponent(s, "p");
  m.p_prime = exponent(s, "p_prime");
  m.q = exponent(s, "q");
  m.q_prime = exponent(s, "q_prime");
  m.d = dim;
  m.d_prime = s.number("d_prime", dim);
  m.sigma = s.number("sigma", 1.0);
  m.sigma_prime = s.number("sigma_prime", 0.5);
  s.finish();
  if (m.d_prime < dim) throw ConfigError(s.name("d_prime") + ": must be >= lattice.dim");
  if (!(m.sigma_prime >= 0.5 && m.sigma_prime < m.sigma && m.sigma <= 1.0))
    throw ConfigError(s.name("sigma") + ": need 1/2 <= sigma_prime < sigma <= 1");
  return m;
}

LatticeSpec parse_lattice(Section s) {
  LatticeSpec l;
  const auto d = s.integer("dim");
  const auto L = s.integer("side");
  s.finish();
  if (d < 1 || d > rcm::kMaxDim) throw ConfigError(s.name("dim") + ": must lie in [1, 4]");
  if (L < 2) throw ConfigError(s.name("side") + ": must be >= 2");
  l.dim = static_cast<int>(d);
  l.side = static_cast<int>(L);
  return l;
}

TimeSpec parse_time(Section s) {
  TimeSpec t;
  t.horizon = s.number("horizon");
  t.dt = s.number("dt");
  s.finish();
  if (!(t.horizon > 0.0)) throw ConfigError(s.name("horizon") + ": must be positive");
  if (!(t.dt > 0.0)) throw ConfigError(s.name("dt") + ": must be positive");
  const double r = t.horizon / t.dt;
  const auto K = static_cast<std::int64_t>(std::llround(r));
  if (K < 1 || std::fabs(r - static_cast<double>(K)) > 1e-9 * r)
    throw ConfigError(s.name("horizon") + ": must be a whole multiple of dt");
  return t;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace rcmlab
