#include "rcm/field_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace rcm {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'M', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("field file truncated");
  return v;
}

std::string fmt(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_field_binary(std::ostream& os, const SpaceTimeField& f) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::int32_t>(os, f.lattice().dim());
  put<std::int32_t>(os, f.lattice().side());
  put<std::int32_t>(os, f.kind() == FieldKind::vertex ? 0 : 1);
  put<std::int32_t>(os, f.components());
  put<std::int32_t>(os, f.grid().periodic ? 1 : 0);
  put<double>(os, f.grid().start);
  put<double>(os, f.grid().step);
  put<std::int64_t>(os, f.grid().count);
  os.write(reinterpret_cast<const char*>(f.values().data()),
           static_cast<std::streamsize>(f.values().size() * sizeof(double)));
}

SpaceTimeField read_field_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a field file");
  if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported field file version");
  const int d = get<std::int32_t>(is);
  const int L = get<std::int32_t>(is);
  const int kind = get<std::int32_t>(is);
  const int comps = get<std::int32_t>(is);
  TimeGrid g;
  g.periodic = get<std::int32_t>(is) != 0;
  g.start = get<double>(is);
  g.step = get<double>(is);
  g.count = get<std::int64_t>(is);
  SpaceTimeField f(TorusLattice(d, L), g, kind == 0 ? FieldKind::vertex : FieldKind::edge, comps);
  is.read(reinterpret_cast<char*>(f.values().data()),
          static_cast<std::streamsize>(f.values().size() * sizeof(double)));
  if (!is) throw std::runtime_error("field file truncated");
  return f;
}

void write_field_csv(std::ostream& os, const SpaceTimeField& f) {
  os << "# rcm-field d=" << f.lattice().dim() << " L=" << f.lattice().side()
     << " kind=" << (f.kind() == FieldKind::vertex ? "vertex" : "edge")
     << " components=" << f.components() << " start=" << fmt(f.grid().start)
     << " step=" << fmt(f.grid().step) << " count=" << f.grid().count
     << " periodic=" << (f.grid().periodic ? 1 : 0) << '\n';
  os << "k,site";
  for (int c = 0; c < f.components(); ++c) os << ",c" << c;
  os << '\n';
  for (std::int64_t k = 0; k < f.grid().count; ++k)
    for (std::int64_t s = 0; s < f.sites(); ++s) {
      os << k << ',' << s;
      for (int c = 0; c < f.components(); ++c) os << ',' << fmt(f.at(k, s, c));
      os << '\n';
    }
}

SpaceTimeField read_field_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# rcm-field", 0) != 0)
    throw std::runtime_error("missing rcm-field header");
  std::map<std::string, std::string> kv;
  std::istringstream hs(line.substr(11));
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad header token: " + tok);
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"d", "L", "kind", "components", "start", "step", "count", "periodic"})
    if (!kv.count(key)) throw std::runtime_error(std::string("header lacks ") + key);
  TimeGrid g;
  g.start = std::stod(kv["start"]);
  g.step = std::stod(kv["step"]);
  g.count = std::stoll(kv["count"]);
  g.periodic = kv["periodic"] == "1";
  const FieldKind kind = kv["kind"] == "vertex" ? FieldKind::vertex : FieldKind::edge;
  SpaceTimeField f(TorusLattice(std::stoi(kv["d"]), std::stoi(kv["L"])), g, kind,
                   std::stoi(kv["components"]));
  std::getline(is, line);  // column header
  for (std::int64_t k = 0; k < g.count; ++k)
    for (std::int64_t s = 0; s < f.sites(); ++s) {
      if (!std::getline(is, line)) throw std::runtime_error("field CSV truncated");
      std::istringstream ls(line);
      std::string cell;
      std::getline(ls, cell, ',');
      std::getline(ls, cell, ',');
      for (int c = 0; c < f.components(); ++c) {
        if (!std::getline(ls, cell, ',')) throw std::runtime_error("field CSV row too short");
        f.at(k, s, c) = std::stod(cell);
      }
    }
  return f;
}

void save_field(const std::string& path, const SpaceTimeField& f) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  std::ofstream os(path, csv ? std::ios::out : std::ios::out | std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  if (csv)
    write_field_csv(os, f);
  else
    write_field_binary(os, f);
}

SpaceTimeField load_field(const std::string& path) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  std::ifstream is(path, csv ? std::ios::in : std::ios::in | std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return csv ? read_field_csv(is) : read_field_binary(is);
}

}  // namespace rcm
