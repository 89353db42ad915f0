#pragma once

#include <iosfwd>
#include <string>

#include "rcm/lattice.hpp"

namespace rcm {

// Binary layout: "RCMF" tag, u32 version, i32 d, L, kind, components, periodic,
// f64 start, step, i64 count, then count blocks of slice_size() doubles
// (row-major over sites, components innermost). Little-endian host order.
void write_field_binary(std::ostream& os, const SpaceTimeField& f);
SpaceTimeField read_field_binary(std::istream& is);

// CSV layout: one "# rcm-field key=value ..." header line, a column header,
// then one row per (time index, site) in storage order.
void write_field_csv(std::ostream& os, const SpaceTimeField& f);
SpaceTimeField read_field_csv(std::istream& is);

void save_field(const std::string& path, const SpaceTimeField& f);
SpaceTimeField load_field(const std::string& path);

}  // namespace rcm
