#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gridstep/network.hpp"

namespace gridstep {

/// Reads the MATPOWER case subset: `baseMVA`, `bus`, `gen`, `branch` and optional `gencost`
/// (polynomial model only). Values are converted to per-unit on baseMVA. Anything else in
/// the file is skipped and reported through `warnings`.
///
/// Element ids: buses keep their case ids; branches and generators are numbered by row
/// (1-based); each bus with non-zero Pd/Qd gets one load whose id equals the bus id.
///
/// Throws ParseError (line/column of the offending token), StructuralError (a required
/// matrix is missing or too narrow) or ValidationError (duplicate bus id).
Network parse_case(std::string_view text, std::vector<std::string>* warnings = nullptr);

Network load_case_file(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Writes a MATPOWER case at full precision. Loads are folded into Pd/Qd, so parsing the
/// output back yields the same network when every load scale is 1.
std::string write_case(const Network& net);

/// Native JSON mirror of Network (per-unit, ids preserved); schema in docs/formats.md.
std::string network_to_json(const Network& net);
Network network_from_json(std::string_view text);

/// Chooses the reader from the extension: `.json` for the mirror, anything else as MATPOWER.
Network load_network(const std::string& path, std::vector<std::string>* warnings = nullptr);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace gridstep
