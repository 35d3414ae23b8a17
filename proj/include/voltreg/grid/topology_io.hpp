#pragma once

#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "voltreg/errors.hpp"
#include "voltreg/grid/network.hpp"
#include "voltreg/text.hpp"

// Topology file, version 1. One record per line, comma separated, `#` starts
// a comment:
//
//   version,1
//   base,<v_base_volt>,<s_base_va>
//   slack_voltage,<pu>            (optional, default 1.0)
//   node,<id>,slack|load
//   line,<from_id>,<to_id>,<r_ohm>,<x_ohm>
//
// The version record must come first.
namespace voltreg::grid {

inline constexpr int kTopologyVersion = 1;

inline Network parse_topology(std::istream& in) {
  std::vector<Node> nodes;
  std::vector<LineSpec> lines;
  BaseValues base;
  double slack_voltage = 1.0;
  bool have_version = false, have_base = false;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    if (text::trim(raw).empty()) continue;
    const auto f = text::split(raw);
    const std::string& kind = f[0];
    auto need = [&](std::size_t n) {
      if (f.size() != n)
        throw SchemaError("record '" + kind + "' expects " + std::to_string(n - 1) + " fields",
                          line_no);
    };
    if (!have_version) {
      if (kind != "version") throw SchemaError("first record must be 'version'", line_no);
      need(2);
      if (text::parse_int(f[1], line_no) != kTopologyVersion)
        throw SchemaError("unsupported topology version " + f[1], line_no);
      have_version = true;
    } else if (kind == "base") {
      need(3);
      base.v_base_volt = text::parse_double(f[1], line_no);
      base.s_base_va = text::parse_double(f[2], line_no);
      have_base = true;
    } else if (kind == "slack_voltage") {
      need(2);
      slack_voltage = text::parse_double(f[1], line_no);
    } else if (kind == "node") {
      need(3);
      NodeKind k;
      if (f[2] == "slack")
        k = NodeKind::slack;
      else if (f[2] == "load")
        k = NodeKind::load;
      else
        throw SchemaError("node type must be 'slack' or 'load'", line_no);
      nodes.push_back({f[1], k});
    } else if (kind == "line") {
      need(5);
      lines.push_back({f[1], f[2], text::parse_double(f[3], line_no),
                       text::parse_double(f[4], line_no)});
    } else {
      throw SchemaError("unknown record '" + kind + "'", line_no);
    }
  }
  if (!have_version) throw SchemaError("missing version record");
  if (!have_base) throw SchemaError("missing base record");
  return Network::build(std::move(nodes), lines, base, slack_voltage);
}

inline Network load_topology(const std::string& path) {
  std::istringstream in(text::read_file(path));
  return parse_topology(in);
}

}  // namespace voltreg::grid
