#pragma once

#include <random>
#include <string>
#include <vector>

#include "voltreg/grid/network.hpp"
#include "voltreg/grid/power_flow.hpp"
#include "voltreg/grid/topology_io.hpp"

namespace testsupport {

inline std::string source_path(const std::string& rel) { return std::string(VOLTREG_SOURCE_DIR) + "/" + rel; }

inline voltreg::grid::Network cigre() {
  return voltreg::grid::load_topology(source_path("data/cigre_lv_residential.topo"));
}

inline voltreg::grid::Network two_bus(double r_ohm, double x_ohm, double slack_v = 1.0) {
  using namespace voltreg::grid;
  return Network::build({{"S", NodeKind::slack}, {"L", NodeKind::load}}, {{"S", "L", r_ohm, x_ohm}}, {},
                        slack_v);
}

// Random per-node demand in [-pv, peak] watts with pf in [0.85, 1] and an
// occasional ESS term.
inline std::vector<voltreg::grid::NodeInjection> random_injections(const voltreg::grid::Network& net,
                                                                   std::mt19937_64& rng,
                                                                   double peak_w = 40e3,
                                                                   double export_w = 10e3) {
  std::uniform_real_distribution<double> p(-export_w, peak_w), pf(0.85, 1.0), ess(-30e3, 30e3),
      coin(0.0, 1.0);
  std::vector<voltreg::grid::NodeInjection> inj(net.node_count());
  for (std::size_t i = 0; i < inj.size(); ++i) {
    if (i == net.slack()) continue;
    const double pd = p(rng);
    const double e = coin(rng) < 0.3 ? ess(rng) : 0.0;
    inj[i] = voltreg::grid::ess_injection(pd, voltreg::grid::reactive_from_pf(pd, pf(rng)), e);
  }
  return inj;
}

}  // namespace testsupport
