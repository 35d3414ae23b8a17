#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "voltreg/assets/profile.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/grid/network.hpp"
#include "voltreg/grid/power_flow.hpp"

namespace voltreg::grid {

// Network node index of every profile column.
inline std::vector<std::size_t> bind_profile(const Network& net, const assets::LoadProfile& prof) {
  std::vector<std::size_t> idx;
  for (const auto& id : prof.node_ids) {
    auto i = net.find(id);
    if (!i) throw ConfigError("profile node '" + id + "' is not in the network");
    if (*i == net.slack()) throw ConfigError("profile assigns load to the slack node '" + id + "'");
    idx.push_back(*i);
  }
  return idx;
}

// Demand-only injections at step t.
inline std::vector<NodeInjection> demand_injections(const Network& net, const assets::LoadProfile& prof,
                                                    std::span<const std::size_t> binding, std::size_t t) {
  std::vector<NodeInjection> inj(net.node_count());
  for (std::size_t k = 0; k < binding.size(); ++k) {
    inj[binding[k]].p_demand_w += prof.p_w[t][k];
    inj[binding[k]].q_demand_var += prof.q_var(t, k);
  }
  return inj;
}

// Per-step voltage magnitudes of every node.
struct VoltageTrace {
  std::vector<std::vector<double>> v;  // [t][node]
  std::vector<bool> converged;
};

// Uncontrolled run over the whole profile.
inline VoltageTrace simulate_baseline(const Network& net, const assets::LoadProfile& prof,
                                      SolverOptions opt = {}) {
  const auto binding = bind_profile(net, prof);
  VoltageTrace tr;
  for (std::size_t t = 0; t < prof.steps(); ++t) {
    const auto inj = demand_injections(net, prof, binding, t);
    auto sol = solve_sweep(net, inj, opt);
    tr.converged.push_back(sol.converged);
    tr.v.push_back(std::move(sol.v));
  }
  return tr;
}

}  // namespace voltreg::grid
