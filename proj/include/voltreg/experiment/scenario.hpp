#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "voltreg/assets/ess.hpp"
#include "voltreg/assets/profile.hpp"
#include "voltreg/grid/network.hpp"
#include "voltreg/grid/power_flow.hpp"
#include "voltreg/grid/timeseries.hpp"
#include "voltreg/thevenin/pipeline.hpp"

namespace voltreg::experiment {

// Residential peak demands for the fixture feeder. Chosen so that the
// evening peak pulls the far end of the R4 lateral under 0.95 p.u.
inline std::vector<assets::SyntheticLoad> cigre_residential_loads() {
  return {{"R11", 15e3, 0.0, 0.95}, {"R15", 52e3, 0.0, 0.95}, {"R16", 55e3, 0.0, 0.95},
          {"R17", 35e3, 0.0, 0.95}, {"R18", 47e3, 0.0, 0.95}, {"R7", 15e3, 0.0, 0.95},
          {"R9", 20e3, 0.0, 0.95},  {"R10", 15e3, 0.0, 0.95}, {"R14", 25e3, 0.0, 0.95}};
}

// Storage power per (step, storage index), watts, charging positive.
using ActionSchedule = std::function<double(std::size_t t, std::size_t k)>;

struct Recording {
  grid::VoltageTrace trace;
  std::map<std::size_t, thevenin::MeterSeries> meters;  // by node index
};

// Runs the power flow step by step with storage power applied at
// `ess_nodes` and records meter series at `meter_nodes`.
inline Recording record(const grid::Network& net, const assets::LoadProfile& prof,
                        const std::vector<std::size_t>& ess_nodes, const ActionSchedule& action,
                        const std::vector<std::size_t>& meter_nodes, double pf_ess = 1.0) {
  const auto binding = grid::bind_profile(net, prof);
  const double s_base = net.base().s_base_va;
  Recording rec;
  for (auto n : meter_nodes) rec.meters[n];
  for (std::size_t t = 0; t < prof.steps(); ++t) {
    auto inj = grid::demand_injections(net, prof, binding, t);
    for (std::size_t k = 0; k < ess_nodes.size(); ++k) {
      const double p = action ? action(t, k) : 0.0;
      inj[ess_nodes[k]].p_ess_w += p;
      inj[ess_nodes[k]].q_ess_var += grid::reactive_from_pf(p, pf_ess);
    }
    auto sol = grid::solve_sweep(net, inj);
    if (!sol.converged) throw NumericalFailure("power flow did not converge at step " + std::to_string(t));
    for (auto& [n, m] : rec.meters)
      m.push(sol.v[n], inj[n].p_demand_w / s_base, inj[n].q_demand_var / s_base, inj[n].p_ess_w / s_base,
             inj[n].q_ess_var / s_base);
    rec.trace.converged.push_back(true);
    rec.trace.v.push_back(std::move(sol.v));
  }
  return rec;
}

// Independent uniform storage actions in [p_min, p_max], for training data.
inline ActionSchedule random_actions(std::size_t n_ess, std::size_t steps, double p_min, double p_max,
                                     unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(p_min, p_max);
  auto table = std::make_shared<std::vector<double>>(n_ess * steps);
  for (auto& a : *table) a = u(rng);
  return [table, n_ess](std::size_t t, std::size_t k) { return (*table)[t * n_ess + k]; };
}

}  // namespace voltreg::experiment
