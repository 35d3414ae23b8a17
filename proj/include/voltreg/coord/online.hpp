#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "voltreg/assets/ess.hpp"
#include "voltreg/assets/profile.hpp"
#include "voltreg/coord/coordinate.hpp"
#include "voltreg/coord/surrogate.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/grid/network.hpp"
#include "voltreg/grid/power_flow.hpp"
#include "voltreg/grid/timeseries.hpp"
#include "voltreg/text.hpp"
#include "voltreg/thevenin/pipeline.hpp"

namespace voltreg::coord {

// Estimated voltage of the agent's own node if it applies `a_w` this step.
using LocalEstimator = std::function<double(double a_w)>;

// Intended action (watt) from the local state [P^D_t, SOC_t, V~_t, V_{t-1},
// V_{t-2}, P^D_{t-1}, P^D_{t-2}] and the node's own estimator.
using AgentPolicy = std::function<double(std::span<const double> state, const LocalEstimator& estimate)>;

struct OnlineAgent {
  assets::EssSpec spec;
  thevenin::LocalPipeline pipeline;
  AgentPolicy policy;
};

// Agent that only knows its own node: charges as hard as its own estimate
// allows while the idle voltage is comfortable, discharges at full power
// when it is low.
struct ThresholdRule {
  double v_charge = 0.97;
  double v_floor = 0.955;
  double v_discharge = 0.96;
  double p_min_w = -60e3;
  double p_max_w = 60e3;

  AgentPolicy policy() const {
    const ThresholdRule r = *this;
    return [r](std::span<const double> s, const LocalEstimator& est) {
      const double v0 = s[2];
      if (v0 < r.v_discharge) return r.p_min_w;
      if (v0 <= r.v_charge) return 0.0;
      if (est(r.p_max_w) >= r.v_floor) return r.p_max_w;
      if (est(0.0) < r.v_floor) return 0.0;
      double lo = 0.0, hi = r.p_max_w;
      for (int i = 0; i < 40; ++i) {
        const double mid = 0.5 * (lo + hi);
        (est(mid) >= r.v_floor ? lo : hi) = mid;
      }
      return lo;
    };
  }
};

// Agent driven by its own demand, averaged over the last three steps:
// charges in the valley and discharges at the peak. Thresholds are per unit
// like the state.
struct DemandRule {
  double charge_below = 0.0;
  double discharge_above = 1.0;
  double p_charge_w = 35e3;
  double p_discharge_w = 60e3;

  AgentPolicy policy() const {
    const DemandRule r = *this;
    return [r](std::span<const double> s, const LocalEstimator&) {
      const double pd = (s[0] + s[5] + s[6]) / 3.0;
      if (pd <= r.charge_below) return r.p_charge_w;
      if (pd >= r.discharge_above) return -r.p_discharge_w;
      return 0.0;
    };
  }
};

enum class OnlineMode { uncoordinated, coordinated };

struct OnlineConfig {
  OnlineMode mode = OnlineMode::coordinated;
  CoordinationConfig coord;
  std::vector<std::vector<std::size_t>> neighborhoods;  // agent indices
  bool pre_adjust = true;
  bool distributed = false;  // every member solves its neighbourhood problem
  double soc_init = 0.5;
  double dither_w = 0.0;  // uniform perturbation of intended actions, for logging runs
  unsigned long long seed = 1;
  grid::SolverOptions pf;
};

struct OnlineRow {
  std::size_t t = 0;
  std::string node;
  double a_intended = 0.0, a_tilde = 0.0, a_star = 0.0, a_applied = 0.0;
  double v_true = 0.0, v_tilde = 0.0, v0 = 0.0, soc = 0.0;
  double a_ref = 0.0, v_ref = 0.0;  // last applied action and the estimate under it
  bool violation = false, infeasible = false;
};

struct OnlineResult {
  std::vector<OnlineRow> rows;  // step-major, agents in input order
  std::vector<std::string> agent_nodes;
  std::vector<std::size_t> violation_steps;  // per agent node
  double max_violation = 0.0;                // p.u. beyond the band at agent nodes
  std::size_t infeasible_steps = 0;          // neighbourhood rounds left in violation
  grid::VoltageTrace trace;
  std::vector<thevenin::MeterSeries> meters;  // per agent, including the priming steps

  std::size_t total_violation_steps() const {
    std::size_t s = 0;
    for (auto v : violation_steps) s += v;
    return s;
  }
  const OnlineRow& row(std::size_t step, std::size_t agent) const {
    return rows.at(step * agent_nodes.size() + agent);
  }
  std::size_t steps() const { return agent_nodes.empty() ? 0 : rows.size() / agent_nodes.size(); }
};

namespace detail {

inline double outside(double v, double lo, double hi) {
  if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
  return std::max({0.0, lo - v, v - hi});
}

}  // namespace detail

// Shrinks an action towards zero in 10 % steps while the predicted voltage is
// outside the band and worse than with the storage idle.
inline double pre_adjust(double a_w, const LocalEstimator& est, double v_min, double v_max) {
  const double idle = detail::outside(est(0.0), v_min, v_max);
  for (int k = 10; k > 0; --k) {
    const double a = a_w * k / 10.0;
    const double ex = detail::outside(est(a), v_min, v_max);
    if (ex <= 0.0 || ex <= idle) return a;
  }
  return 0.0;
}

inline void validate_online(const grid::Network& net, const std::vector<OnlineAgent>& agents,
                            const std::vector<SensitivitySurrogate>& surrogates, const OnlineConfig& cfg) {
  cfg.coord.validate();
  std::vector<int> seen(agents.size(), 0);
  for (const auto& a : agents) {
    a.spec.validate();
    if (!net.find(a.spec.node)) throw ConfigError("storage node '" + a.spec.node + "' is not in the network");
    if (!a.policy) throw ConfigError("agent at " + a.spec.node + " has no policy");
  }
  for (const auto& h : cfg.neighborhoods)
    for (auto j : h) {
      if (j >= agents.size()) throw ConfigError("neighbourhood refers to a missing agent");
      ++seen[j];
    }
  if (cfg.mode == OnlineMode::coordinated) {
    for (std::size_t j = 0; j < agents.size(); ++j)
      if (seen[j] != 1) throw ConfigError("agent at " + agents[j].spec.node + " must belong to exactly one neighbourhood");
    if (surrogates.size() != cfg.neighborhoods.size())
      throw ConfigError("one fitted surrogate is needed per neighbourhood");
    for (std::size_t h = 0; h < surrogates.size(); ++h)
      if (surrogates[h].members() != cfg.neighborhoods[h].size())
        throw DimensionMismatch("surrogate does not match its neighbourhood");
  }
}

// Deploys the agents over steps [first, first + count) of the profile. Each
// agent sees only its own meter; the power flow provides the meter readings
// and the evaluation truth. Meter trackers are primed with up to two idle
// steps before `first`.
inline OnlineResult run_online(const grid::Network& net, const assets::LoadProfile& prof,
                               const std::vector<OnlineAgent>& agents,
                               const std::vector<SensitivitySurrogate>& surrogates, const OnlineConfig& cfg,
                               std::size_t first, std::size_t count) {
  validate_online(net, agents, surrogates, cfg);
  if (first + count > prof.steps()) throw ConfigError("online horizon exceeds the profile");
  const bool coordinated = cfg.mode == OnlineMode::coordinated;
  const double beta = coordinated ? cfg.coord.beta : 1.0;
  const double sb = net.base().s_base_va;
  const std::size_t n = agents.size();
  const auto binding = grid::bind_profile(net, prof);

  std::vector<std::size_t> node(n);
  std::vector<assets::EssSpec> spec(n);
  std::vector<assets::EssState> soc(n);
  std::vector<thevenin::LocalTracker> tr(n);
  std::vector<thevenin::MeterSeries> meter(n);
  std::vector<double> held(n, 1.0), last_applied(n, 0.0);
  OnlineResult out;
  for (std::size_t i = 0; i < n; ++i) {
    node[i] = *net.find(agents[i].spec.node);
    spec[i] = agents[i].spec.with_energy_scale(coordinated ? beta : 1.0);
    soc[i].soc = std::clamp(cfg.soc_init, spec[i].soc_min, spec[i].soc_max);
    out.agent_nodes.push_back(agents[i].spec.node);
  }
  out.violation_steps.assign(n, 0);

  auto record_meters = [&](const std::vector<grid::NodeInjection>& inj, const grid::PowerFlowSolution& sol) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& x = inj[node[i]];
      meter[i].push(sol.v[node[i]], x.p_demand_w / sb, x.q_demand_var / sb, x.p_ess_w / sb, x.q_ess_var / sb);
      tr[i].push(meter[i].sample(meter[i].size() - 1));
    }
  };

  for (std::size_t s = first >= 2 ? first - 2 : 0; s < first; ++s) {
    const auto inj = grid::demand_injections(net, prof, binding, s);
    const auto sol = grid::solve_sweep(net, inj, cfg.pf);
    if (!sol.converged) throw NumericalFailure("power flow did not converge at step " + std::to_string(s));
    record_meters(inj, sol);
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dither(-1.0, 1.0);
  const double lo_band = cfg.coord.v_min, hi_band = cfg.coord.v_max;

  for (std::size_t t = first; t < first + count; ++t) {
    auto inj = grid::demand_injections(net, prof, binding, t);
    std::vector<double> pd(n), qd(n), a_int(n), a_til(n), a_star(n), v0(n), v_ref(n), v_est(n);
    std::vector<bool> infeasible(n, false);
    std::vector<LocalEstimator> est(n);
    for (std::size_t i = 0; i < n; ++i) {
      pd[i] = inj[node[i]].p_demand_w / sb;
      qd[i] = inj[node[i]].q_demand_var / sb;
      tr[i].last_v_adj = held[i];
      const auto* pl = &agents[i].pipeline;
      const auto* tri = &tr[i];
      const double pf = spec[i].pf, pdi = pd[i], qdi = qd[i];
      est[i] = [pl, tri, pf, pdi, qdi, sb](double a_w) {
        return thevenin::estimate_local_voltage(*pl, *tri, a_w / sb, pdi, qdi,
                                                grid::reactive_from_pf(a_w, pf) / sb)
            .v_tilde;
      };
      v0[i] = est[i](0.0);
      v_ref[i] = est[i](last_applied[i]);
      double a = 0.0;
      if (tr[i].ready()) {
        const auto& m = meter[i];
        const std::size_t k = m.size();
        const std::vector<double> state{pd[i], soc[i].soc, v0[i], m.v[k - 1], m.v[k - 2], m.pd[k - 1], m.pd[k - 2]};
        a = agents[i].policy(state, est[i]);
        if (!std::isfinite(a)) a = 0.0;
        if (cfg.dither_w > 0.0) a += cfg.dither_w * dither(rng);
        a = std::clamp(a, spec[i].p_min_w, spec[i].p_max_w);
        if (coordinated && cfg.pre_adjust) a = pre_adjust(a, est[i], lo_band, hi_band);
      }
      a_int[i] = a;
      a_til[i] = coordinated ? a * beta : a;
      a_star[i] = a_til[i];
    }

    if (coordinated) {
      for (std::size_t h = 0; h < cfg.neighborhoods.size(); ++h) {
        const auto& mem = cfg.neighborhoods[h];
        std::vector<AgentReport> rep(mem.size());
        for (std::size_t k = 0; k < mem.size(); ++k) {
          const std::size_t i = mem[k];
          const auto win = assets::admissible_power(spec[i], soc[i]);
          rep[k].node = spec[i].node;
          rep[k].a_w = a_til[i];
          rep[k].v_est = est[i](a_til[i]);
          rep[k].v0 = v_ref[i];
          rep[k].a_ref_w = last_applied[i];
          rep[k].p_min_w = spec[i].p_min_w;
          rep[k].p_max_w = spec[i].p_max_w;
          rep[k].head_lo_w = win.lo;
          rep[k].head_hi_w = win.hi;
        }
        const auto res = coordinate_step(rep, surrogates[h], cfg.coord);
        if (cfg.distributed) {
          // Every member holds the same reports, so every local solve must agree.
          for (std::size_t k = 1; k < mem.size(); ++k) {
            const auto again = coordinate_step(rep, surrogates[h], cfg.coord);
            if (again.a_star != res.a_star)
              throw NumericalFailure("members of the neighbourhood of " + rep[0].node + " disagree");
          }
        }
        if (res.infeasible) ++out.infeasible_steps;
        for (std::size_t k = 0; k < mem.size(); ++k) {
          a_star[mem[k]] = res.a_star[k];
          infeasible[mem[k]] = res.infeasible;
        }
      }
    }

    std::vector<double> applied(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto step = assets::step_soc(spec[i], soc[i], a_star[i]);
      soc[i] = step.state;
      applied[i] = step.applied_w;
      inj[node[i]].p_ess_w += applied[i];
      inj[node[i]].q_ess_var += grid::reactive_from_pf(applied[i], spec[i].pf);
      v_est[i] = est[i](applied[i]);
      held[i] = thevenin::estimate_local_voltage(agents[i].pipeline, tr[i], applied[i] / sb, pd[i], qd[i],
                                                 grid::reactive_from_pf(applied[i], spec[i].pf) / sb)
                    .v_adj;
    }
    auto sol = grid::solve_sweep(net, inj, cfg.pf);
    if (!sol.converged) throw NumericalFailure("power flow did not converge at step " + std::to_string(t));

    for (std::size_t i = 0; i < n; ++i) {
      OnlineRow r;
      r.t = t;
      r.node = spec[i].node;
      r.a_intended = a_int[i];
      r.a_tilde = a_til[i];
      r.a_star = a_star[i];
      r.a_applied = applied[i];
      r.v_true = sol.v[node[i]];
      r.v_tilde = v_est[i];
      r.v0 = v0[i];
      r.soc = soc[i].soc;
      r.a_ref = last_applied[i];
      r.v_ref = v_ref[i];
      last_applied[i] = applied[i];
      const double ex = detail::outside(r.v_true, lo_band, hi_band);
      r.violation = ex > 0.0;
      r.infeasible = infeasible[i];
      if (r.violation) ++out.violation_steps[i];
      out.max_violation = std::max(out.max_violation, ex);
      out.rows.push_back(std::move(r));
    }
    record_meters(inj, sol);
    out.trace.converged.push_back(true);
    out.trace.v.push_back(std::move(sol.v));
  }
  out.meters = std::move(meter);
  return out;
}

// Logged neighbourhood data for fitting the sensitivity surrogate: applied
// member actions relative to the previous ones, the estimates under the
// previous actions and the realised voltages.
inline std::vector<NeighborhoodSample> neighborhood_samples(const OnlineResult& res,
                                                            const std::vector<std::size_t>& members) {
  std::vector<NeighborhoodSample> out;
  for (std::size_t s = 0; s < res.steps(); ++s) {
    NeighborhoodSample x;
    for (auto j : members) {
      const auto& r = res.row(s, j);
      x.a_w.push_back(r.a_applied);
      x.a_ref_w.push_back(r.a_ref);
      x.v_est.push_back(r.v_ref);
      x.v_true.push_back(r.v_true);
    }
    out.push_back(std::move(x));
  }
  return out;
}

inline void write_episode_csv(std::ostream& os, const OnlineResult& res) {
  os << "t,node,a_intended,a_tilde,a_star,V_true,V_tilde,violation_flag,infeasible_flag\n";
  for (const auto& r : res.rows)
    os << r.t << ',' << r.node << ',' << text::fmt(r.a_intended) << ',' << text::fmt(r.a_tilde) << ','
       << text::fmt(r.a_star) << ',' << text::fmt(r.v_true) << ',' << text::fmt(r.v_tilde) << ','
       << (r.violation ? 1 : 0) << ',' << (r.infeasible ? 1 : 0) << '\n';
}

struct SweepRow {
  double beta = 1.0;
  std::size_t agents = 0;
  std::size_t violation_steps = 0;
  double max_violation = 0.0;
};

// Coordinated runs over a grid of scaling factors.
inline std::vector<SweepRow> beta_sweep(const grid::Network& net, const assets::LoadProfile& prof,
                                        const std::vector<OnlineAgent>& agents,
                                        const std::vector<SensitivitySurrogate>& surrogates, OnlineConfig cfg,
                                        std::span<const double> betas, std::size_t first, std::size_t count) {
  cfg.mode = OnlineMode::coordinated;
  std::vector<SweepRow> rows;
  for (double b : betas) {
    cfg.coord.beta = b;
    const auto res = run_online(net, prof, agents, surrogates, cfg, first, count);
    rows.push_back({b, agents.size(), res.total_violation_steps(), res.max_violation});
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "beta,agents,violation_steps,max_violation\n";
  for (const auto& r : rows)
    os << text::fmt(r.beta) << ',' << r.agents << ',' << r.violation_steps << ',' << text::fmt(r.max_violation)
       << '\n';
}

}  // namespace voltreg::coord
