#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "voltreg/assets/ess.hpp"
#include "voltreg/assets/profile.hpp"
#include "voltreg/coord/online.hpp"
#include "voltreg/coord/surrogate.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/experiment/scenario.hpp"
#include "voltreg/grid/network.hpp"
#include "voltreg/rl/policy.hpp"
#include "voltreg/thevenin/pipeline.hpp"

namespace voltreg::experiment {

// Engineered conflict on the residential feeder: storage at the ends of the
// laterals, driven by their own demand. Uncoordinated, the valley charging
// of several units at once pulls the far nodes under the band.
struct CoordinationScenario {
  std::vector<std::string> nodes{"R9", "R14", "R16", "R7", "R15", "R18"};
  double load_scale = 1.0;
  int days = 15;  // history, then one evaluation day
  unsigned long long profile_seed = 11;
  double e_rated_wh = 500e3;
  double p_rated_w = 60e3;
  double charge_below = 0.35;    // fraction of the node's historical peak demand
  double discharge_above = 0.7;
  double p_charge_w = 35e3;
  double p_discharge_w = 60e3;
  double dither_w = 30e3;        // perturbation during the logging run
  int encoder_epochs = 20;
  int surrogate_degree = 2;
  double margin = 0.015;
  double residual_tol = 0.005;   // p.u. beyond the band still counted as controlled
  unsigned long long seed = 1;

  void validate() const {
    if (nodes.empty()) throw ConfigError("coordination scenario needs storage nodes");
    if (days < 3) throw ConfigError("coordination scenario needs at least three days");
    if (!(load_scale > 0.0) || !(e_rated_wh > 0.0) || !(p_rated_w > 0.0))
      throw ConfigError("coordination scenario scales must be positive");
    if (!(0.0 <= charge_below && charge_below < discharge_above))
      throw ConfigError("demand thresholds must satisfy 0 <= charge_below < discharge_above");
    if (p_charge_w > p_rated_w || p_discharge_w > p_rated_w || p_charge_w < 0.0 || p_discharge_w < 0.0)
      throw ConfigError("rule powers must lie within the rating");
    if (surrogate_degree < 1) throw ConfigError("surrogate degree must be at least one");
    if (!(residual_tol >= 0.0)) throw ConfigError("residual tolerance must be non-negative");
  }

  std::size_t steps_per_day(const assets::LoadProfile& prof) const {
    return static_cast<std::size_t>(prof.steps_per_day());
  }
};

// One neighbourhood up to three agents; beyond that agent k shares with
// agent k + n/2, so the first half keeps its members and each gains a partner.
inline std::vector<std::vector<std::size_t>> default_neighborhoods(std::size_t n) {
  if (n <= 3) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return {all};
  }
  if (n % 2 != 0) throw ConfigError("more than three agents must come in pairs");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t k = 0; k < n / 2; ++k) out.push_back({k, k + n / 2});
  return out;
}

inline assets::LoadProfile coordination_profile(const CoordinationScenario& sc) {
  auto loads = cigre_residential_loads();
  for (auto& l : loads) l.peak_w *= sc.load_scale;
  return assets::synthetic_profile(loads, {.days = sc.days, .seed = sc.profile_seed});
}

// Deterministic action of a trained policy, for deployment.
inline coord::AgentPolicy trained_policy(rl::GaussianPolicy pi) {
  return [pi = std::move(pi)](std::span<const double> s, const coord::LocalEstimator&) {
    return pi.bounds.squash(pi.mu(s));
  };
}

struct PreparedCoordination {
  std::vector<coord::OnlineAgent> agents;
  coord::OnlineConfig cfg;  // coordinated at beta = 1
  std::vector<coord::SensitivitySurrogate> surrogates;
  coord::OnlineResult logging;  // uncoordinated history the surrogates were fitted on
  std::size_t first = 0;        // evaluation window
  std::size_t count = 0;
};

class CoordinationBuilder {
 public:
  CoordinationBuilder(grid::Network net, CoordinationScenario sc)
      : CoordinationBuilder(std::move(net), sc, coordination_profile(sc)) {}

  // Runs on a given profile: all but its last day are history.
  CoordinationBuilder(grid::Network net, CoordinationScenario sc, assets::LoadProfile prof)
      : net_(std::move(net)), sc_(std::move(sc)), prof_(std::move(prof)) {
    spd_ = sc_.steps_per_day(prof_);
    if (spd_ == 0 || prof_.steps() % spd_ != 0) throw ConfigError("profile must hold whole days");
    sc_.days = static_cast<int>(prof_.steps() / spd_);
    sc_.validate();
    hist_ = static_cast<std::size_t>(sc_.days - 1) * spd_;
    for (const auto& n : sc_.nodes) {
      if (!net_.find(n)) throw ConfigError("storage node '" + n + "' is not in the network");
      if (prof_.column(n) < 0) throw ConfigError("storage node '" + n + "' has no load profile");
    }
  }

  const grid::Network& network() const { return net_; }
  const assets::LoadProfile& profile() const { return prof_; }
  const CoordinationScenario& scenario() const { return sc_; }

  thevenin::PipelineTrainOptions pipeline_options() const {
    thevenin::PipelineTrainOptions po;
    po.train.epochs = sc_.encoder_epochs;
    po.train.seed = sc_.seed;
    po.init_seed = sc_.seed;
    return po;
  }

  // Estimation pipeline of a node fitted on a history of random storage
  // actions at that node alone; cached across agent counts.
  const thevenin::LocalPipeline& initial_pipeline(const std::string& node) {
    auto it = initial_.find(node);
    if (it != initial_.end()) return it->second;
    auto hist = prof_;
    hist.p_w.resize(hist_);
    hist.pf.resize(hist_);
    const std::size_t idx = *net_.find(node);
    const auto k = static_cast<unsigned long long>(std::find(sc_.nodes.begin(), sc_.nodes.end(), node) - sc_.nodes.begin());
    const auto rec = record(net_, hist, {idx}, random_actions(1, hist_, -sc_.p_rated_w, sc_.p_rated_w, sc_.seed + 4 + k),
                            {idx});
    return initial_[node] =
               thevenin::fit_local_pipeline(rec.meters.at(idx), sc_.p_rated_w / net_.base().s_base_va,
                                            pipeline_options())
                   .first;
  }

  std::vector<coord::OnlineAgent> rule_agents(std::size_t n) {
    if (n > sc_.nodes.size()) throw ConfigError("more agents requested than storage nodes");
    const double sb = net_.base().s_base_va;
    std::vector<coord::OnlineAgent> out;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& node = sc_.nodes[k];
      const auto col = static_cast<std::size_t>(prof_.column(node));
      double peak = 0.0;
      for (std::size_t t = 0; t < hist_; ++t) peak = std::max(peak, prof_.p_w[t][col] / sb);
      assets::EssSpec spec;
      spec.node = node;
      spec.e_rated_wh = sc_.e_rated_wh;
      spec.p_max_w = sc_.p_rated_w;
      spec.p_min_w = -sc_.p_rated_w;
      spec.dt_h = prof_.dt_hours();
      coord::DemandRule rule{sc_.charge_below * peak, sc_.discharge_above * peak, sc_.p_charge_w, sc_.p_discharge_w};
      out.push_back({spec, initial_pipeline(node), rule.policy()});
    }
    return out;
  }

  // Logging run of the uncoordinated agents over the history, pipelines
  // refitted on the meter data it produced, and the surrogates fitted on a
  // rerun with the refitted pipelines.
  PreparedCoordination prepare(std::vector<coord::OnlineAgent> agents,
                               std::vector<std::vector<std::size_t>> neighborhoods = {}) const {
    PreparedCoordination p;
    p.cfg.neighborhoods = neighborhoods.empty() ? default_neighborhoods(agents.size()) : std::move(neighborhoods);
    p.cfg.coord.margin = sc_.margin;
    p.cfg.seed = sc_.seed;
    auto log_cfg = p.cfg;
    log_cfg.mode = coord::OnlineMode::uncoordinated;
    log_cfg.dither_w = sc_.dither_w;
    const double p_max_pu = sc_.p_rated_w / net_.base().s_base_va;
    auto logs = coord::run_online(net_, prof_, agents, {}, log_cfg, 2, hist_ - 2);
    for (std::size_t k = 0; k < agents.size(); ++k)
      agents[k].pipeline = thevenin::fit_local_pipeline(logs.meters[k], p_max_pu, pipeline_options()).first;
    p.logging = coord::run_online(net_, prof_, agents, {}, log_cfg, 2, hist_ - 2);
    for (const auto& h : p.cfg.neighborhoods) {
      std::vector<double> scale;
      for (auto j : h) scale.push_back(agents[j].spec.p_max_w);
      p.surrogates.push_back(coord::fit_sensitivity(coord::neighborhood_samples(p.logging, h), scale,
                                                    {.degree = sc_.surrogate_degree}));
    }
    p.agents = std::move(agents);
    p.first = hist_;
    p.count = spd_;
    return p;
  }

  PreparedCoordination prepare(std::size_t n_agents) { return prepare(rule_agents(n_agents)); }

  coord::OnlineResult run(const PreparedCoordination& p, coord::OnlineMode mode, double beta = 1.0) const {
    auto cfg = p.cfg;
    cfg.mode = mode;
    cfg.coord.beta = beta;
    return coord::run_online(net_, prof_, p.agents, p.surrogates, cfg, p.first, p.count);
  }

  std::vector<coord::SweepRow> sweep(const PreparedCoordination& p, std::span<const double> betas) const {
    return coord::beta_sweep(net_, prof_, p.agents, p.surrogates, p.cfg, betas, p.first, p.count);
  }

 private:
  grid::Network net_;
  CoordinationScenario sc_;
  assets::LoadProfile prof_;
  std::size_t spd_ = 96, hist_ = 0;
  std::map<std::string, thevenin::LocalPipeline> initial_;
};

inline std::vector<double> default_betas() {
  return {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
}

// Scaling factors at which every agent node stayed within the band up to the
// residual tolerance.
inline std::vector<double> feasible_betas(const std::vector<coord::SweepRow>& rows, double residual_tol) {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.max_violation <= residual_tol) out.push_back(r.beta);
  return out;
}

}  // namespace voltreg::experiment
