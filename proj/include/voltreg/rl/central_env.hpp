#pragma once

#include <cstddef>
#include <vector>

#include "voltreg/assets/ess.hpp"
#include "voltreg/assets/profile.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/grid/network.hpp"
#include "voltreg/grid/power_flow.hpp"
#include "voltreg/grid/timeseries.hpp"
#include "voltreg/rl/env.hpp"
#include "voltreg/rl/reward.hpp"

namespace voltreg::rl {

enum class RewardMode {
  system,  // reward over every node voltage and the storage power
  node     // step reward on the agent's own node voltage
};

// One storage agent acting on the full feeder model: every step runs a power
// flow with the agent's power added at its node.
class CentralEnv {
 public:
  CentralEnv(const grid::Network& net, assets::LoadProfile prof, assets::EssSpec spec, RewardConfig reward,
             RewardMode mode = RewardMode::node, double soc_init = 0.5)
      : net_(&net),
        prof_(std::move(prof)),
        spec_(std::move(spec)),
        reward_(reward),
        mode_(mode),
        soc_init_(soc_init) {
    spec_.validate();
    reward_.validate();
    binding_ = grid::bind_profile(net, prof_);
    node_ = net.index_of(spec_.node);
    spd_ = prof_.steps_per_day();
    if (spd_ == 0 || prof_.steps() < spd_) throw ConfigError("profile shorter than one day");
    days_ = prof_.steps() / spd_;
    for (std::size_t i = 0; i < net.node_count(); ++i)
      if (i != net.slack()) observed_.push_back(i);
  }

  std::size_t state_dim() const { return 1 + observed_.size(); }
  ActionBounds bounds() const { return {spec_.p_min_w, spec_.p_max_w}; }
  std::size_t day() const { return day_; }
  std::size_t days() const { return days_; }
  double soc() const { return soc_.soc; }
  std::size_t node() const { return node_; }

  std::vector<double> reset() {
    soc_.soc = soc_init_;
    return begin_day();
  }

  std::vector<double> next_episode() {
    day_ = (day_ + 1) % days_;
    return begin_day();
  }

  StepResult step(double a_w) {
    const std::size_t t = day_ * spd_ + step_;
    const auto soc_step = assets::step_soc(spec_, soc_, a_w);
    auto inj = grid::demand_injections(*net_, prof_, binding_, t);
    inj[node_].p_ess_w += soc_step.applied_w;
    inj[node_].q_ess_var += grid::reactive_from_pf(soc_step.applied_w, spec_.pf);
    const auto sol = grid::solve_sweep(*net_, inj);
    StepResult res;
    res.applied_w = soc_step.applied_w;
    res.converged = sol.converged;
    res.voltage = sol.v[node_];
    soc_ = soc_step.state;
    ++step_;
    if (!sol.converged) {
      res.reward = -reward_.w_lambda * reward_.lambda - reward_.w_p * std::abs(res.applied_w) / reward_.power_unit_w;
      res.done = true;
      res.state = observe(last_v_);
      return res;
    }
    if (mode_ == RewardMode::node) {
      res.reward = reward_local(sol.v[node_], res.applied_w, reward_);
    } else {
      std::vector<double> v;
      for (auto i : observed_) v.push_back(sol.v[i]);
      const double p = res.applied_w;
      res.reward = reward_central(v, std::span<const double>(&p, 1), reward_);
    }
    last_v_ = sol.v;
    res.done = step_ >= spd_;
    res.state = observe(last_v_);
    return res;
  }

 private:
  std::vector<double> begin_day() {
    step_ = 0;
    // Voltages of the step before the day starts, without storage power.
    const std::size_t t = day_ * spd_;
    const std::size_t prev = t == 0 ? prof_.steps() - 1 : t - 1;
    last_v_ = grid::solve_sweep(*net_, grid::demand_injections(*net_, prof_, binding_, prev)).v;
    return observe(last_v_);
  }

  std::vector<double> observe(const std::vector<double>& v) const {
    std::vector<double> s{soc_.soc};
    for (auto i : observed_) s.push_back(v[i]);
    return s;
  }

  const grid::Network* net_;
  assets::LoadProfile prof_;
  assets::EssSpec spec_;
  RewardConfig reward_;
  RewardMode mode_;
  double soc_init_;
  std::vector<std::size_t> binding_, observed_;
  std::size_t node_ = 0, spd_ = 96, days_ = 1, day_ = 0, step_ = 0;
  assets::EssState soc_;
  std::vector<double> last_v_;
};

static_assert(Environment<CentralEnv>);

}  // namespace voltreg::rl
