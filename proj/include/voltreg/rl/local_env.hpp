#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "voltreg/assets/ess.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/grid/power_flow.hpp"
#include "voltreg/rl/env.hpp"
#include "voltreg/rl/reward.hpp"
#include "voltreg/thevenin/pipeline.hpp"

namespace voltreg::rl {

// State [P^D_t, SOC_t, V~_t, V_{t-1}, V_{t-2}, P^D_{t-1}, P^D_{t-2}] of one
// node, per unit except SOC.
inline constexpr std::size_t kLocalStateDim = 7;

// One storage agent on its own meter history. The voltage reacting to the
// action comes from the node's estimation pipeline; lags replay the recorded
// meter data. Nothing outside the node is read.
class LocalEnv {
 public:
  LocalEnv(thevenin::LocalPipeline pipeline, thevenin::MeterSeries hist, assets::EssSpec spec,
           RewardConfig reward, std::size_t steps_per_day, double s_base_va, double soc_init = 0.5)
      : pl_(std::move(pipeline)),
        m_(std::move(hist)),
        spec_(std::move(spec)),
        reward_(reward),
        spd_(steps_per_day),
        s_base_(s_base_va),
        soc_init_(soc_init) {
    spec_.validate();
    reward_.validate();
    if (spd_ == 0 || m_.size() < spd_) throw ConfigError("meter history shorter than one day");
    days_ = m_.size() / spd_;
    // Trackers and zero-action estimates depend only on the recorded history.
    thevenin::LocalTracker tr;
    double held = 1.0;
    for (std::size_t t = 0; t < m_.size(); ++t) {
      tr.last_v_adj = held;
      trackers_.push_back(tr);
      const auto est = thevenin::estimate_local_voltage(pl_, tr, 0.0, m_.pd[t], m_.qd[t]);
      held = est.v_adj;
      v0_.push_back(est.v_tilde);
      tr.push(m_.sample(t));
    }
  }

  std::size_t state_dim() const { return kLocalStateDim; }
  ActionBounds bounds() const { return {spec_.p_min_w, spec_.p_max_w}; }
  std::size_t day() const { return day_; }
  std::size_t days() const { return days_; }
  double soc() const { return soc_.soc; }
  const thevenin::MeterSeries& history() const { return m_; }

  std::vector<double> reset() {
    soc_.soc = soc_init_;
    step_ = 0;
    held_ = first_held();
    return observe();
  }

  std::vector<double> next_episode() {
    day_ = (day_ + 1) % days_;
    step_ = 0;
    held_ = first_held();
    return observe();
  }

  StepResult step(double a_w) {
    const std::size_t t = now();
    const auto soc_step = assets::step_soc(spec_, soc_, a_w);
    auto tr = trackers_[t];
    tr.last_v_adj = held_;
    const double a = soc_step.applied_w / s_base_;
    const double qa = grid::reactive_from_pf(soc_step.applied_w, spec_.pf) / s_base_;
    const auto est = thevenin::estimate_local_voltage(pl_, tr, a, m_.pd[t], m_.qd[t], qa);
    held_ = est.v_adj;
    soc_ = soc_step.state;
    StepResult res;
    res.applied_w = soc_step.applied_w;
    res.voltage = est.v_tilde;
    res.reward = reward_local(est.v_tilde, res.applied_w, reward_);
    ++step_;
    res.done = step_ >= spd_;
    res.state = res.done ? observe_at(t + 1 < m_.size() ? t + 1 : t) : observe();
    return res;
  }

  // Zero-action estimate at absolute step t.
  double pre_estimate(std::size_t t) const { return v0_.at(t); }

 private:
  std::size_t now() const { return day_ * spd_ + step_; }
  double first_held() const { return trackers_[now()].last_v_adj; }

  std::vector<double> observe() const { return observe_at(now()); }

  std::vector<double> observe_at(std::size_t t) const {
    const std::size_t t1 = t >= 1 ? t - 1 : 0, t2 = t >= 2 ? t - 2 : 0;
    return {m_.pd[t], soc_.soc, v0_[t], m_.v[t1], m_.v[t2], m_.pd[t1], m_.pd[t2]};
  }

  thevenin::LocalPipeline pl_;
  thevenin::MeterSeries m_;
  assets::EssSpec spec_;
  RewardConfig reward_;
  std::size_t spd_, days_ = 1, day_ = 0, step_ = 0;
  double s_base_, soc_init_;
  assets::EssState soc_;
  double held_ = 1.0;
  std::vector<thevenin::LocalTracker> trackers_;
  std::vector<double> v0_;
};

static_assert(Environment<LocalEnv>);

}  // namespace voltreg::rl
