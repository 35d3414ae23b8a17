#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <random>
#include <vector>

#include "voltreg/approx/checkpoint.hpp"
#include "voltreg/rl/env.hpp"
#include "voltreg/rl/ppo.hpp"
#include "voltreg/text.hpp"

namespace voltreg::rl {

struct UpdateLog {
  int update = 0;
  double mean_reward = 0.0;   // per step, over the rollout
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_frac = 0.0;
  double kl = 0.0;
  double wall_ms = 0.0;       // rollout plus update
  double rollout_ms = 0.0;
};

struct TrainedAgent {
  GaussianPolicy policy;
  ValueFunction value;
  std::vector<UpdateLog> curve;
};

// Creates networks for a state of size `dim`: the policy mean starts close to
// zero so that early actions are centred in the power window.
inline TrainedAgent make_agent(std::size_t dim, const ActionBounds& bounds, const PpoConfig& cfg,
                               std::mt19937_64& rng) {
  std::vector<std::size_t> sizes{dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  TrainedAgent ag;
  ag.policy.mean = approx::DenseNet(sizes);
  ag.policy.mean.initialize(rng, 0.01);
  ag.policy.log_std = cfg.init_log_std;
  ag.policy.bounds = bounds;
  ag.value.net = approx::DenseNet(sizes);
  ag.value.net.initialize(rng);
  return ag;
}

template <Environment E>
std::vector<Transition> collect_rollout(E& env, std::vector<double>& state, const GaussianPolicy& pi,
                                        const ValueFunction& vf, std::size_t steps, std::mt19937_64& rng) {
  std::vector<Transition> out;
  out.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto smp = pi.sample(state, rng);
    Transition tr;
    tr.state = state;
    tr.u = smp.u;
    tr.action = smp.action;
    tr.logp = smp.logp;
    tr.value = vf(state);
    StepResult res = env.step(smp.action);
    tr.reward = res.reward;
    tr.done = res.done;
    tr.next_state = res.state;
    state = res.done ? env.next_episode() : res.state;
    out.push_back(std::move(tr));
  }
  if (!out.empty() && !out.back().done) out.back().truncated = true;
  return out;
}

// PPO training loop. State statistics and the value scale are taken once from
// a warm-up rollout of uniform random actions and then frozen. SOC is reset
// at the start of every rollout; days advance across rollouts.
template <Environment E>
TrainedAgent train_agent(E& env, const PpoConfig& cfg, int updates, unsigned long long seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const ActionBounds bounds = env.bounds();
  TrainedAgent ag = make_agent(env.state_dim(), bounds, cfg, rng);

  {
    std::vector<std::vector<double>> seen;
    double abs_r = 0.0;
    std::uniform_real_distribution<double> u(bounds.lo, bounds.hi);
    auto s = env.reset();
    for (std::size_t k = 0; k < cfg.rollout; ++k) {
      seen.push_back(s);
      auto r = env.step(u(rng));
      abs_r += std::abs(r.reward);
      s = r.done ? env.next_episode() : r.state;
    }
    ag.policy.norm = ObsNormalizer::fit(seen);
    ag.value.norm = ag.policy.norm;
    const double mean_abs = abs_r / static_cast<double>(cfg.rollout);
    ag.value.scale = std::max(1.0, mean_abs / std::max(1e-3, 1.0 - cfg.gamma));
  }

  PpoOptimizers opt(ag.policy, ag.value, cfg);
  using clock = std::chrono::steady_clock;
  for (int upd = 0; upd < updates; ++upd) {
    const auto t0 = clock::now();
    auto state = env.reset();
    auto traj = collect_rollout(env, state, ag.policy, ag.value, cfg.rollout, rng);
    const auto t1 = clock::now();
    const auto st = ppo_update(ag.policy, ag.value, opt, traj, cfg, rng);
    const auto t2 = clock::now();
    double sum = 0.0;
    for (const auto& tr : traj) sum += tr.reward;
    UpdateLog log;
    log.update = upd;
    log.mean_reward = sum / static_cast<double>(traj.size());
    log.policy_loss = st.policy_loss;
    log.value_loss = st.value_loss;
    log.clip_frac = st.clip_frac;
    log.kl = st.kl;
    log.rollout_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log.wall_ms = std::chrono::duration<double, std::milli>(t2 - t0).count();
    ag.curve.push_back(log);
  }
  return ag;
}

// Trailing moving average of the per-update mean reward.
inline std::vector<double> smoothed_rewards(const std::vector<UpdateLog>& curve, std::size_t window) {
  std::vector<double> out;
  double run = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    run += curve[i].mean_reward;
    if (i >= window) run -= curve[i - window].mean_reward;
    out.push_back(run / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

inline void write_telemetry_csv(std::ostream& out, const std::vector<UpdateLog>& curve, bool with_time = true) {
  out << "update,mean_reward,policy_loss,value_loss,clip_frac" << (with_time ? ",wall_ms" : "") << "\n";
  for (const auto& l : curve) {
    out << l.update << ',' << text::fmt(l.mean_reward) << ',' << text::fmt(l.policy_loss) << ','
        << text::fmt(l.value_loss) << ',' << text::fmt(l.clip_frac);
    if (with_time) out << ',' << text::fmt(l.wall_ms);
    out << "\n";
  }
}

inline approx::Checkpoint policy_checkpoint(const TrainedAgent& ag) {
  approx::Checkpoint ck;
  ck.kind = "gaussian-policy";
  ck.shape = ag.policy.mean.sizes();
  ck.meta.push_back({"log_std", text::fmt(ag.policy.log_std)});
  ck.meta.push_back({"action_lo_w", text::fmt(ag.policy.bounds.lo)});
  ck.meta.push_back({"action_hi_w", text::fmt(ag.policy.bounds.hi)});
  std::string shift, scale;
  for (std::size_t i = 0; i < ag.policy.norm.shift.size(); ++i) {
    shift += (i ? ";" : "") + text::fmt(ag.policy.norm.shift[i]);
    scale += (i ? ";" : "") + text::fmt(ag.policy.norm.scale[i]);
  }
  ck.meta.push_back({"obs_shift", shift});
  ck.meta.push_back({"obs_scale", scale});
  auto p = ag.policy.mean.parameters();
  ck.values.assign(p.begin(), p.end());
  return ck;
}

inline GaussianPolicy policy_from_checkpoint(const approx::Checkpoint& ck) {
  if (ck.kind != "gaussian-policy") throw SchemaError("checkpoint holds '" + ck.kind + "', not a policy");
  auto need = [&](const std::string& key) -> const std::string& {
    const auto* v = ck.find_meta(key);
    if (!v) throw SchemaError("policy checkpoint lacks '" + key + "'");
    return *v;
  };
  auto numbers = [](const std::string& list) {
    std::vector<double> out;
    if (list.empty()) return out;
    for (const auto& f : text::split(list, ';')) out.push_back(text::parse_double(f, 0));
    return out;
  };
  GaussianPolicy pi;
  pi.mean = approx::DenseNet(ck.shape);
  approx::restore_parameters(pi.mean, ck);
  pi.log_std = text::parse_double(need("log_std"), 0);
  pi.bounds = {text::parse_double(need("action_lo_w"), 0), text::parse_double(need("action_hi_w"), 0)};
  pi.norm.shift = numbers(need("obs_shift"));
  pi.norm.scale = numbers(need("obs_scale"));
  if (pi.norm.shift.size() != pi.norm.scale.size()) throw SchemaError("policy normaliser sizes differ");
  return pi;
}

}  // namespace voltreg::rl
