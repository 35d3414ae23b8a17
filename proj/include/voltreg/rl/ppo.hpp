#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "voltreg/approx/dense_net.hpp"
#include "voltreg/approx/optim.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/rl/policy.hpp"
#include "voltreg/rl/reward.hpp"

namespace voltreg::rl {

struct PpoConfig {
  double gamma = 0.5;
  double clip = 0.2;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  int epochs = 10;
  std::size_t minibatch = 64;
  std::size_t rollout = 384;
  bool gae = false;
  double gae_lambda = 0.95;
  double entropy_coef = 0.0;
  double init_log_std = -0.5;
  std::vector<std::size_t> hidden{32, 32};
  bool normalize_advantages = true;
  RewardConfig reward;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("discount factor must lie in [0, 1]");
    if (!(clip > 0.0)) throw ConfigError("clip range must be positive");
    if (epochs <= 0 || minibatch == 0 || rollout == 0) throw ConfigError("PPO sizes must be positive");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("GAE lambda must lie in [0, 1]");
    reward.validate();
  }
};

struct Transition {
  std::vector<double> state;
  double u = 0.0;        // pre-squash sample
  double action = 0.0;   // watt, after squashing
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;       // episode ended
  bool truncated = false;  // rollout cut mid-episode
  double logp = 0.0;
  double value = 0.0;
};

// Value network with a fixed output scale so that targets are O(1).
struct ValueFunction {
  approx::DenseNet net;
  ObsNormalizer norm;
  double scale = 1.0;

  double operator()(std::span<const double> s) const { return scale * net.predict(norm.apply(s)); }
};

// Discounted returns G_t, reset at episode ends and bootstrapped from the
// value of the next state where a rollout was cut short.
inline std::vector<double> discounted_returns(const std::vector<Transition>& traj, double gamma,
                                              const ValueFunction& value) {
  std::vector<double> g(traj.size());
  double run = 0.0;
  for (std::size_t i = traj.size(); i-- > 0;) {
    const auto& tr = traj[i];
    if (tr.done) run = 0.0;
    else if (tr.truncated || i + 1 == traj.size()) run = value(tr.next_state);
    run = tr.reward + gamma * run;
    g[i] = run;
  }
  return g;
}

// Generalised advantage estimate; returns are advantage + value.
inline std::vector<double> gae_advantages(const std::vector<Transition>& traj, double gamma, double lambda,
                                          const ValueFunction& value) {
  std::vector<double> a(traj.size());
  double run = 0.0;
  for (std::size_t i = traj.size(); i-- > 0;) {
    const auto& tr = traj[i];
    double next_v = 0.0;
    if (tr.done) run = 0.0;
    else {
      next_v = value(tr.next_state);
      if (tr.truncated || i + 1 == traj.size()) run = 0.0;
    }
    const double delta = tr.reward + gamma * next_v - tr.value;
    run = delta + gamma * lambda * run;
    a[i] = run;
  }
  return a;
}

// Clipped surrogate for one sample, as a quantity to maximise.
inline double clipped_objective(double ratio, double adv, double eps) {
  return std::min(ratio * adv, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv);
}

// d(objective)/d(log pi). Zero whenever the clipped branch is the active one.
inline double clipped_objective_grad_logp(double ratio, double adv, double eps) {
  const bool clipped = (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
  return clipped ? 0.0 : ratio * adv;
}

struct Targets {
  std::vector<double> returns;
  std::vector<double> adv;
};

// Returns and advantages with A_t = G_t - V(S_t) for the stored values. With
// GAE the advantage is estimated first and the return is defined from it.
inline Targets compute_targets(const std::vector<Transition>& traj, const PpoConfig& cfg, const ValueFunction& vf) {
  Targets t;
  t.adv.resize(traj.size());
  if (cfg.gae) {
    t.adv = gae_advantages(traj, cfg.gamma, cfg.gae_lambda, vf);
    t.returns.resize(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) t.returns[i] = t.adv[i] + traj[i].value;
  } else {
    t.returns = discounted_returns(traj, cfg.gamma, vf);
    for (std::size_t i = 0; i < traj.size(); ++i) t.adv[i] = t.returns[i] - traj[i].value;
  }
  return t;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;
  double clip_frac = 0.0;
  double mean_advantage = 0.0;
};

struct PpoOptimizers {
  approx::Adam policy, log_std, value;

  PpoOptimizers() = default;
  PpoOptimizers(const GaussianPolicy& pi, const ValueFunction& v, const PpoConfig& cfg)
      : policy(pi.mean.parameter_count(), {.lr = cfg.policy_lr}),
        log_std(1, {.lr = cfg.policy_lr}),
        value(v.net.parameter_count(), {.lr = cfg.value_lr}) {}
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// One PPO update on a batch. Advantages are A = G - V(s) with the values
// stored at collection time; the value step regresses V(s) onto G.
inline UpdateStats ppo_update(GaussianPolicy& pi, ValueFunction& vf, PpoOptimizers& opt,
                              const std::vector<Transition>& traj, const PpoConfig& cfg, std::mt19937_64& rng) {
  if (traj.empty()) throw Error("PPO update needs at least one transition");
  const auto [returns, adv] = compute_targets(traj, cfg, vf);
  if (!all_finite(returns) || !all_finite(adv)) throw NumericalFailure("non-finite return or advantage in PPO batch");

  UpdateStats st;
  st.mean_advantage = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
  std::vector<double> nadv = adv;
  if (cfg.normalize_advantages && adv.size() > 1) {
    double var = 0.0;
    for (double a : adv) var += (a - st.mean_advantage) * (a - st.mean_advantage);
    const double sd = std::sqrt(var / static_cast<double>(adv.size()));
    if (sd > 1e-12)
      for (auto& a : nadv) a = (a - st.mean_advantage) / sd;
  }

  std::vector<std::vector<double>> z_pi(traj.size()), z_v(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    z_pi[i] = pi.norm.apply(traj[i].state);
    z_v[i] = vf.norm.apply(traj[i].state);
  }

  std::vector<std::size_t> order(traj.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> g_pi(pi.mean.parameter_count()), g_v(vf.net.parameter_count());
  double n_terms = 0.0, clipped = 0.0;
  double pol_sum = 0.0, val_sum = 0.0, kl_sum = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::fill(g_pi.begin(), g_pi.end(), 0.0);
      std::fill(g_v.begin(), g_v.end(), 0.0);
      double g_ls = 0.0, pol = 0.0, val = 0.0;
      const double sigma2 = std::exp(2.0 * pi.log_std);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto& tr = traj[i];
        const double m = pi.mean.predict(z_pi[i]);
        const double logp = GaussianPolicy::log_prob(tr.u, m, pi.log_std);
        const double ratio = std::exp(logp - tr.logp);
        const double a = nadv[i];
        pol -= clipped_objective(ratio, a, cfg.clip);
        const double dlogp = clipped_objective_grad_logp(ratio, a, cfg.clip);
        if (dlogp == 0.0 && a != 0.0) clipped += 1.0;
        kl_sum += tr.logp - logp;
        n_terms += 1.0;
        // loss = -objective - c * entropy, entropy = log_std + const
        const double d_loss_dlogp = -dlogp * inv;
        if (d_loss_dlogp != 0.0) {
          const double dmu = d_loss_dlogp * (tr.u - m) / sigma2;
          pi.mean.backprop(z_pi[i], dmu, g_pi);
          g_ls += d_loss_dlogp * ((tr.u - m) * (tr.u - m) / sigma2 - 1.0);
        }
        g_ls -= cfg.entropy_coef * inv;

        const double pred = vf.scale * vf.net.predict(z_v[i]);
        const double r = (pred - returns[i]) / vf.scale;
        val += r * r;
        vf.net.backprop(z_v[i], 2.0 * r * inv, g_v);
      }
      if (!all_finite(g_pi) || !all_finite(g_v) || !std::isfinite(g_ls) || !std::isfinite(pol) ||
          !std::isfinite(val))
        throw NumericalFailure("non-finite loss or gradient in PPO update");
      opt.policy.step(pi.mean.parameters(), g_pi);
      opt.log_std.step(std::span<double>(&pi.log_std, 1), std::span<const double>(&g_ls, 1));
      pi.clamp_log_std();
      opt.value.step(vf.net.parameters(), g_v);
      pol_sum += pol;
      val_sum += val;
    }
  }
  st.policy_loss = pol_sum / n_terms;
  st.value_loss = val_sum / n_terms;
  st.kl = kl_sum / n_terms;
  st.clip_frac = clipped / n_terms;
  return st;
}

}  // namespace voltreg::rl
