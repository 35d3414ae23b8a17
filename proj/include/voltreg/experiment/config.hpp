#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "voltreg/assets/ess.hpp"
#include "voltreg/coord/coordinate.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/experiment/coordination.hpp"
#include "voltreg/grid/network.hpp"
#include "voltreg/rl/ppo.hpp"
#include "voltreg/text.hpp"

namespace voltreg::experiment {

using json = nlohmann::json;

struct ProfileConfig {
  std::string path;  // empty: synthetic residential profile
  int synthetic_days = 8;
  unsigned long long synthetic_seed = 5;
  double load_scale = 1.0;
};

struct EssConfig {
  std::vector<std::string> nodes{"R9", "R14", "R16"};
  double p_max_kw = 60.0;
  double e_rated_kwh = 500.0;
  double soc_min = 0.1;
  double soc_max = 0.9;
  double soc_init = 0.5;
  double power_factor = 1.0;
};

struct CorrectionConfig {
  std::string meter_node = "R10";  // evaluation meter without storage
  int history_days = 14;
  int encoder_epochs = 20;
  double train_fraction = 0.8;
  unsigned long long profile_seed = 21;
};

struct TrainConfig {
  int updates = 150;
  std::size_t smoothing_window = 20;
  int history_days = 8;
  rl::PpoConfig ppo;
};

struct CoordinationSettings {
  double beta = 1.0;
  std::vector<std::vector<std::string>> neighborhoods;  // empty: one neighbourhood of all storage nodes
  std::vector<std::string> extra_nodes{"R7", "R15", "R18"};
  std::vector<double> sweep_betas = default_betas();
  CoordinationScenario scenario;
  coord::CoordinationConfig solver;
};

struct ExperimentConfig {
  std::string network_path = "data/cigre_lv_residential.topo";
  ProfileConfig profile;
  EssConfig ess;
  double v_min_pu = 0.95;
  double v_max_pu = 1.05;
  CorrectionConfig correction;
  TrainConfig train;
  CoordinationSettings coordination;
  unsigned long long seed = 1;
  std::string output_dir = "runs/default";
  std::filesystem::path base_dir;  // relative input paths are taken from here

  std::string resolve(const std::string& p) const {
    if (p.empty() || std::filesystem::path(p).is_absolute() || base_dir.empty()) return p;
    return (base_dir / p).string();
  }

  assets::EssSpec ess_spec(const std::string& node) const {
    assets::EssSpec s;
    s.node = node;
    s.p_max_w = ess.p_max_kw * 1e3;
    s.p_min_w = -ess.p_max_kw * 1e3;
    s.e_rated_wh = ess.e_rated_kwh * 1e3;
    s.soc_min = ess.soc_min;
    s.soc_max = ess.soc_max;
    s.pf = ess.power_factor;
    return s;
  }

  // Neighbourhoods as agent indices into ess.nodes.
  std::vector<std::vector<std::size_t>> neighborhood_indices() const {
    if (coordination.neighborhoods.empty()) return default_neighborhoods(ess.nodes.size());
    std::vector<std::vector<std::size_t>> out;
    for (const auto& h : coordination.neighborhoods) {
      std::vector<std::size_t> idx;
      for (const auto& n : h) {
        auto it = std::find(ess.nodes.begin(), ess.nodes.end(), n);
        if (it == ess.nodes.end()) throw ConfigError("neighbourhood member '" + n + "' has no storage");
        idx.push_back(static_cast<std::size_t>(it - ess.nodes.begin()));
      }
      out.push_back(std::move(idx));
    }
    return out;
  }

  void validate(const grid::Network& net) const {
    if (!(v_min_pu < v_max_pu)) throw ConfigError("voltage band is empty");
    if (ess.nodes.empty()) throw ConfigError("at least one storage node is required");
    auto check_node = [&](const std::string& n) {
      if (!net.find(n)) throw ConfigError("node '" + n + "' is not in the network");
      if (*net.find(n) == net.slack()) throw ConfigError("storage cannot sit at the slack node '" + n + "'");
    };
    std::set<std::string> seen;
    for (const auto& n : ess.nodes) {
      check_node(n);
      if (!seen.insert(n).second) throw ConfigError("storage node '" + n + "' listed twice");
    }
    for (const auto& n : coordination.extra_nodes) {
      check_node(n);
      if (!seen.insert(n).second) throw ConfigError("extra coordination node '" + n + "' already has storage");
    }
    if (!net.find(correction.meter_node)) throw ConfigError("meter node '" + correction.meter_node + "' is not in the network");
    ess_spec(ess.nodes.front()).validate();
    if (!(ess.soc_init >= ess.soc_min && ess.soc_init <= ess.soc_max))
      throw ConfigError("initial SOC must lie within the SOC limits");
    if (profile.synthetic_days < 1 || !(profile.load_scale > 0.0)) throw ConfigError("profile settings must be positive");
    if (correction.history_days < 1 || correction.encoder_epochs < 1) throw ConfigError("correction settings must be positive");
    if (!(correction.train_fraction > 0.0 && correction.train_fraction < 1.0))
      throw ConfigError("train fraction must lie in (0, 1)");
    if (train.updates < 1 || train.smoothing_window == 0 || train.history_days < 2)
      throw ConfigError("training settings must be positive");
    train.ppo.validate();
    auto solver = coordination.solver;
    solver.beta = coordination.beta;
    solver.validate();
    for (double b : coordination.sweep_betas)
      if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("coordination scaler beta must lie in [0, 1]");
    coordination.scenario.validate();
    std::vector<int> member(ess.nodes.size(), 0);
    for (const auto& h : neighborhood_indices())
      for (auto j : h) ++member[j];
    for (std::size_t j = 0; j < member.size(); ++j)
      if (member[j] != 1) throw ConfigError("storage node '" + ess.nodes[j] + "' must belong to exactly one neighbourhood");
  }
};

namespace detail {

// Reads one JSON object, rejecting keys it does not know.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("'" + path_ + "' must be an object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown key '" + key(it.key()) + "'");
  }

  template <class T>
  void get(const std::string& k, T& out) {
    used_.insert(k);
    auto it = obj_.find(k);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("key '" + key(k) + "' has the wrong type");
    }
  }

  const json* child(const std::string& k) {
    used_.insert(k);
    auto it = obj_.find(k);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

inline void read_ppo(const json& j, rl::PpoConfig& p) {
  ObjectReader r(j, "train.ppo");
  r.get("gamma", p.gamma);
  r.get("clip", p.clip);
  r.get("policy_lr", p.policy_lr);
  r.get("value_lr", p.value_lr);
  r.get("epochs", p.epochs);
  r.get("minibatch", p.minibatch);
  r.get("rollout_steps", p.rollout);
  r.get("gae", p.gae);
  r.get("gae_lambda", p.gae_lambda);
  r.get("init_log_std", p.init_log_std);
  r.get("hidden", p.hidden);
  r.get("penalty_lambda", p.reward.lambda);
  r.get("w_p", p.reward.w_p);
  r.get("w_lambda", p.reward.w_lambda);
  r.get("cost", p.reward.cost);
  r.get("relax_lo_pu", p.reward.relax_lo);
  r.get("relax_hi_pu", p.reward.relax_hi);
  double unit_kw = p.reward.power_unit_w / 1e3;
  r.get("power_unit_kw", unit_kw);
  p.reward.power_unit_w = unit_kw * 1e3;
}

inline void read_scenario(const json& j, CoordinationScenario& s) {
  ObjectReader r(j, "coordination.scenario");
  r.get("history_days", s.days);
  if (j.contains("history_days")) s.days += 1;
  r.get("profile_seed", s.profile_seed);
  r.get("load_scale", s.load_scale);
  r.get("charge_below_peak_frac", s.charge_below);
  r.get("discharge_above_peak_frac", s.discharge_above);
  double kw = s.p_charge_w / 1e3;
  r.get("p_charge_kw", kw);
  s.p_charge_w = kw * 1e3;
  kw = s.p_discharge_w / 1e3;
  r.get("p_discharge_kw", kw);
  s.p_discharge_w = kw * 1e3;
  kw = s.dither_w / 1e3;
  r.get("dither_kw", kw);
  s.dither_w = kw * 1e3;
  r.get("encoder_epochs", s.encoder_epochs);
  r.get("surrogate_degree", s.surrogate_degree);
  r.get("residual_tol_pu", s.residual_tol);
}

}  // namespace detail

// Effective configuration as canonical JSON; its hash identifies a run.
// Paths appear as written, so the hash does not depend on where it runs.
inline json to_json(const ExperimentConfig& c) {
  const auto& p = c.train.ppo;
  const auto& s = c.coordination.scenario;
  return json{
      {"network_path", c.network_path},
      {"profile",
       {{"path", c.profile.path},
        {"synthetic_days", c.profile.synthetic_days},
        {"synthetic_seed", c.profile.synthetic_seed},
        {"load_scale", c.profile.load_scale}}},
      {"ess",
       {{"nodes", c.ess.nodes},
        {"p_max_kw", c.ess.p_max_kw},
        {"e_rated_kwh", c.ess.e_rated_kwh},
        {"soc_min", c.ess.soc_min},
        {"soc_max", c.ess.soc_max},
        {"soc_init", c.ess.soc_init},
        {"power_factor", c.ess.power_factor}}},
      {"band", {{"v_min_pu", c.v_min_pu}, {"v_max_pu", c.v_max_pu}}},
      {"correction",
       {{"meter_node", c.correction.meter_node},
        {"history_days", c.correction.history_days},
        {"encoder_epochs", c.correction.encoder_epochs},
        {"train_fraction", c.correction.train_fraction},
        {"profile_seed", c.correction.profile_seed}}},
      {"train",
       {{"updates", c.train.updates},
        {"smoothing_window", c.train.smoothing_window},
        {"history_days", c.train.history_days},
        {"ppo",
         {{"gamma", p.gamma},
          {"clip", p.clip},
          {"policy_lr", p.policy_lr},
          {"value_lr", p.value_lr},
          {"epochs", p.epochs},
          {"minibatch", p.minibatch},
          {"rollout_steps", p.rollout},
          {"gae", p.gae},
          {"gae_lambda", p.gae_lambda},
          {"init_log_std", p.init_log_std},
          {"hidden", p.hidden},
          {"penalty_lambda", p.reward.lambda},
          {"w_p", p.reward.w_p},
          {"w_lambda", p.reward.w_lambda},
          {"cost", p.reward.cost},
          {"relax_lo_pu", p.reward.relax_lo},
          {"relax_hi_pu", p.reward.relax_hi},
          {"power_unit_kw", p.reward.power_unit_w / 1e3}}}}},
      {"coordination",
       {{"beta", c.coordination.beta},
        {"neighborhoods", c.coordination.neighborhoods},
        {"extra_nodes", c.coordination.extra_nodes},
        {"sweep_betas", c.coordination.sweep_betas},
        {"margin_pu", c.coordination.solver.margin},
        {"max_iterations", c.coordination.solver.max_iterations},
        {"trust_fraction", c.coordination.solver.trust_fraction},
        {"penalty", c.coordination.solver.penalty},
        {"scenario",
         {{"history_days", s.days - 1},
          {"profile_seed", s.profile_seed},
          {"load_scale", s.load_scale},
          {"charge_below_peak_frac", s.charge_below},
          {"discharge_above_peak_frac", s.discharge_above},
          {"p_charge_kw", s.p_charge_w / 1e3},
          {"p_discharge_kw", s.p_discharge_w / 1e3},
          {"dither_kw", s.dither_w / 1e3},
          {"encoder_epochs", s.encoder_epochs},
          {"surrogate_degree", s.surrogate_degree},
          {"residual_tol_pu", s.residual_tol}}}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir}};
}

// Parses a configuration; relative paths are taken relative to `base_dir`.
// Syntax errors carry the line and column of the offending character.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    const auto pos = msg.find("parse error");
    throw SchemaError("configuration is not valid JSON: " + (pos == std::string::npos ? msg : msg.substr(pos)));
  }
  ExperimentConfig c;
  {
    detail::ObjectReader r(j, "");
    r.get("network_path", c.network_path);
    if (auto* p = r.child("profile")) {
      detail::ObjectReader q(*p, "profile");
      q.get("path", c.profile.path);
      q.get("synthetic_days", c.profile.synthetic_days);
      q.get("synthetic_seed", c.profile.synthetic_seed);
      q.get("load_scale", c.profile.load_scale);
    }
    if (auto* p = r.child("ess")) {
      detail::ObjectReader q(*p, "ess");
      q.get("nodes", c.ess.nodes);
      q.get("p_max_kw", c.ess.p_max_kw);
      q.get("e_rated_kwh", c.ess.e_rated_kwh);
      q.get("soc_min", c.ess.soc_min);
      q.get("soc_max", c.ess.soc_max);
      q.get("soc_init", c.ess.soc_init);
      q.get("power_factor", c.ess.power_factor);
    }
    if (auto* p = r.child("band")) {
      detail::ObjectReader q(*p, "band");
      q.get("v_min_pu", c.v_min_pu);
      q.get("v_max_pu", c.v_max_pu);
    }
    if (auto* p = r.child("correction")) {
      detail::ObjectReader q(*p, "correction");
      q.get("meter_node", c.correction.meter_node);
      q.get("history_days", c.correction.history_days);
      q.get("encoder_epochs", c.correction.encoder_epochs);
      q.get("train_fraction", c.correction.train_fraction);
      q.get("profile_seed", c.correction.profile_seed);
    }
    if (auto* p = r.child("train")) {
      detail::ObjectReader q(*p, "train");
      q.get("updates", c.train.updates);
      q.get("smoothing_window", c.train.smoothing_window);
      q.get("history_days", c.train.history_days);
      if (auto* pp = q.child("ppo")) detail::read_ppo(*pp, c.train.ppo);
    }
    if (auto* p = r.child("coordination")) {
      detail::ObjectReader q(*p, "coordination");
      q.get("beta", c.coordination.beta);
      q.get("neighborhoods", c.coordination.neighborhoods);
      q.get("extra_nodes", c.coordination.extra_nodes);
      q.get("sweep_betas", c.coordination.sweep_betas);
      q.get("margin_pu", c.coordination.solver.margin);
      q.get("max_iterations", c.coordination.solver.max_iterations);
      q.get("trust_fraction", c.coordination.solver.trust_fraction);
      q.get("penalty", c.coordination.solver.penalty);
      if (auto* s = q.child("scenario")) detail::read_scenario(*s, c.coordination.scenario);
    }
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
  }
  c.train.ppo.reward.v_min = c.v_min_pu;
  c.train.ppo.reward.v_max = c.v_max_pu;
  c.coordination.solver.v_min = c.v_min_pu;
  c.coordination.solver.v_max = c.v_max_pu;
  c.coordination.solver.beta = c.coordination.beta;
  c.base_dir = base_dir;
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = text::read_file(path);
  } catch (const Error&) {
    throw ConfigError("cannot read configuration '" + path + "'");
  }
  return parse_config(text, std::filesystem::path(path).parent_path());
}

}  // namespace voltreg::experiment
