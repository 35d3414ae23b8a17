#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voltreg/approx/checkpoint.hpp"
#include "voltreg/assets/profile.hpp"
#include "voltreg/coord/online.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/experiment/config.hpp"
#include "voltreg/experiment/coordination.hpp"
#include "voltreg/experiment/scenario.hpp"
#include "voltreg/grid/power_flow.hpp"
#include "voltreg/grid/timeseries.hpp"
#include "voltreg/grid/topology_io.hpp"
#include "voltreg/rl/central_env.hpp"
#include "voltreg/rl/local_env.hpp"
#include "voltreg/rl/train.hpp"
#include "voltreg/text.hpp"
#include "voltreg/thevenin/pipeline.hpp"

namespace voltreg::experiment {

inline constexpr const char* kVersion = "0.1.0";

// Where a run came from and what it wrote. Timings live here and nowhere
// else, so that metric files are byte-identical across reruns.
struct RunManifest {
  std::string command;
  std::string config_hash;
  unsigned long long seed = 0;
  std::vector<std::pair<std::string, double>> stage_ms;
  std::vector<std::string> outputs;

  json to_json() const {
    json stages = json::array();
    for (const auto& [name, ms] : stage_ms) stages.push_back({{"stage", name}, {"wall_ms", ms}});
    return {{"command", command},
            {"config_hash", config_hash},
            {"seed", seed},
            {"versions",
             {{"voltreg", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
            {"stages", stages},
            {"outputs", outputs}};
  }
};

inline std::string config_hash(const ExperimentConfig& cfg) { return text::hex64(text::fnv1a(to_json(cfg).dump())); }

// Output directory of one command plus its manifest.
class RunContext {
 public:
  RunContext(const ExperimentConfig& cfg, std::string command, std::filesystem::path out)
      : cfg_(cfg), out_(std::move(out)) {
    std::filesystem::create_directories(out_);
    man_.command = std::move(command);
    man_.config_hash = config_hash(cfg);
    man_.seed = cfg.seed;
  }

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& dir() const { return out_; }

  std::ofstream open(const std::string& name) {
    std::ofstream f(out_ / name, std::ios::binary);
    if (!f) throw Error("cannot write '" + (out_ / name).string() + "'");
    if (std::find(man_.outputs.begin(), man_.outputs.end(), name) == man_.outputs.end()) man_.outputs.push_back(name);
    return f;
  }

  template <class F>
  auto stage(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      man_.stage_ms.emplace_back(name,
                                 std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    };
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      finish();
    } else {
      auto r = f();
      finish();
      return r;
    }
  }

  void finish() {
    std::ofstream f(out_ / ("manifest_" + man_.command + ".json"), std::ios::binary);
    f << man_.to_json().dump(2) << "\n";
  }

  const RunManifest& manifest() const { return man_; }

 private:
  const ExperimentConfig& cfg_;
  std::filesystem::path out_;
  RunManifest man_;
};

inline grid::Network load_network(const ExperimentConfig& cfg) { return grid::load_topology(cfg.resolve(cfg.network_path)); }

// Profile from the configured file, or the synthetic residential profile of
// `days` days (scaled) when no file is given.
inline assets::LoadProfile load_profile(const ExperimentConfig& cfg, int days, unsigned long long seed) {
  if (!cfg.profile.path.empty()) {
    auto prof = assets::load_profiles(cfg.resolve(cfg.profile.path));
    for (auto& row : prof.p_w)
      for (auto& p : row) p *= cfg.profile.load_scale;
    return prof;
  }
  auto loads = cigre_residential_loads();
  for (auto& l : loads) l.peak_w *= cfg.profile.load_scale;
  return assets::synthetic_profile(loads, {.days = days, .seed = seed});
}

inline std::size_t whole_days(const assets::LoadProfile& prof) {
  return prof.steps() / static_cast<std::size_t>(prof.steps_per_day());
}

inline std::string json_number(double v) { return text::fmt(v); }

// ---------------------------------------------------------------- simulate

inline void cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  RunContext run(cfg, "simulate", out);
  const auto net = load_network(cfg);
  cfg.validate(net);
  const auto prof = load_profile(cfg, cfg.profile.synthetic_days, cfg.profile.synthetic_seed);
  const auto binding = grid::bind_profile(net, prof);
  auto volts = run.open("baseline_voltages.csv");
  auto flows = run.open("baseline_flows.csv");
  auto viol = run.open("baseline_violations.csv");
  volts << "t";
  for (const auto& n : net.nodes()) volts << ',' << n.id;
  volts << "\n";
  flows << "t,from,to,p_pu,q_pu,p_loss_pu\n";
  viol << "t,node,V_pu,excess_pu\n";
  std::vector<std::size_t> steps_out(net.node_count(), 0);
  double v_lo = 10.0, v_hi = 0.0;
  run.stage("power_flow", [&] {
    for (std::size_t t = 0; t < prof.steps(); ++t) {
      const auto inj = grid::demand_injections(net, prof, binding, t);
      const auto sol = grid::solve_sweep(net, inj);
      if (!sol.converged) throw NumericalFailure("power flow did not converge at step " + std::to_string(t));
      volts << t;
      for (double v : sol.v) volts << ',' << text::fmt(v);
      volts << "\n";
      for (std::size_t l = 0; l < net.lines().size(); ++l) {
        const auto& ln = net.lines()[l];
        flows << t << ',' << net.nodes()[ln.from].id << ',' << net.nodes()[ln.to].id << ',' << text::fmt(sol.p_flow[l])
              << ',' << text::fmt(sol.q_flow[l]) << ',' << text::fmt(sol.p_loss[l]) << "\n";
      }
      for (const auto& x : grid::check_limits(sol, cfg.v_min_pu, cfg.v_max_pu)) {
        viol << t << ',' << net.nodes()[x.node].id << ',' << text::fmt(sol.v[x.node]) << ',' << text::fmt(x.excess)
             << "\n";
        ++steps_out[x.node];
      }
      for (std::size_t i = 0; i < sol.v.size(); ++i)
        if (i != net.slack()) {
          v_lo = std::min(v_lo, sol.v[i]);
          v_hi = std::max(v_hi, sol.v[i]);
        }
    }
  });
  json per_node = json::object();
  std::size_t total = 0;
  for (std::size_t i = 0; i < net.node_count(); ++i) {
    if (i == net.slack()) continue;
    per_node[net.nodes()[i].id] = steps_out[i];
    total += steps_out[i];
  }
  auto sum = run.open("simulate_summary.json");
  sum << json{{"steps", prof.steps()},
              {"v_min_pu", v_lo},
              {"v_max_pu", v_hi},
              {"violation_steps_total", total},
              {"violation_steps", per_node}}
             .dump(2)
      << "\n";
  run.finish();
}

// ---------------------------------------------------------- fit-correction

inline approx::Checkpoint corrector_checkpoint(const thevenin::PiecewiseCorrector& c) {
  approx::Checkpoint ck;
  ck.kind = "piecewise-corrector";
  ck.meta.push_back({"v_min", text::fmt(c.v_min)});
  ck.meta.push_back({"v_max", text::fmt(c.v_max)});
  ck.meta.push_back({"clamp_lo", text::fmt(c.clamp_lo)});
  ck.meta.push_back({"clamp_hi", text::fmt(c.clamp_hi)});
  for (std::size_t k = 0; k < c.seg.size(); ++k) {
    const auto& s = c.seg[k];
    std::string d = s.identity ? "identity" : "degree=" + std::to_string(s.poly.degree) + ";lo=" + text::fmt(s.lo) +
                                                  ";hi=" + text::fmt(s.hi) + ";offset=" + text::fmt(s.poly.offset[0]) +
                                                  ";scale=" + text::fmt(s.poly.scale[0]);
    ck.meta.push_back({"segment" + std::to_string(k), d});
    ck.shape.push_back(s.identity ? 0 : s.poly.coeffs.size());
    if (!s.identity) ck.values.insert(ck.values.end(), s.poly.coeffs.begin(), s.poly.coeffs.end());
  }
  return ck;
}

inline approx::Checkpoint sensitivity_checkpoint(const thevenin::SensitivityModel& m) {
  approx::Checkpoint ck;
  ck.kind = "sensitivity-encoder";
  const auto& c = m.net.config();
  ck.shape = {c.features, c.d_model, c.heads, c.mlp, c.layers};
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + text::fmt(v[i]);
    return s;
  };
  ck.meta.push_back({"x_mean", list(m.scaler.x_mean)});
  ck.meta.push_back({"x_scale", list(m.scaler.x_scale)});
  ck.meta.push_back({"y_mean", text::fmt(m.scaler.y_mean)});
  ck.meta.push_back({"y_scale", text::fmt(m.scaler.y_scale)});
  auto p = m.net.parameters();
  ck.values.assign(p.begin(), p.end());
  return ck;
}

inline double quantile_abs(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  for (auto& x : v) x = std::abs(x);
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Per meter: pipeline fitted on a history with random storage actions, then
// evaluated on a final day without any storage action.
inline void cmd_fit_correction(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  RunContext run(cfg, "fit-correction", out);
  const auto net = load_network(cfg);
  cfg.validate(net);
  const auto prof = load_profile(cfg, cfg.correction.history_days + 1, cfg.correction.profile_seed);
  const std::size_t spd = static_cast<std::size_t>(prof.steps_per_day());
  if (whole_days(prof) < 2) throw UnderdeterminedSegment("correction needs at least one history day and one evaluation day");
  const std::size_t hist_steps = (whole_days(prof) - 1) * spd;
  std::vector<std::size_t> ess, meters;
  for (const auto& n : cfg.ess.nodes) ess.push_back(net.index_of(n));
  std::vector<std::string> meter_ids = cfg.ess.nodes;
  if (std::find(meter_ids.begin(), meter_ids.end(), cfg.correction.meter_node) == meter_ids.end())
    meter_ids.push_back(cfg.correction.meter_node);
  for (const auto& n : meter_ids) meters.push_back(net.index_of(n));
  const double p_max_w = cfg.ess.p_max_kw * 1e3;

  const auto hist = prof.slice(0, hist_steps);
  const auto day = prof.slice(hist_steps, spd);
  auto rec = run.stage("record", [&] {
    return std::make_pair(record(net, hist, ess, random_actions(ess.size(), hist.steps(), -p_max_w, p_max_w, cfg.seed + 1),
                                 meters, cfg.ess.power_factor),
                          record(net, day, ess, nullptr, meters));
  });

  thevenin::PipelineTrainOptions po;
  po.train.epochs = cfg.correction.encoder_epochs;
  po.train.seed = cfg.seed;
  po.init_seed = cfg.seed;
  po.train_fraction = cfg.correction.train_fraction;
  auto summary = run.open("correction_summary.csv");
  summary << "node,steps,within2_rel_err2,within5_rel_err1,p95_rel_err1,p95_rel_err2,train_rmse,val_rmse\n";
  for (std::size_t k = 0; k < meters.size(); ++k) {
    const auto& id = meter_ids[k];
    auto fitted = run.stage("fit_" + id, [&] {
      return thevenin::fit_local_pipeline(rec.first.meters.at(meters[k]), p_max_w / net.base().s_base_va, po);
    });
    const auto rows = thevenin::estimation_trace(fitted.first, rec.second.meters.at(meters[k]));
    {
      auto f = run.open("trace_" + id + ".csv");
      thevenin::write_trace_csv(f, rows);
    }
    {
      auto f = run.open("corrector_" + id + ".ckpt");
      approx::write_checkpoint(f, corrector_checkpoint(fitted.first.corrector));
    }
    if (fitted.first.sensitivity) {
      auto f = run.open("sensitivity_" + id + ".ckpt");
      approx::write_checkpoint(f, sensitivity_checkpoint(*fitted.first.sensitivity));
    }
    std::vector<double> e1, e2;
    std::size_t in2 = 0, in5 = 0;
    for (const auto& r : rows) {
      e1.push_back(r.rel_err1);
      e2.push_back(r.rel_err2);
      in2 += std::abs(r.rel_err2) <= 0.02;
      in5 += std::abs(r.rel_err1) <= 0.05;
    }
    const double n = std::max<double>(1.0, static_cast<double>(rows.size()));
    summary << id << ',' << rows.size() << ',' << text::fmt(in2 / n) << ',' << text::fmt(in5 / n) << ','
            << text::fmt(quantile_abs(e1, 0.95)) << ',' << text::fmt(quantile_abs(e2, 0.95)) << ','
            << text::fmt(fitted.second.train_rmse) << ',' << text::fmt(fitted.second.val_rmse) << "\n";
  }
  run.finish();
}

// ------------------------------------------------------------------- train

struct TrainComparison {
  std::string node;
  rl::TrainedAgent local, central;
  double local_final = 0.0, central_final = 0.0;
  double local_ms = 0.0, central_ms = 0.0;  // mean wall-clock per update
};

inline double mean_wall_ms(const std::vector<rl::UpdateLog>& curve) {
  double s = 0.0;
  for (const auto& l : curve) s += l.wall_ms;
  return curve.empty() ? 0.0 : s / static_cast<double>(curve.size());
}

// Local estimation environment of `node`: its pipeline is fitted on the
// node's own history with random storage actions.
inline rl::LocalEnv local_env(const grid::Network& net, const assets::LoadProfile& prof, const ExperimentConfig& cfg,
                              const std::string& node) {
  const std::size_t idx = net.index_of(node);
  const auto spec = cfg.ess_spec(node);
  const auto k = static_cast<unsigned long long>(std::find(cfg.ess.nodes.begin(), cfg.ess.nodes.end(), node) -
                                                 cfg.ess.nodes.begin());
  auto rec = record(net, prof, {idx}, random_actions(1, prof.steps(), spec.p_min_w, spec.p_max_w, cfg.seed + 2 + k),
                    {idx}, spec.pf);
  thevenin::PipelineTrainOptions po;
  po.train.epochs = cfg.correction.encoder_epochs;
  po.train.seed = cfg.seed;
  po.init_seed = cfg.seed;
  auto pl = thevenin::fit_local_pipeline(rec.meters.at(idx), spec.p_max_w / net.base().s_base_va, po).first;
  return rl::LocalEnv(std::move(pl), rec.meters.at(idx), spec, cfg.train.ppo.reward,
                      static_cast<std::size_t>(prof.steps_per_day()), net.base().s_base_va, cfg.ess.soc_init);
}

inline rl::CentralEnv central_env(const grid::Network& net, const assets::LoadProfile& prof,
                                  const ExperimentConfig& cfg, const std::string& node) {
  return rl::CentralEnv(net, prof, cfg.ess_spec(node), cfg.train.ppo.reward, rl::RewardMode::node,
                        cfg.ess.soc_init);
}

// Trains one agent for `node` twice: against its local estimation
// environment and against the full feeder model.
inline TrainComparison train_node(const grid::Network& net, const assets::LoadProfile& prof,
                                  const ExperimentConfig& cfg, const std::string& node, int updates) {
  auto le = local_env(net, prof, cfg, node);
  auto ce = central_env(net, prof, cfg, node);
  TrainComparison c;
  c.node = node;
  c.local = rl::train_agent(le, cfg.train.ppo, updates, cfg.seed + 6);
  c.central = rl::train_agent(ce, cfg.train.ppo, updates, cfg.seed + 6);
  c.local_final = rl::smoothed_rewards(c.local.curve, cfg.train.smoothing_window).back();
  c.central_final = rl::smoothed_rewards(c.central.curve, cfg.train.smoothing_window).back();
  c.local_ms = mean_wall_ms(c.local.curve);
  c.central_ms = mean_wall_ms(c.central.curve);
  return c;
}

inline double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale > 0.0 ? std::abs(a - b) / scale : 0.0;
}

inline void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  RunContext run(cfg, "train", out);
  const auto net = load_network(cfg);
  cfg.validate(net);
  const auto prof = load_profile(cfg, cfg.train.history_days, cfg.profile.synthetic_seed);
  auto summary = run.open("train_summary.csv");
  summary << "node,local_final_reward,central_final_reward,relative_gap\n";
  std::ostringstream timing;
  timing << "node,local_ms_per_update,central_ms_per_update,ratio\n";
  for (const auto& node : cfg.ess.nodes) {
    const auto c = run.stage("train_" + node, [&] { return train_node(net, prof, cfg, node, cfg.train.updates); });
    {
      auto f = run.open("train_local_" + node + ".csv");
      rl::write_telemetry_csv(f, c.local.curve, false);
    }
    {
      auto f = run.open("train_central_" + node + ".csv");
      rl::write_telemetry_csv(f, c.central.curve, false);
    }
    {
      auto f = run.open("agent_" + node + ".ckpt");
      approx::write_checkpoint(f, rl::policy_checkpoint(c.local));
    }
    summary << node << ',' << text::fmt(c.local_final) << ',' << text::fmt(c.central_final) << ','
            << text::fmt(relative_gap(c.local_final, c.central_final)) << "\n";
    timing << node << ',' << text::fmt(c.local_ms) << ',' << text::fmt(c.central_ms) << ','
           << text::fmt(c.central_ms > 0.0 ? c.local_ms / c.central_ms : 0.0) << "\n";
  }
  // Wall-clock figures vary between runs; they are kept apart from the metrics.
  auto f = run.open("timing_train.csv");
  f << timing.str();
  run.finish();
}

// -------------------------------------------------------------- coordinate

inline CoordinationScenario scenario_for(const ExperimentConfig& cfg) {
  auto sc = cfg.coordination.scenario;
  sc.nodes = cfg.ess.nodes;
  sc.nodes.insert(sc.nodes.end(), cfg.coordination.extra_nodes.begin(), cfg.coordination.extra_nodes.end());
  sc.e_rated_wh = cfg.ess.e_rated_kwh * 1e3;
  sc.p_rated_w = cfg.ess.p_max_kw * 1e3;
  sc.margin = cfg.coordination.solver.margin;
  sc.seed = cfg.seed;
  return sc;
}

// Applies the storage limits and the solver settings of the configuration.
inline void apply_settings(const ExperimentConfig& cfg, PreparedCoordination& p) {
  for (auto& a : p.agents) {
    const auto dt = a.spec.dt_h;
    a.spec = cfg.ess_spec(a.spec.node);
    a.spec.dt_h = dt;
  }
  p.cfg.coord = cfg.coordination.solver;
  p.cfg.coord.beta = cfg.coordination.beta;
  p.cfg.soc_init = cfg.ess.soc_init;
}

inline void write_violation_summary(std::ostream& os, const coord::OnlineResult& base, const coord::OnlineResult& ctl) {
  os << "node,violation_steps_uncoordinated,violation_steps_coordinated,flagged_residual_steps\n";
  for (std::size_t k = 0; k < base.agent_nodes.size(); ++k) {
    std::size_t flagged = 0;
    for (std::size_t s = 0; s < ctl.steps(); ++s) {
      const auto& r = ctl.row(s, k);
      flagged += r.violation && r.infeasible;
    }
    os << base.agent_nodes[k] << ',' << base.violation_steps[k] << ',' << ctl.violation_steps[k] << ',' << flagged
       << "\n";
  }
}

inline void cmd_coordinate(const ExperimentConfig& cfg, const std::filesystem::path& out, bool beta_sweep) {
  RunContext run(cfg, "coordinate", out);
  auto net = load_network(cfg);
  cfg.validate(net);
  const auto sc = scenario_for(cfg);
  auto builder = cfg.profile.path.empty()
                     ? CoordinationBuilder(net, sc)
                     : CoordinationBuilder(net, sc, load_profile(cfg, sc.days, sc.profile_seed));
  const std::size_t n = cfg.ess.nodes.size();
  auto small = run.stage("prepare_" + std::to_string(n), [&] {
    auto p = builder.prepare(builder.rule_agents(n), cfg.neighborhood_indices());
    apply_settings(cfg, p);
    return p;
  });
  const auto base = run.stage("uncoordinated", [&] { return builder.run(small, coord::OnlineMode::uncoordinated); });
  const auto ctl = run.stage("coordinated",
                             [&] { return builder.run(small, coord::OnlineMode::coordinated, cfg.coordination.beta); });
  {
    auto f = run.open("episode_uncoordinated.csv");
    coord::write_episode_csv(f, base);
  }
  {
    auto f = run.open("episode_coordinated.csv");
    coord::write_episode_csv(f, ctl);
  }
  {
    auto f = run.open("coordinate_summary.csv");
    write_violation_summary(f, base, ctl);
  }
  if (beta_sweep) {
    std::vector<coord::SweepRow> rows;
    json feasible = json::object();
    auto sweep = [&](PreparedCoordination& p) {
      const auto r = builder.sweep(p, cfg.coordination.sweep_betas);
      feasible[std::to_string(p.agents.size())] = feasible_betas(r, sc.residual_tol);
      rows.insert(rows.end(), r.begin(), r.end());
    };
    run.stage("sweep_" + std::to_string(n), [&] { sweep(small); });
    if (!cfg.coordination.extra_nodes.empty()) {
      const std::size_t m = n + cfg.coordination.extra_nodes.size();
      auto large = run.stage("prepare_" + std::to_string(m), [&] {
        auto p = builder.prepare(builder.rule_agents(m));
        apply_settings(cfg, p);
        return p;
      });
      run.stage("sweep_" + std::to_string(m), [&] { sweep(large); });
    }
    {
      auto f = run.open("beta_sweep.csv");
      coord::write_sweep_csv(f, rows);
    }
    auto f = run.open("beta_feasible.json");
    f << json{{"residual_tol_pu", sc.residual_tol}, {"feasible_betas", feasible}}.dump(2) << "\n";
  }
  run.finish();
}

// ------------------------------------------------------------------ report

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::istringstream in(text::read_file(p.string()));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!text::trim(line).empty()) rows.push_back(text::split(line));
  if (rows.empty()) throw SchemaError("empty file '" + p.string() + "'");
  return rows;
}

inline std::size_t column(const std::vector<std::string>& header, const std::string& name, const std::string& file) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaError("'" + file + "' lacks column '" + name + "'", 1);
  return static_cast<std::size_t>(it - header.begin());
}

struct EpisodeStats {
  std::map<std::string, std::size_t> violations;
  double energy_kwh = 0.0;
};

// Violation steps per node and storage throughput, recomputed from an
// episode log.
inline EpisodeStats episode_stats(const std::filesystem::path& p, double dt_h) {
  const auto rows = read_csv(p);
  const auto f = p.filename().string();
  const auto c_node = column(rows[0], "node", f), c_flag = column(rows[0], "violation_flag", f),
             c_a = column(rows[0], "a_star", f);
  EpisodeStats s;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw SchemaError("column count differs from header", i + 1);
    s.violations[rows[i][c_node]] += text::parse_int(rows[i][c_flag], i + 1) != 0;
    s.energy_kwh += std::abs(text::parse_double(rows[i][c_a], i + 1)) * dt_h / 1e3;
  }
  return s;
}

}  // namespace detail

// Summary of whatever the commands left in `dir`.
inline json cmd_report(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("run directory '" + dir.string() + "' does not exist");
  json rep = json::object();
  std::vector<std::string> rows_csv;
  bool any = false;
  if (std::filesystem::exists(dir / "simulate_summary.json")) {
    rep["baseline"] = json::parse(text::read_file((dir / "simulate_summary.json").string()));
    any = true;
  }
  if (std::filesystem::exists(dir / "correction_summary.csv")) {
    const auto rows = detail::read_csv(dir / "correction_summary.csv");
    json c = json::array();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      json r;
      for (std::size_t j = 0; j < rows[0].size() && j < rows[i].size(); ++j)
        r[rows[0][j]] = j == 0 ? json(rows[i][j]) : json(text::parse_double(rows[i][j], i + 1));
      c.push_back(r);
    }
    rep["correction"] = c;
    any = true;
  }
  if (std::filesystem::exists(dir / "train_summary.csv")) {
    const auto rows = detail::read_csv(dir / "train_summary.csv");
    json t = json::array();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& node = rows[i][0];
      json r{{"node", node},
             {"local_final_reward", text::parse_double(rows[i][1], i + 1)},
             {"central_final_reward", text::parse_double(rows[i][2], i + 1)}};
      const auto curve = dir / ("train_local_" + node + ".csv");
      if (std::filesystem::exists(curve)) {
        const auto cr = detail::read_csv(curve);
        const auto col = detail::column(cr[0], "mean_reward", curve.filename().string());
        double lo = 1e300, hi = -1e300, sum = 0.0;
        for (std::size_t k = 1; k < cr.size(); ++k) {
          const double v = text::parse_double(cr[k][col], k + 1);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          sum += v;
        }
        const double n = static_cast<double>(cr.size() - 1);
        if (n > 0) r["local_reward_stats"] = {{"min", lo}, {"max", hi}, {"mean", sum / n}, {"updates", cr.size() - 1}};
      }
      t.push_back(r);
    }
    rep["train"] = t;
    any = true;
  }
  const auto unc = dir / "episode_uncoordinated.csv", ctl = dir / "episode_coordinated.csv";
  if (std::filesystem::exists(unc) && std::filesystem::exists(ctl)) {
    const auto a = detail::episode_stats(unc, 0.25), b = detail::episode_stats(ctl, 0.25);
    json nodes = json::array();
    std::ostringstream csv;
    csv << "node,baseline_violation_steps,controlled_violation_steps,delta\n";
    long long total = 0;
    for (const auto& [node, v] : a.violations) {
      const auto w = b.violations.count(node) ? b.violations.at(node) : 0;
      const long long d = static_cast<long long>(w) - static_cast<long long>(v);
      total += d;
      nodes.push_back({{"node", node}, {"baseline", v}, {"controlled", w}, {"delta", d}});
      csv << node << ',' << v << ',' << w << ',' << d << "\n";
    }
    rep["coordination"] = {{"nodes", nodes},
                           {"violation_delta_total", total},
                           {"energy_kwh_uncoordinated", a.energy_kwh},
                           {"energy_kwh_coordinated", b.energy_kwh}};
    std::ofstream f(dir / "report_violations.csv", std::ios::binary);
    f << csv.str();
    any = true;
  }
  if (std::filesystem::exists(dir / "beta_feasible.json")) {
    rep["beta_sweep"] = json::parse(text::read_file((dir / "beta_feasible.json").string()));
    any = true;
  }
  if (!any) throw ConfigError("run directory '" + dir.string() + "' holds no results");
  std::ofstream f(dir / "report.json", std::ios::binary);
  f << rep.dump(2) << "\n";
  return rep;
}

}  // namespace voltreg::experiment
