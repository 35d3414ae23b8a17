#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support.hpp"
#include "voltreg/approx/checkpoint.hpp"
#include "voltreg/experiment/commands.hpp"
#include "voltreg/experiment/config.hpp"
#include "voltreg/rl/train.hpp"
#include "voltreg/text.hpp"

using namespace voltreg;
using namespace voltreg::experiment;
namespace fs = std::filesystem;

namespace {

ExperimentConfig default_config() { return load_config(testsupport::source_path("configs/default.json")); }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("voltreg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VOLTREG_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small configuration that keeps CLI runs short.
fs::path small_config(const fs::path& dir) {
  auto j = to_json(default_config());
  j["network_path"] = testsupport::source_path("data/cigre_lv_residential.topo");
  j["profile"]["synthetic_days"] = 1;
  const auto p = dir / "small.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST(Config, DefaultFileValidates) {
  const auto cfg = default_config();
  const auto net = load_network(cfg);
  EXPECT_NO_THROW(cfg.validate(net));
  EXPECT_EQ(cfg.ess.nodes, (std::vector<std::string>{"R9", "R14", "R16"}));
  EXPECT_EQ(cfg.coordination.solver.v_min, cfg.v_min_pu);
  EXPECT_EQ(cfg.train.ppo.reward.v_max, cfg.v_max_pu);
}

TEST(Config, RoundTripsThroughJson) {
  const auto cfg = default_config();
  const auto again = parse_config(to_json(cfg).dump(), cfg.base_dir);
  EXPECT_EQ(to_json(again).dump(), to_json(cfg).dump());
  EXPECT_EQ(config_hash(again), config_hash(cfg));
}

TEST(Config, UnknownKeyIsRejected) {
  try {
    parse_config(R"({"ess": {"nodes": ["R9"], "p_max": 60}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("ess.p_max"), std::string::npos);
  }
  EXPECT_THROW(parse_config(R"({"sed": 3})"), ConfigError);
}

TEST(Config, WrongTypeNamesTheKey) {
  try {
    parse_config(R"({"train": {"ppo": {"gamma": "high"}}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.ppo.gamma"), std::string::npos);
  }
}

TEST(Config, SyntaxErrorCarriesLine) {
  try {
    parse_config("{\n  \"seed\": 3,\n  \"ess\": {\n}}}");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(Config, SemanticChecks) {
  const auto net = testsupport::cigre();
  auto bad = [&](const std::string& text) { return parse_config(text).validate(net); };
  EXPECT_THROW(bad(R"({"coordination": {"beta": 1.5}})"), ConfigError);
  EXPECT_THROW(bad(R"({"ess": {"nodes": ["R9", "R99"]}})"), ConfigError);
  EXPECT_THROW(bad(R"({"ess": {"nodes": ["R9", "R9"]}})"), ConfigError);
  EXPECT_THROW(bad(R"({"ess": {"soc_init": 0.95}})"), ConfigError);
  EXPECT_THROW(bad(R"({"band": {"v_min_pu": 1.1}})"), ConfigError);
  EXPECT_THROW(bad(R"({"coordination": {"sweep_betas": [0.5, 2.0]}})"), ConfigError);
  EXPECT_THROW(bad(R"({"correction": {"meter_node": "nowhere"}})"), ConfigError);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/voltreg.json"), ConfigError);
}

TEST(Checkpoint, PolicyRoundTrip) {
  std::mt19937_64 rng(3);
  rl::PpoConfig cfg;
  auto ag = rl::make_agent(4, {-60e3, 60e3}, cfg, rng);
  ag.policy.norm.shift = {0.1, 0.2, 0.3, 0.4};
  ag.policy.norm.scale = {1.0, 2.0, 3.0, 4.0};
  std::stringstream ss;
  approx::write_checkpoint(ss, rl::policy_checkpoint(ag));
  const auto back = rl::policy_from_checkpoint(approx::read_checkpoint(ss));
  const std::vector<double> s{0.5, -0.2, 1.0, 0.3};
  EXPECT_EQ(back.act(s), ag.policy.act(s));
  EXPECT_EQ(back.log_std, ag.policy.log_std);
  approx::Checkpoint other;
  other.kind = "dense-net";
  EXPECT_THROW(rl::policy_from_checkpoint(other), SchemaError);
}

TEST(Cli, SimulateIsReproducible) {
  const auto dir = scratch("cli_sim");
  const auto cfg = small_config(dir);
  ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + (dir / "b").string()), 0);
  for (const char* f : {"baseline_voltages.csv", "baseline_flows.csv", "baseline_violations.csv",
                        "simulate_summary.json"})
    EXPECT_EQ(text::read_file((dir / "a" / f).string()), text::read_file((dir / "b" / f).string())) << f;
  EXPECT_TRUE(fs::exists(dir / "a" / "manifest_simulate.json"));
  EXPECT_EQ(run_cli("report --out " + (dir / "a").string()), 0);
}

TEST(Cli, ErrorsGiveExitCodeTwo) {
  const auto dir = scratch("cli_err");
  EXPECT_EQ(run_cli("simulate --config /nonexistent.json --out " + dir.string()), 2);
  std::ofstream(dir / "bad.json") << R"({"coordination": {"beta": 3}})";
  EXPECT_EQ(run_cli("coordinate --config " + (dir / "bad.json").string() + " --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("report --out " + (dir / "empty").string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Report, EmptyDirectoryIsAnError) {
  const auto dir = scratch("report_empty");
  EXPECT_THROW(cmd_report(dir), ConfigError);
  EXPECT_THROW(cmd_report(dir / "missing"), ConfigError);
}
