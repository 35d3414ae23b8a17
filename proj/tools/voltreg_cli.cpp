#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "voltreg/errors.hpp"
#include "voltreg/experiment/commands.hpp"
#include "voltreg/experiment/config.hpp"

using namespace voltreg;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalFailure = 3;

struct Common {
  std::string config;
  std::optional<unsigned long long> seed;
  std::string out;
};

experiment::ExperimentConfig resolve(const Common& c) {
  auto cfg = c.config.empty() ? experiment::ExperimentConfig{} : experiment::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::string out_dir(const Common& c, const experiment::ExperimentConfig& cfg) {
  return c.out.empty() ? cfg.output_dir : c.out;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment configuration (JSON)");
  app->add_option("--seed", c.seed, "overrides the configured seed");
  app->add_option("--out", c.out, "output directory (default: from the configuration)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voltage regulation with locally trained storage agents"};
  app.require_subcommand(1);
  Common common;
  bool sweep = false;

  auto* sim = app.add_subcommand("simulate", "uncontrolled power flow over the load profile");
  auto* fit = app.add_subcommand("fit-correction", "fit and evaluate the local voltage estimators");
  auto* train = app.add_subcommand("train", "train storage agents in the local and the full-feeder environment");
  auto* coord = app.add_subcommand("coordinate", "deploy agents with and without online coordination");
  auto* report = app.add_subcommand("report", "summarise a run directory as JSON");
  for (auto* s : {sim, fit, train, coord, report}) add_common(s, common);
  coord->add_flag("--beta-sweep", sweep, "also sweep the coordination scaler for the small and the doubled agent set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (report->parsed()) {
      std::string dir = common.out;
      if (dir.empty()) dir = resolve(common).output_dir;
      std::cout << experiment::cmd_report(dir).dump(2) << "\n";
      return kOk;
    }
    const auto cfg = resolve(common);
    const auto out = out_dir(common, cfg);
    if (sim->parsed()) experiment::cmd_simulate(cfg, out);
    if (fit->parsed()) experiment::cmd_fit_correction(cfg, out);
    if (train->parsed()) experiment::cmd_train(cfg, out);
    if (coord->parsed()) experiment::cmd_coordinate(cfg, out, sweep);
    std::cout << "wrote " << out << "\n";
    return kOk;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
