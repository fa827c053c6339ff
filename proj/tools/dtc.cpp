#include <array>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtc/harness.hpp"

namespace {

struct Setting {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr std::array settings{
    Setting{"--seed", "seed", "random seed"},
    Setting{"--dynamics", "dynamics", "naive | fixation"},
    Setting{"--initial", "initial", "equilibrium | special | uniform | file:PATH"},
    Setting{"--max-days", "max_days", "day budget"},
    Setting{"--snapshot-days", "snapshot_days", "comma-separated days to snapshot"},
    Setting{"--out", "out", "output directory"},
    Setting{"--epsilon", "epsilon", "tolerance for verify (rational)"},
    Setting{"--stuck-threshold", "stuck_threshold", "fixation days without progress before diagnosis"},
    Setting{"--max-candidates", "max_candidates", "random candidates per fixation day"},
    Setting{"--profile", "profile", "profile CSV for verify"},
    Setting{"--seeds", "seeds", "seed list for sweep, e.g. 1-10 or 1,4,7"},
    Setting{"--user-sizes", "user_sizes", "user sizes for sweep at fixed total mass"},
    Setting{"--node-budget", "node_budget", "node limit for the acyclicity graph"},
};

using CommandFn = int (*)(const dtc::ExperimentConfig&, std::ostream&);

struct Subcommand {
  CLI::App* app = nullptr;
  CommandFn run = nullptr;
  std::string config;
  bool edge_list = false;
  std::array<std::string, settings.size()> values;
};

int sweep(const dtc::ExperimentConfig& c, std::ostream& log) { return dtc::cmd_sweep(c, log); }

dtc::ExperimentConfig resolve(const Subcommand& s) {
  dtc::ExperimentConfig cfg = s.config.empty() ? dtc::ExperimentConfig{} : dtc::load_config(s.config);
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (s.app->count(settings[i].flag) == 0) continue;
    try {
      dtc::apply_setting(cfg, settings[i].key, s.values[i]);
    } catch (const dtc::ConfigError& e) {
      throw dtc::ConfigError(std::string(settings[i].flag) + ": " + e.what());
    }
  }
  if (s.edge_list) cfg.edge_list = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Departure-time choice on a discrete grid: equilibria, learning dynamics and verification"};
  app.require_subcommand(1);

  const struct {
    const char* name;
    const char* help;
    CommandFn run;
  } commands[] = {
      {"equilibrium", "write the closed-form equilibrium and its summary", dtc::cmd_equilibrium},
      {"run", "run the learning dynamics from an initial profile", dtc::cmd_run},
      {"verify", "check the epsilon-Nash condition for a profile file", dtc::cmd_verify},
      {"sweep", "run the dynamics over a grid of seeds and user sizes", sweep},
      {"acyclicity", "build the exhaustive better-response graph", dtc::cmd_acyclicity},
  };

  std::vector<std::unique_ptr<Subcommand>> subs;
  for (const auto& c : commands) {
    auto s = std::make_unique<Subcommand>();
    s->app = app.add_subcommand(c.name, c.help);
    s->run = c.run;
    s->app->add_option("--config", s->config, "configuration file (key = value)");
    for (std::size_t i = 0; i < settings.size(); ++i) s->app->add_option(settings[i].flag, s->values[i], settings[i].help);
    s->app->add_flag("--edge-list", s->edge_list, "write the better-response edge list (acyclicity)");
    subs.push_back(std::move(s));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? dtc::exit_ok : dtc::exit_usage;
  }

  for (const auto& s : subs) {
    if (s->app->parsed()) return dtc::guarded([&] { return s->run(resolve(*s), std::cout); }, std::cerr);
  }
  return dtc::exit_usage;
}
