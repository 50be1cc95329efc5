#include <climits>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "levsq/config.hpp"
#include "levsq/errors.hpp"

namespace {

struct Overrides {
  std::string config_path;
  long long seed = LLONG_MIN;
  std::string out;
  std::string mode;
  int ensemble = INT_MIN;
};

void add_common_options(CLI::App* sub, Overrides& ov) {
  sub->add_option("--config", ov.config_path,
                  "configuration file (flat key = value, supports include)");
  sub->add_option("--seed", ov.seed, "RNG seed (non-negative integer)");
  sub->add_option("--out", ov.out, "output CSV path (default: stdout)");
  sub->add_option("--mode", ov.mode, "deterministic | stochastic");
  sub->add_option("--ensemble", ov.ensemble,
                  "number of stochastic trajectories");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "levsqueeze: momentum squeezing and impulse sensing for an "
      "optically levitated nanosphere"};
  app.require_subcommand(1);

  Overrides ov;
  using Command = void (*)(const levsq::RunConfig&);
  std::vector<std::pair<CLI::App*, Command>> dispatch = {
      {app.add_subcommand("budget", "decoherence and event rate table"),
       &levsq::cmd_budget},
      {app.add_subcommand("sweep-decoherence",
                          "squeezing vs decoherence-to-frequency ratio"),
       &levsq::cmd_sweep_decoherence},
      {app.add_subcommand("sweep-frequency",
                          "squeezing vs soft/stiff trap frequency ratio"),
       &levsq::cmd_sweep_frequency},
      {app.add_subcommand("sweep-na",
                          "trap frequency ratios vs numerical aperture"),
       &levsq::cmd_sweep_na},
      {app.add_subcommand("run", "one protocol run or a seeded ensemble"),
       &levsq::cmd_run},
  };
  for (auto& [sub, fn] : dispatch) add_common_options(sub, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    levsq::ConfigMap cfg =
        ov.config_path.empty()
            ? levsq::parse_config_text("include table1", "<default>")
            : levsq::load_config(ov.config_path);
    if (ov.seed != LLONG_MIN) cfg.set("seed", std::to_string(ov.seed));
    if (!ov.out.empty()) cfg.set("out", ov.out);
    if (!ov.mode.empty()) cfg.set("mode", ov.mode);
    if (ov.ensemble != INT_MIN)
      cfg.set("ensemble", std::to_string(ov.ensemble));
    const levsq::RunConfig rc = levsq::RunConfig::from(cfg);

    for (auto& [sub, fn] : dispatch) {
      if (sub->parsed()) {
        fn(rc);
        return 0;
      }
    }
    std::cerr << "error: no subcommand selected\n";
    return 2;
  } catch (const levsq::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
