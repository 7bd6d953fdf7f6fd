// Command-line front end: selects a verification suite, assembles the
// experiment config from (in increasing precedence) built-in defaults, the
// --config JSON file, QLM_-prefixed environment variables, and command-line
// flags, then runs the suite.
//
// Exit codes: 0 every check passed, 1 a check failed or a guarded runtime
// error surfaced, 2 the configuration was rejected.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qlm/errors.hpp"
#include "qlm/experiment.hpp"
#include "qlm/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "Verification suites for quasi-local mass experiments on static "
      "spherically symmetric slices"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  int bandlimit = 0;
  double mass = 0.0;
  app.add_option("--config", config_path, "JSON config file (schema_version 1)");
  app.add_option("--out", out, "report output path (default: stdout)");
  app.add_option("--seed", seed, "random seed (overrides config and QLM_SEED)");
  app.add_option("--bandlimit", bandlimit, "working bandlimit, at least 7");
  app.add_option("--mass", mass, "ambient mass parameter, nonnegative");

  const char* suites[][2] = {
      {"identities", "ambient and surface identity residual suite"},
      {"lemma2", "first variation of the energy: FD against the closed form"},
      {"continuation", "isometric continuation family along a normal flow"},
      {"penrose", "energy sign check on a surface pair"},
  };
  for (const auto& [name, description] : suites) {
    app.add_subcommand(name, description);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& err) {
    app.exit(err);  // prints the diagnostic
    return 2;
  }

  try {
    qlm::ExperimentConfig config;
    if (!config_path.empty()) {
      config = qlm::config_from_json(qlm::load_json(config_path));
    }
    qlm::apply_env_overrides(config);
    if (app.count("--out") > 0) config.out = out;
    if (app.count("--seed") > 0) config.seed = seed;
    if (app.count("--bandlimit") > 0) config.bandlimit = bandlimit;
    if (app.count("--mass") > 0) config.mass = mass;
    config.kind = app.get_subcommands().front()->get_name();

    const qlm::RunOutcome outcome = qlm::run_guarded(config);
    if (!outcome.diagnostic.empty()) {
      std::cerr << outcome.diagnostic << '\n';
    }
    return outcome.exit_code;
  } catch (const qlm::ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
}
