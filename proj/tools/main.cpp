// Command-line driver: `thermistor run --config <path> [--out <dir>] [--seed <u64>]`
// executes one of the six scenarios and writes CSV artifacts;
// `thermistor validate --config <path>` checks the structural hypotheses.
// Exit codes: 0 ok, 2 validation failure, 3 solver non-convergence,
// 4 outside the local basin, 5 I/O.

#include "thermistor/errors.hpp"
#include "thermistor/run_config.hpp"
#include "thermistor/scenarios.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"thermistor: simulation, stability and null-control toolkit for the coupled "
               "temperature/potential system"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;

  CLI::App* run = app.add_subcommand("run", "execute the scenario named in the config");
  run->add_option("--config", config_path, "config file (key = value with [sections])")
      ->required();
  run->add_option("--out", out_dir, "output directory (default: [output] directory)");
  run->add_option("--seed", seed, "random seed override")->each([&](const std::string&) {
    seed_set = true;
  });

  CLI::App* validate = app.add_subcommand("validate", "check the hypotheses on the config's data");
  validate->add_option("--config", config_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    thermistor::RunConfig config = thermistor::parse_config(config_path);
    if (app.got_subcommand(validate)) return thermistor::run_validate(config);

    if (seed_set) config.seed = seed;
    const std::string dir = out_dir.empty() ? config.output_dir : out_dir;
    const auto start = std::chrono::steady_clock::now();
    const thermistor::RunReport rep = thermistor::run_scenario(config, dir);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::cout << "scenario " << rep.scenario << ": "
              << (rep.exit_code == 0 ? "ok" : "FAILED (" + rep.message + ")") << "\n";
    for (const auto& [k, v] : rep.metrics) std::cout << "  " << k << " = " << v << "\n";
    std::cout << "  wall_clock_s = " << wall << "\n  artifacts in " << dir << "\n";
    return rep.exit_code;
  } catch (const thermistor::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const thermistor::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
