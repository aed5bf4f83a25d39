#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "doerl/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Doubly oracle-efficient RL experiments"};
  app.require_subcommand(1);

  std::string run_config;
  std::vector<std::uint64_t> seeds;
  int workers = 1;
  std::string run_out;
  auto* run = app.add_subcommand("run", "run every seed of an experiment config");
  run->add_option("config", run_config, "experiment config (JSON)")->required();
  run->add_option("--seeds", seeds, "override the config's seed list");
  run->add_option("--workers", workers, "parallel seeds")->check(CLI::PositiveNumber);
  run->add_option("--out", run_out, "override the output directory");

  std::vector<std::string> dirs;
  std::string compare_out = "comparison";
  auto* compare = app.add_subcommand("compare", "aggregate run directories into a table and a plot");
  compare->add_option("dirs", dirs, "run directories")->required();
  compare->add_option("--out", compare_out, "output directory");

  std::string validate_config;
  auto* validate = app.add_subcommand("validate", "run the fast invariant suite for a config");
  validate->add_option("config", validate_config, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run) {
    doerl::RunOverrides ov;
    if (!seeds.empty()) ov.seeds = seeds;
    ov.workers = workers;
    if (!run_out.empty()) ov.output_dir = run_out;
    return doerl::cmd_run(run_config, ov, std::cerr);
  }
  if (*compare) return doerl::cmd_compare(dirs, compare_out, std::cerr);
  return doerl::cmd_validate(validate_config, std::cout, std::cerr);
}
