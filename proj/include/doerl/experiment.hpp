#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "doerl/driver.hpp"
#include "doerl/io.hpp"
#include "doerl/linear_mdp.hpp"
#include "doerl/mdp.hpp"

namespace doerl {

enum class Mode { Tabular, Linear, Baseline };

std::string mode_name(Mode mode);

struct GeneratedEnvironment {
  int num_states = 4;
  int num_actions = 2;
  int horizon = 3;
  int dim = 4;  ///< linear mode only
  std::uint64_t seed = 0;
};

struct ModelClassSpec {
  std::size_t size = 8;
  std::uint64_t seed = 0;
  double perturbation = 0.3;
};

struct ScheduleSpec {
  EpochSchedule::Kind kind = EpochSchedule::Kind::KnownHorizon;
  long long rounds = 0;  ///< T for known_T, budget for doubling
};

struct ExperimentConfig {
  Mode mode = Mode::Tabular;
  std::variant<GeneratedEnvironment, std::string> environment;  ///< generator or file path
  ModelClassSpec model_class;
  ScheduleSpec schedule;
  double delta = 0.05;
  Knobs knobs;
  OracleRate rate;
  SolverConfig solver;
  double epsilon = 0.1;  ///< baseline exploration rate
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "out";
  std::string base_dir;  ///< directory of the config file; relative paths resolve against it
};

/// Strict parser: unknown keys, wrong types and out-of-range values throw SchemaError.
ExperimentConfig parse_config(const Json& doc, const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path);

/// Dirichlet(1) transition rows, rewards uniform in [0, 1/H], start state 0.
TabularMdp random_tabular_mdp(int S, int A, int H, Rng& rng);

/// Truth plus size-1 perturbations placed at random positions; each transition row is
/// mixed with an independent random row at `rate`, rewards are jittered within [0,1/H].
TabularModelClass perturbed_class(const TabularMdp& truth, std::size_t size, double rate, Rng& rng);

/// Simplex features, mu columns that are distributions over next states, theta >= 0
/// with ||theta|| <= 1 and rewards in [0, 1/H].
LinearMdp random_linear_mdp(int S, int A, int d, int H, Rng& rng);

/// Linear analogue of perturbed_class; features are shared by every member.
LinearModelClass perturbed_linear_class(const LinearMdp& truth, std::size_t size, double rate, Rng& rng);

struct Instance {
  std::optional<TabularMdp> tabular;
  std::optional<LinearMdp> linear;
  TabularModelClass tabular_class;
  LinearModelClass linear_class;
};

/// Builds the environment and model class a config describes.
Instance build_instance(const ExperimentConfig& config);

EpochSchedule make_schedule(const ScheduleSpec& spec, int horizon);

/// Runs one seed of a config.
RunLog run_experiment(const ExperimentConfig& config, const Instance& instance, std::uint64_t seed);

struct RunOverrides {
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<int> workers;
  std::optional<std::string> output_dir;
};

/// Exit codes: 0 success, 2 config error, 3 runtime failure.
int cmd_run(const std::string& config_path, const RunOverrides& overrides, std::ostream& err);

struct ComparisonRow {
  std::string agent;
  long long rounds = 0;
  int horizon = 0;
  std::size_t seeds = 0;
  double regret_mean = 0.0;
  double regret_median = 0.0;
  double regret_q25 = 0.0;
  double regret_q75 = 0.0;
  long long estimation_calls = 0;
  long long planning_calls = 0;
  double wall_time_mean = 0.0;
  std::vector<double> mean_curve;  ///< mean cumulative regret per round
};

/// One row per (agent, T) over every `*_seed*.json` sidecar in `dirs`.  Mixed horizons,
/// missing CSVs and seeds that disagree on oracle counts are rejected.
std::vector<ComparisonRow> build_comparison(const std::vector<std::string>& dirs);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

/// Cumulative-regret curves on a log-x axis and a bar panel of oracle calls.
std::string comparison_svg(const std::vector<ComparisonRow>& rows);

/// Writes comparison.csv and comparison.svg.  Exit codes: 0, 2 bad input, 3 I/O failure.
int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_dir, std::ostream& err);

struct InvariantCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant suite on the instance a config describes.
std::vector<InvariantCheck> validate_instance(const ExperimentConfig& config);

/// Exit codes: 0 all pass, 1 an invariant failed, 2 config error.
int cmd_validate(const std::string& config_path, std::ostream& out, std::ostream& err);

}  // namespace doerl
