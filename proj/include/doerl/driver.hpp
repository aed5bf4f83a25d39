#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "doerl/estimation.hpp"
#include "doerl/linear_mdp.hpp"
#include "doerl/mdp.hpp"
#include "doerl/policy_opt.hpp"

namespace doerl {

/// Epoch boundaries 0 = tau_0 < tau_1 < ... < tau_N in units of per-segment episodes.
/// Epoch m runs H * (tau_m - tau_{m-1}) episodes split into H equal segments.
struct EpochSchedule {
  enum class Kind { KnownHorizon, Doubling };

  Kind kind = Kind::KnownHorizon;
  int horizon = 1;
  std::vector<long long> taus;   ///< includes the leading 0
  long long requested_rounds = 0;
  bool truncated = false;        ///< requested rounds were cut (not a multiple of H, or final epoch capped)

  int num_epochs() const { return static_cast<int>(taus.size()) - 1; }
  long long epoch_length(int m) const { return taus[m] - taus[m - 1]; }
  /// Total episodes T = H * tau_N.
  long long total_rounds() const { return horizon * taus.back(); }
  /// tau_m - tau_{m-1} >= tau_{m-1} for every m >= 2.
  bool satisfies_growth() const;
};

/// tau_m = min(ceil(2 (T/H)^{1 - 2^{-m}}), T/H), deduplicated; T truncated down to a
/// multiple of H.
EpochSchedule schedule_known_T(long long rounds, int horizon);

/// tau_m = 2^m until the budget is reached; the last epoch is cut to exhaust it.
EpochSchedule schedule_doubling(long long budget, int horizon);

/// Per-epoch confidence level: delta / (2 N^2) for known-horizon schedules,
/// delta / (4 m^2) for doubling schedules.
double epoch_confidence(const EpochSchedule& schedule, int m, double delta);

/// Multipliers on the theorem hyperparameters; all ones reproduce the formulas exactly.
struct Knobs {
  double c_beta = 1.0;
  double c_eta = 1.0;
  double c_zeta = 1.0;
};

void validate(const Knobs& knobs);

struct HyperParams {
  double beta = 0.0;
  double eta = 0.0;
  double zeta = 0.0;
  double rate = 0.0;        ///< E_m
  double confidence = 0.0;  ///< delta used inside E_m
};

/// beta = c_beta (9 - e^2)/2 E, eta = c_eta / (1360 (H+1)^3 S^4 A^4 sqrt(E)),
/// zeta = c_zeta 136 (H+1)^2 S^3 A^3 / sqrt(E).
HyperParams tabular_hyperparams_from_rate(double rate, int S, int A, int H, const Knobs& knobs);

/// beta = c_beta E^2, eta = c_eta / (40 (c^2+1)(c^2+c+11) H^2 E^{1/5}),
/// zeta = c_zeta sqrt(10 (c^2+1)(c^2+c+11)) / (sqrt(d) E^{2/5}).
HyperParams linear_hyperparams_from_rate(double rate, int d, int H, double c_class, const Knobs& knobs);

HyperParams hyperparams_tabular(int m, const EpochSchedule& schedule, double delta, int S, int A, int H,
                                const OracleRate& rate, std::size_t class_size, const Knobs& knobs);

HyperParams hyperparams_linear(int m, const EpochSchedule& schedule, double delta, int d, int H, double c_class,
                               const OracleRate& rate, std::size_t class_size, const Knobs& knobs);

struct OracleCounters {
  long long estimation_calls = 0;
  long long planning_calls = 0;
  long long episodes_executed = 0;
};

struct SegmentRecord {
  int epoch = 0;    ///< 1-based
  int segment = 0;  ///< 1-based
  long long episodes = 0;
  std::size_t chosen_model = 0;
  long long trusted_size = -1;        ///< size of the trusted set built after this segment (-1: none)
  std::vector<double> retained_mass;  ///< trusted mass of the executed policy, layers 1..segment
  double policy_regret = 0.0;         ///< exact regret of the executed policy
  double pseudo_regret = 0.0;         ///< pseudo-regret under the previous aggregated model
  SolverDiagnostics solver;
};

struct EpochRecord {
  int epoch = 0;
  long long tau_begin = 0;
  long long tau_end = 0;
  HyperParams hyper;
  double epsilon = 0.0;          ///< empirical additive value-error term of this epoch
  double recursion_delta = 0.0;  ///< delta_m of the iterative regret recursion
};

struct RunLog {
  std::string agent;  ///< "doerl-tabular", "doerl-linear" or "baseline-replan"
  int horizon = 0;
  long long total_rounds = 0;
  std::uint64_t seed = 0;
  EpochSchedule schedule;
  std::vector<int> round_epoch;    ///< per round, 1-based
  std::vector<int> round_segment;  ///< per round, 1-based
  std::vector<double> round_regret;
  std::vector<SegmentRecord> segments;
  std::vector<EpochRecord> epochs;
  OracleCounters counters;
  double cumulative_regret = 0.0;
  double c_class = 0.0;  ///< normalization constant of the class (linear runs)
  double wall_seconds = 0.0;

  std::vector<double> cumulative() const;
  int num_epochs() const { return schedule.num_epochs(); }
};

struct DoerlOptions {
  double delta = 0.05;
  SolverConfig solver;
  Knobs knobs;
  OracleRate rate;
  std::uint64_t seed = 0;
};

/// Uniform transitions, zero rewards.
TabularMdp initial_tabular_model(const TabularMdp& like);

RunLog run_doerl_tabular(const TabularMdp& truth, const TabularModelClass& cls, const EpochSchedule& schedule,
                         const DoerlOptions& options);

RunLog run_doerl_linear(const LinearMdp& truth, const LinearModelClass& cls, const EpochSchedule& schedule,
                        const DoerlOptions& options);

/// Re-estimates (MLE over all data so far) and re-plans before every episode, then runs
/// the epsilon-greedy version of the plan.
RunLog run_baseline_replan(const TabularMdp& truth, const TabularModelClass& cls, long long rounds, double epsilon,
                           std::uint64_t seed);

/// delta_1 = 2 eps_1 + 1/10, delta_m = delta_{m-1} / 9 + (20/9) eps_m.
std::vector<double> regret_recursion(const std::vector<double>& epsilons);

}  // namespace doerl
