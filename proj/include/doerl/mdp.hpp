#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace doerl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Tolerance used for every simplex check on transition rows and policies.
inline constexpr double kSimplexTol = 1e-12;

/// Thrown when tensor shapes of two objects do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a model or policy violates a named invariant (simplex, reward range...).
class InvariantError : public std::invalid_argument {
 public:
  InvariantError(std::string invariant, const std::string& what)
      : std::invalid_argument(invariant + ": " + what), invariant_(std::move(invariant)) {}
  const std::string& invariant() const { return invariant_; }

 private:
  std::string invariant_;
};

/// Uniform double in [0,1) built from the top 53 bits of the engine output.
/// Independent of the standard library's distribution implementations.
double uniform01(Rng& rng);

/// Draws an index from a discrete distribution given by nonnegative weights summing to one.
int sample_index(const Eigen::Ref<const Vector>& probs, Rng& rng);

/// Rescales every row of a nonnegative matrix to sum to one.  Rows that sum to zero
/// are rejected.
Matrix make_stochastic(Matrix rows);

/// Episodic finite-horizon MDP with layer-indexed transitions and mean rewards.
///
/// Layer h transitions are stored as an (S*A) x S matrix whose row s*A+a is
/// P^h(.|s,a); they map layer h to layer h+1.  Mean rewards are S x A matrices with
/// entries in [0, 1/H], so the total mean reward of any trajectory lies in [0,1].
class TabularMdp {
 public:
  TabularMdp(int start_state, std::vector<Matrix> transitions, std::vector<Matrix> rewards);

  int horizon() const { return horizon_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int start_state() const { return start_; }

  const Matrix& transitions(int h) const { return transitions_[h]; }
  const Matrix& rewards(int h) const { return rewards_[h]; }
  const std::vector<Matrix>& all_transitions() const { return transitions_; }
  const std::vector<Matrix>& all_rewards() const { return rewards_; }

  double p(int h, int s, int a, int next) const { return transitions_[h](s * num_actions_ + a, next); }
  double r(int h, int s, int a) const { return rewards_[h](s, a); }

 private:
  int horizon_;
  int num_states_;
  int num_actions_;
  int start_;
  std::vector<Matrix> transitions_;
  std::vector<Matrix> rewards_;
};

/// Randomized non-stationary policy: one S x A row-stochastic matrix per layer.
class Policy {
 public:
  explicit Policy(std::vector<Matrix> probs);

  static Policy uniform(int horizon, int num_states, int num_actions);
  /// actions[h][s] is the action taken at layer h in state s.
  static Policy deterministic(const std::vector<std::vector<int>>& actions, int num_actions);

  int horizon() const { return static_cast<int>(probs_.size()); }
  int num_states() const { return static_cast<int>(probs_.front().rows()); }
  int num_actions() const { return static_cast<int>(probs_.front().cols()); }

  const Matrix& layer(int h) const { return probs_[h]; }
  const std::vector<Matrix>& layers() const { return probs_; }
  double operator()(int h, int s, int a) const { return probs_[h](s, a); }

 private:
  std::vector<Matrix> probs_;
};

struct Step {
  int state = 0;
  int action = 0;
  bool reward_bit = false;  ///< observed reward is reward_bit / H
};

struct Trajectory {
  std::vector<Step> steps;
  std::uint64_t policy_id = 0;

  double reward(int h) const { return steps[h].reward_bit ? 1.0 / static_cast<double>(steps.size()) : 0.0; }
};

/// Per-layer state-action masses d[h](s,a).
struct OccupancyTensor {
  std::vector<Matrix> mass;

  int horizon() const { return static_cast<int>(mass.size()); }
  double layer_mass(int h) const { return mass[h].sum(); }
  /// State marginal of layer h.
  Vector state_mass(int h) const { return mass[h].rowwise().sum(); }
};

struct ValueResult {
  double value = 0.0;
  std::vector<Matrix> q;  ///< q[h] is S x A
  std::vector<Vector> v;  ///< v[h] has length S; v[H] is zero
};

struct PlanResult {
  Policy policy;
  double value;
};

/// One path through the state/action lattice; states has H+1 entries (the last one is
/// the state reached after the final transition).
struct TrajectorySkeleton {
  std::vector<int> states;
  std::vector<int> actions;
  double probability = 0.0;
};

void check_compatible(const TabularMdp& mdp, const Policy& policy);

/// Rolls out one episode.  Rewards follow (1/H) * Bernoulli(H * r).
Trajectory sample_trajectory(const TabularMdp& mdp, const Policy& policy, Rng& rng,
                             std::uint64_t policy_id = 0);

OccupancyTensor occupancy_forward(const TabularMdp& mdp, const Policy& policy);

ValueResult value_backward(const TabularMdp& mdp, const Policy& policy);

/// Backward induction; ties go to the lowest action index.
PlanResult optimal_policy_plan(const TabularMdp& mdp);

/// V* - V(policy) under `truth`.
double regret_of_policy(const TabularMdp& truth, const Policy& policy);

/// Exhaustive list of positive-probability skeletons; throws std::length_error when
/// (S*A)^H exceeds `cap`.
std::vector<TrajectorySkeleton> enumerate_trajectories(const TabularMdp& mdp, const Policy& policy,
                                                       double cap = 1e6);

}  // namespace doerl
