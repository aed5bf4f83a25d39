#include "doerl/mdp.hpp"

#include <cmath>
#include <sstream>

namespace doerl {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int sample_index(const Eigen::Ref<const Vector>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return static_cast<int>(i);
  }
  // u landed in the rounding gap above the accumulated sum
  return last_positive;
}

Matrix make_stochastic(Matrix rows) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if ((rows.row(i).array() < 0.0).any()) throw InvariantError("nonnegativity", "negative weight in row");
    const double total = rows.row(i).sum();
    if (!(total > 0.0)) throw InvariantError("transition-simplex", "row has zero mass");
    rows.row(i) /= total;
  }
  return rows;
}

namespace {

std::string at(int h, int s, int a = -1) {
  std::ostringstream os;
  os << "(h=" << h << ", s=" << s;
  if (a >= 0) os << ", a=" << a;
  os << ")";
  return os.str();
}

// Validates a nonnegative row and rescales it so that it sums to one exactly.
template <class Row>
void check_simplex_row(Row&& row, const std::string& invariant, const std::string& where) {
  if (!row.allFinite()) throw InvariantError(invariant, "non-finite entry at " + where);
  if ((row.array() < 0.0).any()) throw InvariantError(invariant, "negative entry at " + where);
  if ((row.array() > 1.0 + kSimplexTol).any()) throw InvariantError(invariant, "entry above one at " + where);
  const double total = row.sum();
  if (std::abs(total - 1.0) > kSimplexTol) {
    std::ostringstream os;
    os << "row at " << where << " sums to " << total;
    throw InvariantError(invariant, os.str());
  }
  row /= total;
}

}  // namespace

TabularMdp::TabularMdp(int start_state, std::vector<Matrix> transitions, std::vector<Matrix> rewards)
    : start_(start_state), transitions_(std::move(transitions)), rewards_(std::move(rewards)) {
  horizon_ = static_cast<int>(rewards_.size());
  if (horizon_ < 1) throw DimensionError("TabularMdp: horizon must be positive");
  if (static_cast<int>(transitions_.size()) != horizon_)
    throw DimensionError("TabularMdp: need one transition matrix per layer");
  num_states_ = static_cast<int>(rewards_[0].rows());
  num_actions_ = static_cast<int>(rewards_[0].cols());
  if (num_states_ < 1 || num_actions_ < 1) throw DimensionError("TabularMdp: empty state or action set");
  if (start_ < 0 || start_ >= num_states_) throw DimensionError("TabularMdp: start state out of range");
  const double rmax = 1.0 / horizon_;
  for (int h = 0; h < horizon_; ++h) {
    if (rewards_[h].rows() != num_states_ || rewards_[h].cols() != num_actions_)
      throw DimensionError("TabularMdp: reward layer shape mismatch");
    if (transitions_[h].rows() != num_states_ * num_actions_ || transitions_[h].cols() != num_states_)
      throw DimensionError("TabularMdp: transition layer shape mismatch");
    for (int s = 0; s < num_states_; ++s)
      for (int a = 0; a < num_actions_; ++a) {
        check_simplex_row(transitions_[h].row(s * num_actions_ + a), "transition-simplex", at(h, s, a));
        const double r = rewards_[h](s, a);
        if (!std::isfinite(r) || r < 0.0 || r > rmax + kSimplexTol)
          throw InvariantError("reward-range", "mean reward outside [0,1/H] at " + at(h, s, a));
        rewards_[h](s, a) = std::min(r, rmax);
      }
  }
}

Policy::Policy(std::vector<Matrix> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw DimensionError("Policy: no layers");
  const auto rows = probs_[0].rows();
  const auto cols = probs_[0].cols();
  if (rows < 1 || cols < 1) throw DimensionError("Policy: empty layer");
  for (std::size_t h = 0; h < probs_.size(); ++h) {
    if (probs_[h].rows() != rows || probs_[h].cols() != cols) throw DimensionError("Policy: ragged layers");
    for (Eigen::Index s = 0; s < rows; ++s)
      check_simplex_row(probs_[h].row(s), "policy-simplex", at(static_cast<int>(h), static_cast<int>(s)));
  }
}

Policy Policy::uniform(int horizon, int num_states, int num_actions) {
  return Policy(std::vector<Matrix>(horizon, Matrix::Constant(num_states, num_actions, 1.0 / num_actions)));
}

Policy Policy::deterministic(const std::vector<std::vector<int>>& actions, int num_actions) {
  std::vector<Matrix> probs;
  probs.reserve(actions.size());
  for (const auto& layer : actions) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(layer.size()), num_actions);
    for (std::size_t s = 0; s < layer.size(); ++s) {
      if (layer[s] < 0 || layer[s] >= num_actions) throw DimensionError("Policy: action out of range");
      m(static_cast<Eigen::Index>(s), layer[s]) = 1.0;
    }
    probs.push_back(std::move(m));
  }
  return Policy(std::move(probs));
}

void check_compatible(const TabularMdp& mdp, const Policy& policy) {
  if (policy.horizon() != mdp.horizon() || policy.num_states() != mdp.num_states() ||
      policy.num_actions() != mdp.num_actions())
    throw DimensionError("policy and MDP dimensions disagree");
}

Trajectory sample_trajectory(const TabularMdp& mdp, const Policy& policy, Rng& rng, std::uint64_t policy_id) {
  check_compatible(mdp, policy);
  const int H = mdp.horizon();
  const int A = mdp.num_actions();
  Trajectory traj;
  traj.policy_id = policy_id;
  traj.steps.reserve(H);
  int s = mdp.start_state();
  for (int h = 0; h < H; ++h) {
    const int a = sample_index(policy.layer(h).row(s).transpose(), rng);
    const bool bit = uniform01(rng) < H * mdp.r(h, s, a);
    traj.steps.push_back({s, a, bit});
    if (h + 1 < H) s = sample_index(mdp.transitions(h).row(s * A + a).transpose(), rng);
  }
  return traj;
}

OccupancyTensor occupancy_forward(const TabularMdp& mdp, const Policy& policy) {
  check_compatible(mdp, policy);
  const int H = mdp.horizon();
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  OccupancyTensor occ;
  occ.mass.reserve(H);
  Vector state = Vector::Zero(S);
  state[mdp.start_state()] = 1.0;
  for (int h = 0; h < H; ++h) {
    occ.mass.push_back(state.asDiagonal() * policy.layer(h));
    if (h + 1 == H) break;
    // flatten d[h] row-major to match the (s*A+a) row layout of P
    Vector flat(S * A);
    for (int s = 0; s < S; ++s) flat.segment(s * A, A) = occ.mass[h].row(s).transpose();
    state = mdp.transitions(h).transpose() * flat;
  }
  return occ;
}

ValueResult value_backward(const TabularMdp& mdp, const Policy& policy) {
  check_compatible(mdp, policy);
  const int H = mdp.horizon();
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  ValueResult out;
  out.q.assign(H, Matrix::Zero(S, A));
  out.v.assign(H + 1, Vector::Zero(S));
  for (int h = H - 1; h >= 0; --h) {
    const Vector next = mdp.transitions(h) * out.v[h + 1];
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) out.q[h](s, a) = mdp.r(h, s, a) + next[s * A + a];
    out.v[h] = (out.q[h].cwiseProduct(policy.layer(h))).rowwise().sum();
  }
  out.value = out.v[0][mdp.start_state()];
  return out;
}

PlanResult optimal_policy_plan(const TabularMdp& mdp) {
  const int H = mdp.horizon();
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  std::vector<std::vector<int>> choice(H, std::vector<int>(S, 0));
  Vector v = Vector::Zero(S);
  for (int h = H - 1; h >= 0; --h) {
    const Vector next = mdp.transitions(h) * v;
    Vector vh(S);
    for (int s = 0; s < S; ++s) {
      int best = 0;
      double best_q = mdp.r(h, s, 0) + next[s * A];
      for (int a = 1; a < A; ++a) {
        const double q = mdp.r(h, s, a) + next[s * A + a];
        if (q > best_q) {
          best_q = q;
          best = a;
        }
      }
      choice[h][s] = best;
      vh[s] = best_q;
    }
    v = std::move(vh);
  }
  return {Policy::deterministic(choice, A), v[mdp.start_state()]};
}

double regret_of_policy(const TabularMdp& truth, const Policy& policy) {
  check_compatible(truth, policy);
  return optimal_policy_plan(truth).value - value_backward(truth, policy).value;
}

std::vector<TrajectorySkeleton> enumerate_trajectories(const TabularMdp& mdp, const Policy& policy, double cap) {
  check_compatible(mdp, policy);
  const int H = mdp.horizon();
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  if (std::pow(static_cast<double>(S) * A, H) > cap)
    throw std::length_error("enumerate_trajectories: (S*A)^H exceeds cap");

  std::vector<TrajectorySkeleton> out;
  TrajectorySkeleton path;
  path.states.assign(H + 1, 0);
  path.actions.assign(H, 0);
  path.states[0] = mdp.start_state();

  // depth-first over (action, next state) pairs, pruning zero-probability branches
  auto recurse = [&](auto&& self, int h, double prob) -> void {
    if (h == H) {
      path.probability = prob;
      out.push_back(path);
      return;
    }
    const int s = path.states[h];
    for (int a = 0; a < A; ++a) {
      const double pa = prob * policy(h, s, a);
      if (pa <= 0.0) continue;
      path.actions[h] = a;
      for (int next = 0; next < S; ++next) {
        const double pn = pa * mdp.p(h, s, a, next);
        if (pn <= 0.0) continue;
        path.states[h + 1] = next;
        self(self, h + 1, pn);
      }
    }
  };
  recurse(recurse, 0, 1.0);
  return out;
}

}  // namespace doerl
