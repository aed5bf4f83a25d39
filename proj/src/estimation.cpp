#include "doerl/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace doerl {

void check_class(const TabularModelClass& cls) {
  if (cls.models.empty()) throw std::invalid_argument("model class is empty");
  const auto& ref = cls.models.front();
  for (const auto& m : cls.models)
    if (m.horizon() != ref.horizon() || m.num_states() != ref.num_states() ||
        m.num_actions() != ref.num_actions() || m.start_state() != ref.start_state())
      throw DimensionError("model class members disagree on (H, S, A, start)");
}

double oracle_rate(const OracleRate& rate, std::size_t class_size, long long n, double delta) {
  if (n < 1) throw std::domain_error("oracle_rate: n must be at least 1");
  if (!(delta > 0.0 && delta <= 0.5)) throw std::domain_error("oracle_rate: delta must lie in (0, 1/2]");
  if (class_size < 1) throw std::domain_error("oracle_rate: class must be nonempty");
  if (!(rate.c_est > 0.0)) throw std::domain_error("oracle_rate: c_est must be positive");
  return rate.c_est * std::log(static_cast<double>(class_size) / delta) / static_cast<double>(n);
}

namespace {

void check_trajectory(const TabularMdp& model, const Trajectory& traj) {
  if (static_cast<int>(traj.steps.size()) != model.horizon())
    throw DimensionError("trajectory length differs from the horizon");
  for (const auto& st : traj.steps)
    if (st.state < 0 || st.state >= model.num_states() || st.action < 0 || st.action >= model.num_actions())
      throw DimensionError("trajectory index out of range");
}

double reward_channel(const TabularMdp& model, int h, int s, int a, bool bit) {
  const double p1 = model.horizon() * model.r(h, s, a);
  return bit ? p1 : 1.0 - p1;
}

// Forward recursion over a product of two trajectory laws sharing the same path z.
// `combine(x, y)` maps the per-factor probabilities of the two laws to the summand
// kernel; the policy factor enters as combine(pi, pi).
template <class Combine>
double paired_forward(const TabularMdp& a, const TabularMdp& b, const Policy& policy, Combine combine) {
  check_compatible(a, policy);
  check_compatible(b, policy);
  if (a.start_state() != b.start_state()) throw DimensionError("models disagree on the start state");
  const int H = a.horizon();
  const int S = a.num_states();
  const int A = a.num_actions();
  Vector alpha = Vector::Zero(S);
  alpha[a.start_state()] = 1.0;
  for (int h = 0; h < H; ++h) {
    Vector next = Vector::Zero(S);
    double total = 0.0;
    for (int s = 0; s < S; ++s) {
      if (alpha[s] == 0.0) continue;
      for (int act = 0; act < A; ++act) {
        const double pi = policy(h, s, act);
        if (pi == 0.0) continue;
        const double ra = a.horizon() * a.r(h, s, act);
        const double rb = b.horizon() * b.r(h, s, act);
        const double w = alpha[s] * combine(pi, pi) * (combine(ra, rb) + combine(1.0 - ra, 1.0 - rb));
        if (h + 1 == H) {
          total += w;
          continue;
        }
        for (int sn = 0; sn < S; ++sn) next[sn] += w * combine(a.p(h, s, act, sn), b.p(h, s, act, sn));
      }
    }
    if (h + 1 == H) return total;
    alpha = std::move(next);
  }
  return 0.0;
}

}  // namespace

double trajectory_log_likelihood(const TabularMdp& model, const Trajectory& traj) {
  check_trajectory(model, traj);
  const int H = model.horizon();
  double ll = 0.0;
  if (traj.steps[0].state != model.start_state()) return -std::numeric_limits<double>::infinity();
  for (int h = 0; h < H; ++h) {
    const auto& st = traj.steps[h];
    double p = reward_channel(model, h, st.state, st.action, st.reward_bit);
    if (h + 1 < H) p *= model.p(h, st.state, st.action, traj.steps[h + 1].state);
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    ll += std::log(p);
  }
  return ll;
}

double trajectory_probability(const TabularMdp& model, const Policy& policy, const Trajectory& traj) {
  check_trajectory(model, traj);
  const int H = model.horizon();
  if (traj.steps[0].state != model.start_state()) return 0.0;
  double p = 1.0;
  for (int h = 0; h < H; ++h) {
    const auto& st = traj.steps[h];
    p *= policy(h, st.state, st.action) * reward_channel(model, h, st.state, st.action, st.reward_bit);
    if (h + 1 < H) p *= model.p(h, st.state, st.action, traj.steps[h + 1].state);
  }
  return p;
}

EstimationReport mle_estimate(const TabularModelClass& cls, std::span<const Trajectory> data) {
  check_class(cls);
  if (data.empty()) throw std::invalid_argument("mle_estimate: no data");
  EstimationReport report;
  report.kind = EstimationReport::Kind::LogLikelihood;
  report.n_samples = data.size();
  report.scores.reserve(cls.size());
  for (const auto& model : cls.models) {
    double ll = 0.0;
    for (const auto& traj : data) {
      ll += trajectory_log_likelihood(model, traj);
      if (ll == -std::numeric_limits<double>::infinity()) break;
    }
    report.scores.push_back(ll);
  }
  for (std::size_t i = 1; i < report.scores.size(); ++i)
    if (report.scores[i] > report.scores[report.chosen_index]) report.chosen_index = i;
  return report;
}

EstimationReport lse_estimate(const TabularModelClass& cls, const Policy& policy, std::span<const Trajectory> data) {
  check_class(cls);
  if (data.empty()) throw std::invalid_argument("lse_estimate: no data");
  for (const auto& traj : data)
    if (traj.policy_id != data.front().policy_id)
      throw std::invalid_argument("lse_estimate: batch mixes trajectories from different policies");
  EstimationReport report;
  report.kind = EstimationReport::Kind::SquaredLoss;
  report.n_samples = data.size();
  const double n = static_cast<double>(data.size());
  for (const auto& model : cls.models) {
    double empirical = 0.0;
    for (const auto& traj : data) empirical += trajectory_probability(model, policy, traj);
    report.scores.push_back(trajectory_inner_product(model, model, policy) - 2.0 * empirical / n);
  }
  for (std::size_t i = 1; i < report.scores.size(); ++i)
    if (report.scores[i] < report.scores[report.chosen_index]) report.chosen_index = i;
  return report;
}

double hellinger_sq_exact(const TabularMdp& a, const TabularMdp& b, const Policy& policy) {
  const double bc = paired_forward(a, b, policy, [](double x, double y) { return std::sqrt(x * y); });
  return std::clamp(2.0 - 2.0 * bc, 0.0, 2.0);
}

double trajectory_inner_product(const TabularMdp& a, const TabularMdp& b, const Policy& policy) {
  return paired_forward(a, b, policy, [](double x, double y) { return x * y; });
}

double l2_sq_exact(const TabularMdp& a, const TabularMdp& b, const Policy& policy) {
  const double v = trajectory_inner_product(a, a, policy) + trajectory_inner_product(b, b, policy) -
                   2.0 * trajectory_inner_product(a, b, policy);
  return std::max(v, 0.0);
}

}  // namespace doerl
