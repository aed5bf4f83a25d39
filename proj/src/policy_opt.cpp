#include "doerl/policy_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace doerl {

void validate(const SolverConfig& config) {
  if (config.max_iters < 1 || config.restarts < 1 || !(config.stationarity_tol > 0.0) ||
      !(config.initial_step > 0.0))
    throw std::invalid_argument("solver config entries must be positive");
}

namespace {

void check_regularization(double eta, double beta) {
  if (!(eta > 0.0) || !(beta > 0.0)) throw std::domain_error("eta and beta must be positive");
}

// Value part: dV/dpi^j(a|s) = d^j(s) * Q^j(s,a).
void add_value_gradient(const TabularMdp& model, const Policy& policy, ObjectiveValue& out) {
  const ValueResult vr = value_backward(model, policy);
  const OccupancyTensor occ = occupancy_forward(model, policy);
  out.model_value = vr.value;
  out.grad.resize(policy.horizon());
  for (int j = 0; j < policy.horizon(); ++j) out.grad[j] = occ.state_mass(j).asDiagonal() * vr.q[j];
}

Vector project_to_simplex(const Vector& y) {
  Vector sorted = y;
  std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - t > 0.0) theta = t;
  }
  return (y.array() - theta).cwiseMax(0.0);
}

Policy random_interior_policy(int H, int S, int A, Rng& rng) {
  std::vector<Matrix> layers(H, Matrix(S, A));
  for (auto& layer : layers)
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) layer(s, a) = -std::log(1.0 - uniform01(rng));
      layer.row(s) /= layer.row(s).sum();
    }
  return Policy(std::move(layers));
}

Policy smoothed(const Policy& base, double keep) {
  std::vector<Matrix> layers;
  for (const auto& layer : base.layers())
    layers.push_back(keep * layer + Matrix::Constant(layer.rows(), layer.cols(), (1.0 - keep) / layer.cols()));
  return Policy(std::move(layers));
}

// One multiplicative-weights step on every row: pi <- pi * exp(step * g), renormalized.
Policy exponentiated_step(const Policy& pi, const std::vector<Matrix>& grad, double step) {
  std::vector<Matrix> layers;
  layers.reserve(pi.horizon());
  for (int j = 0; j < pi.horizon(); ++j) {
    Matrix next = pi.layer(j);
    for (Eigen::Index s = 0; s < next.rows(); ++s) {
      // log domain, so the heaviest surviving entry stays at weight one
      double top = -std::numeric_limits<double>::infinity();
      for (Eigen::Index a = 0; a < next.cols(); ++a)
        if (next(s, a) > 0.0) top = std::max(top, std::log(next(s, a)) + step * grad[j](s, a));
      for (Eigen::Index a = 0; a < next.cols(); ++a)
        if (next(s, a) > 0.0) next(s, a) = std::exp(std::log(next(s, a)) + step * grad[j](s, a) - top);
      next.row(s) /= next.row(s).sum();
    }
    layers.push_back(std::move(next));
  }
  return Policy(std::move(layers));
}

struct AscentOutcome {
  Policy policy;
  double value;
  int iterations;
  int evaluations;
  double grad_norm;
  bool converged;
};

AscentOutcome ascend(const PolicyObjective& objective, double scale, Policy start, const SolverConfig& config) {
  ObjectiveValue current = objective(start);
  int evaluations = 1;
  auto scaled_grad = [scale](const ObjectiveValue& v) {
    std::vector<Matrix> g = v.grad;
    for (auto& layer : g) layer *= scale;
    return g;
  };
  std::vector<Matrix> grad = scaled_grad(current);
  double value = scale * current.value;
  double step = config.initial_step;
  Policy pi = std::move(start);
  double norm = projected_gradient_norm(pi, grad);
  int it = 0;
  for (; it < config.max_iters && norm > config.stationarity_tol; ++it) {
    bool accepted = false;
    while (step > 1e-14) {
      Policy trial = exponentiated_step(pi, grad, step);
      ObjectiveValue tv = objective(trial);
      ++evaluations;
      if (scale * tv.value >= value) {
        pi = std::move(trial);
        current = std::move(tv);
        value = scale * current.value;
        grad = scaled_grad(current);
        step = std::min(step * 1.5, 1e12);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    norm = projected_gradient_norm(pi, grad);
  }
  return {std::move(pi), current.value, it, evaluations, norm, norm <= config.stationarity_tol};
}

}  // namespace

double projected_gradient_norm(const Policy& policy, const std::vector<Matrix>& grad) {
  double total = 0.0;
  for (int j = 0; j < policy.horizon(); ++j)
    for (Eigen::Index s = 0; s < policy.layer(j).rows(); ++s) {
      const Vector row = policy.layer(j).row(s).transpose();
      const Vector moved = project_to_simplex(row + grad[j].row(s).transpose());
      total += (row - moved).squaredNorm();
    }
  return std::sqrt(total);
}

SolveResult maximize_policy_objective(const PolicyObjective& objective, double scale, int horizon, int num_states,
                                      int num_actions, const std::vector<std::pair<std::string, Policy>>& candidates,
                                      const std::vector<std::pair<std::string, Policy>>& warm_starts,
                                      const SolverConfig& config) {
  validate(config);
  if (!(scale > 0.0)) throw std::domain_error("objective scale must be positive");
  Rng rng(config.seed);
  std::vector<std::pair<std::string, Policy>> starts = warm_starts;
  for (int k = 0; k < config.restarts; ++k)
    starts.emplace_back("restart-" + std::to_string(k), random_interior_policy(horizon, num_states, num_actions, rng));

  std::optional<SolveResult> best;
  int evaluations = 0;
  for (const auto& [label, start] : starts) {
    AscentOutcome out = ascend(objective, scale, start, config);
    evaluations += out.evaluations;
    if (!best || out.value > best->value) {
      best = SolveResult{std::move(out.policy), out.value,
                         SolverDiagnostics{out.iterations, 0, out.grad_norm, out.converged, label}};
    }
  }
  for (const auto& [label, cand] : candidates) {
    const ObjectiveValue v = objective(cand);
    ++evaluations;
    if (v.value > best->value) {
      std::vector<Matrix> g = v.grad;
      for (auto& layer : g) layer *= scale;
      const double norm = projected_gradient_norm(cand, g);
      best = SolveResult{cand, v.value, SolverDiagnostics{0, 0, norm, norm <= config.stationarity_tol, label}};
    }
  }
  best->diagnostics.evaluations = evaluations;
  return std::move(*best);
}

ObjectiveValue barrier_value_grad(const BarrierObjectiveSpec& spec, const Policy& policy) {
  check_regularization(spec.eta, spec.beta);
  const TrustedStructure& st = spec.structure;
  if (spec.segment < 0 || spec.segment >= st.horizon) throw std::out_of_range("barrier objective: bad segment");
  ObjectiveValue out;
  add_value_gradient(spec.prev_model, policy, out);

  const auto kernels = trusted_kernels(st, spec.segment);
  const OccupancyTensor occ = truncated_occupancy(st.start_state, kernels, policy, spec.segment);
  const Matrix& top = occ.mass[spec.segment];
  out.regularizer = (top.array() + spec.beta).log().sum() / spec.eta;

  std::vector<Matrix> weights(spec.segment + 1, Matrix::Zero(st.num_states, st.num_actions));
  weights[spec.segment] = (1.0 / spec.eta) * (top.array() + spec.beta).inverse().matrix();
  const auto reg_grad = truncated_occupancy_pullback(occ, kernels, policy, weights, spec.segment);
  for (int j = 0; j < policy.horizon(); ++j) out.grad[j] += reg_grad[j];
  out.value = out.model_value + out.regularizer;
  return out;
}

SolveResult optimize_barrier(const BarrierObjectiveSpec& spec, const SolverConfig& config) {
  check_regularization(spec.eta, spec.beta);
  const auto& m = spec.prev_model;
  const Policy greedy = optimal_policy_plan(m).policy;
  const Policy uniform = Policy::uniform(m.horizon(), m.num_states(), m.num_actions());
  auto objective = [&spec](const Policy& pi) { return barrier_value_grad(spec, pi); };
  return maximize_policy_objective(objective, spec.eta, m.horizon(), m.num_states(), m.num_actions(),
                                   {{"uniform", uniform}, {"greedy", greedy}},
                                   {{"uniform", uniform}, {"smoothed-greedy", smoothed(greedy, 0.9)}}, config);
}

ObjectiveValue logdet_value_grad(const LogDetObjectiveSpec& spec, const Policy& policy) {
  check_regularization(spec.eta, spec.beta);
  const TrustedStructureLinear& st = spec.structure;
  if (spec.segment < 0 || spec.segment >= st.horizon) throw std::out_of_range("log-det objective: bad segment");
  ObjectiveValue out;
  add_value_gradient(spec.prev_model.tabular(), policy, out);

  const auto kernels = trusted_kernels(st, spec.segment);
  const OccupancyTensor occ = truncated_occupancy(st.start_state, kernels, policy, spec.segment);
  const int d = st.dim();
  const int A = st.num_actions;
  std::vector<Matrix> weights;
  double logdet_sum = 0.0;
  for (int j = 0; j <= spec.segment; ++j) {
    const Matrix& phi = st.features[j];
    const Matrix k = feature_covariance(phi, occ.mass[j]) + spec.beta * Matrix::Identity(d, d);
    const Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) throw std::logic_error("regularized trusted covariance is not positive definite");
    const Matrix& l = llt.matrixL();
    logdet_sum += 2.0 * l.diagonal().array().log().sum();
    // d/dd~(s,a) log det(K + beta I) = phi^T (K + beta I)^{-1} phi
    const Matrix solved = llt.solve(phi.transpose());
    const Vector leverage = (phi.transpose().cwiseProduct(solved)).colwise().sum().transpose();
    Matrix w(st.num_states, A);
    for (int s = 0; s < st.num_states; ++s) w.row(s) = leverage.segment(s * A, A).transpose() / spec.eta;
    weights.push_back(std::move(w));
  }
  out.regularizer = logdet_sum / spec.eta;
  const auto reg_grad = truncated_occupancy_pullback(occ, kernels, policy, weights, spec.segment);
  for (int j = 0; j < policy.horizon(); ++j) out.grad[j] += reg_grad[j];
  out.value = out.model_value + out.regularizer;
  return out;
}

SolveResult optimize_logdet(const LogDetObjectiveSpec& spec, const SolverConfig& config) {
  check_regularization(spec.eta, spec.beta);
  const auto& m = spec.prev_model.tabular();
  const Policy greedy = optimal_policy_plan(m).policy;
  const Policy uniform = Policy::uniform(m.horizon(), m.num_states(), m.num_actions());
  auto objective = [&spec](const Policy& pi) { return logdet_value_grad(spec, pi); };
  return maximize_policy_objective(objective, spec.eta, m.horizon(), m.num_states(), m.num_actions(),
                                   {{"uniform", uniform}, {"greedy", greedy}},
                                   {{"uniform", uniform}, {"smoothed-greedy", smoothed(greedy, 0.9)}}, config);
}

double pseudo_regret(const AggregatedModel& model, const Policy& policy) {
  return optimal_policy_plan(model).value - value_backward(model, policy).value;
}

}  // namespace doerl
