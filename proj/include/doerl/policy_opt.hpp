#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "doerl/linear_mdp.hpp"
#include "doerl/mdp.hpp"
#include "doerl/trusted.hpp"

namespace doerl {

/// V-hat_{m-1}(pi) + (1/eta) * sum_{s,a} log(d~^h(s,a; pi) + beta).
struct BarrierObjectiveSpec {
  AggregatedModel prev_model;
  TrustedStructure structure;
  int segment = 0;
  double eta = 1.0;
  double beta = 1.0;
};

/// V-hat_{m-1}(pi) + (1/eta) * sum_{j<=h} log det(K~^j(pi) + beta I).
struct LogDetObjectiveSpec {
  LinearMdp prev_model;
  TrustedStructureLinear structure;
  int segment = 0;
  double eta = 1.0;
  double beta = 1.0;
};

struct SolverConfig {
  int max_iters = 4000;
  int restarts = 8;
  double stationarity_tol = 1e-7;
  std::uint64_t seed = 0;
  double initial_step = 1.0;
};

void validate(const SolverConfig& config);

struct ObjectiveValue {
  double value = 0.0;        ///< model value plus regularizer
  double model_value = 0.0;  ///< V-hat_{m-1}(pi)
  double regularizer = 0.0;  ///< (1/eta) * (log-barrier or log-det sum)
  std::vector<Matrix> grad;  ///< d value / d pi[h](s,a), one S x A matrix per layer
};

struct SolverDiagnostics {
  int iterations = 0;        ///< ascent iterations of the winning start
  int evaluations = 0;       ///< objective evaluations over all starts
  double grad_norm = 0.0;    ///< projected-gradient norm of the winner (scaled objective)
  bool converged = false;    ///< winner met stationarity_tol
  std::string winner;        ///< "uniform", "greedy", "smoothed-greedy" or "restart-<k>"
};

struct SolveResult {
  Policy policy;
  double value;
  SolverDiagnostics diagnostics;
};

ObjectiveValue barrier_value_grad(const BarrierObjectiveSpec& spec, const Policy& policy);

SolveResult optimize_barrier(const BarrierObjectiveSpec& spec, const SolverConfig& config);

ObjectiveValue logdet_value_grad(const LogDetObjectiveSpec& spec, const Policy& policy);

SolveResult optimize_logdet(const LogDetObjectiveSpec& spec, const SolverConfig& config);

/// Optimal value of `model` minus the value of `policy` in it.
double pseudo_regret(const AggregatedModel& model, const Policy& policy);

/// Euclidean norm of pi - Proj_simplex(pi + grad), taken over every (layer, state) row.
double projected_gradient_norm(const Policy& policy, const std::vector<Matrix>& grad);

/// Multiplicative-weights ascent over per-(layer,state) action simplices with random
/// restarts.  `scale` multiplies the objective inside the solver (the argmax is
/// unchanged); `candidates` are evaluated as-is and win if nothing better is found.
using PolicyObjective = std::function<ObjectiveValue(const Policy&)>;
SolveResult maximize_policy_objective(const PolicyObjective& objective, double scale, int horizon, int num_states,
                                      int num_actions, const std::vector<std::pair<std::string, Policy>>& candidates,
                                      const std::vector<std::pair<std::string, Policy>>& warm_starts,
                                      const SolverConfig& config);

}  // namespace doerl
