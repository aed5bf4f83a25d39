#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "doerl/mdp.hpp"

namespace doerl {

/// Finite hypothesis class sharing (H, S, A, start).  `realizable_index` is metadata
/// for tests and experiments; the estimators never read it.
template <class Model>
struct ModelClass {
  std::vector<Model> models;
  std::optional<std::size_t> realizable_index;

  std::size_t size() const { return models.size(); }
};

using TabularModelClass = ModelClass<TabularMdp>;

void check_class(const TabularModelClass& cls);

/// E(n, delta) = c_est * ln(|M| / delta) / n.
struct OracleRate {
  double c_est = 1.0;
};

double oracle_rate(const OracleRate& rate, std::size_t class_size, long long n, double delta);

struct EstimationReport {
  enum class Kind { LogLikelihood, SquaredLoss };

  Kind kind = Kind::LogLikelihood;
  std::size_t chosen_index = 0;
  std::vector<double> scores;  ///< log-likelihoods (maximized) or squared losses (minimized)
  std::size_t n_samples = 0;
};

/// log P^M(trajectory) without the (model-independent) policy factor.  Returns -inf for
/// trajectories the model cannot generate.
double trajectory_log_likelihood(const TabularMdp& model, const Trajectory& traj);

/// Probability of the full observation (states, actions, reward bits) under M(pi).
double trajectory_probability(const TabularMdp& model, const Policy& policy, const Trajectory& traj);

/// Maximum-likelihood model selection; ties go to the lowest index.
EstimationReport mle_estimate(const TabularModelClass& cls, std::span<const Trajectory> data);

/// Least-squares density selection for a batch collected under one policy: minimizes
/// ||P^M(pi)||^2 - (2/n) sum_i P^M(pi)(z_i).  Mixed policy ids are rejected.
EstimationReport lse_estimate(const TabularModelClass& cls, const Policy& policy,
                              std::span<const Trajectory> data);

/// Squared Hellinger distance between the trajectory laws a(pi) and b(pi), in [0, 2].
double hellinger_sq_exact(const TabularMdp& a, const TabularMdp& b, const Policy& policy);

/// <a(pi), b(pi)> = sum_z P_a(z) P_b(z) over full observations z.
double trajectory_inner_product(const TabularMdp& a, const TabularMdp& b, const Policy& policy);

/// Squared L2 distance between the trajectory laws a(pi) and b(pi).
double l2_sq_exact(const TabularMdp& a, const TabularMdp& b, const Policy& policy);

}  // namespace doerl
