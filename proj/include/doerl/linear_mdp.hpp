#pragma once

#include <span>
#include <vector>

#include "doerl/estimation.hpp"
#include "doerl/mdp.hpp"
#include "doerl/trusted.hpp"

namespace doerl {

/// Linear MDP over a finite state list: P^h(s'|s,a) = <phi_h(s,a), mu^{h+1}(s')> and
/// r^h(s,a) = <phi_h(s,a), theta^h>.
///
/// features[h] is (S*A) x d with row s*A+a holding phi_h(s,a); mu[h] is S x d with row
/// s' holding mu^{h+1}(s'); theta[h] has length d.
class LinearMdp {
 public:
  LinearMdp(int start_state, int num_actions, std::vector<Matrix> features, std::vector<Matrix> mu,
            std::vector<Vector> theta);

  int horizon() const { return static_cast<int>(features_.size()); }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int dim() const { return static_cast<int>(features_.front().cols()); }
  int start_state() const { return start_; }

  const Matrix& features(int h) const { return features_[h]; }
  const std::vector<Matrix>& all_features() const { return features_; }
  const Matrix& mu(int h) const { return mu_[h]; }
  const Vector& theta(int h) const { return theta_[h]; }

  /// (S*A) x S kernel Phi_h * mu^{h+1}^T.
  Matrix transition_matrix(int h) const { return features_[h] * mu_[h].transpose(); }
  /// S x A mean rewards.
  Matrix reward_matrix(int h) const;

  /// Equivalent tabular model (valid because the state list is finite).
  const TabularMdp& tabular() const { return tabular_; }

 private:
  int num_states_;
  int num_actions_;
  int start_;
  std::vector<Matrix> features_;
  std::vector<Matrix> mu_;
  std::vector<Vector> theta_;
  TabularMdp tabular_;
};

using LinearModelClass = ModelClass<LinearMdp>;

/// Distribution over s' for the (h, s, a) transition.
Vector linear_transition(const LinearMdp& model, int h, int s, int a);

/// One-hot embedding: d = S*A, phi is the (s,a) indicator, mu^{h+1}(s')[(s,a)] = P, theta = r.
LinearMdp tabular_to_linear(const TabularMdp& mdp);

struct NormalizationReport {
  double c_m = 0.0;  ///< max_h sum_{s'} ||mu^{h+1}(s')||_2^{1/2}
  bool passes = true;
};

/// Throws InvariantError("theta-norm") when some ||theta^h|| exceeds one.
NormalizationReport normalization_constant(const LinearMdp& model);

/// Per-layer fitted coefficients (features are known and shared).
struct LinearLayerEstimate {
  Matrix mu;     ///< S x d
  Vector theta;  ///< d
};

/// Linear trusted structure: trusted sets are sets of arriving states.
/// trusted[j] gates arrivals into layer j+1 and is built from layers[j].
struct TrustedStructureLinear {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  int start_state = 0;
  double zeta = 1.0;
  std::vector<Matrix> features;  ///< known feature maps, one per layer
  std::vector<LinearLayerEstimate> layers;
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> trusted;

  static TrustedStructureLinear empty_for(const LinearMdp& like, double zeta);

  int dim() const { return static_cast<int>(features.front().cols()); }
  int layers_estimated() const { return static_cast<int>(layers.size()); }
  int deepest_layer() const { return static_cast<int>(trusted.size()); }
  long long trusted_count(int j) const { return trusted[j].count(); }
};

/// Estimated (S*A) x S kernel of layer j.
Matrix estimated_kernel(const TrustedStructureLinear& structure, int j);

/// Column-masked estimated kernels for j < count.
std::vector<Matrix> trusted_kernels(const TrustedStructureLinear& structure, int count);

/// s' trusted iff sum_{s,a} d~^h(s,a; executed) <phi_h(s,a), mu-hat^{h+1}(s')> >= 1/zeta.
Eigen::Array<bool, Eigen::Dynamic, 1> trusted_set_linear(const TrustedStructureLinear& structure,
                                                         const Policy& executed_policy, int h);

void extend_structure(TrustedStructureLinear& structure, LinearLayerEstimate estimate,
                      const Policy& executed_policy);

OccupancyTensor trusted_occupancy_linear(const TrustedStructureLinear& structure, const Policy& policy, int upto);

/// sum_{s,a} phi_j(s,a) phi_j(s,a)^T w(s,a) for an S x A weight table.
Matrix feature_covariance(const Matrix& features, const Matrix& weights);

/// K~^j(pi) for layer j of the trusted occupancy.
Matrix trusted_covariance(const TrustedStructureLinear& structure, const Policy& policy, int j);

/// Aggregated linear model from per-layer estimates.
LinearMdp aggregate_linear(int start_state, int num_actions, std::span<const Matrix> features,
                           std::span<const LinearLayerEstimate> layers);

LinearLayerEstimate layer_of(const LinearMdp& model, int h);

void check_class(const LinearModelClass& cls);

/// Least-squares selection over linear models (same criterion as lse_estimate).
EstimationReport lse_linear(const LinearModelClass& cls, const Policy& policy, std::span<const Trajectory> data);

}  // namespace doerl
