#include "doerl/linear_mdp.hpp"

#include <algorithm>
#include <cmath>

namespace doerl {

namespace {

constexpr double kLinearKernelTol = 1e-10;
constexpr double kFeatureNormTol = 1e-12;

Vector flatten(const Matrix& sa) {
  Vector flat(sa.size());
  const auto A = sa.cols();
  for (Eigen::Index s = 0; s < sa.rows(); ++s) flat.segment(s * A, A) = sa.row(s).transpose();
  return flat;
}

TabularMdp build_tabular(int start, int num_actions, const std::vector<Matrix>& features,
                         const std::vector<Matrix>& mu, const std::vector<Vector>& theta) {
  const int H = static_cast<int>(features.size());
  if (H < 1) throw DimensionError("LinearMdp: horizon must be positive");
  if (static_cast<int>(mu.size()) != H || static_cast<int>(theta.size()) != H)
    throw DimensionError("LinearMdp: need features, mu and theta for every layer");
  const auto d = features[0].cols();
  const auto S = mu[0].rows();
  if (num_actions < 1 || d < 1 || S < 1) throw DimensionError("LinearMdp: empty dimension");
  const double rmax = 1.0 / H;
  std::vector<Matrix> p;
  std::vector<Matrix> r;
  for (int h = 0; h < H; ++h) {
    if (features[h].rows() != S * num_actions || features[h].cols() != d || mu[h].rows() != S ||
        mu[h].cols() != d || theta[h].size() != d)
      throw DimensionError("LinearMdp: layer shape mismatch");
    for (Eigen::Index i = 0; i < features[h].rows(); ++i)
      if (features[h].row(i).norm() > 1.0 + kFeatureNormTol)
        throw InvariantError("feature-norm", "||phi|| exceeds one");
    Matrix kernel = features[h] * mu[h].transpose();
    for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
      if ((kernel.row(i).array() < -kLinearKernelTol).any())
        throw InvariantError("transition-simplex", "negative linear transition probability");
      if (std::abs(kernel.row(i).sum() - 1.0) > kLinearKernelTol)
        throw InvariantError("transition-simplex", "linear transition row does not sum to one");
    }
    kernel = kernel.cwiseMax(0.0);
    p.push_back(make_stochastic(std::move(kernel)));
    const Vector flat_r = features[h] * theta[h];
    Matrix rh(S, num_actions);
    for (Eigen::Index s = 0; s < S; ++s)
      for (int a = 0; a < num_actions; ++a) {
        const double v = flat_r[s * num_actions + a];
        if (v < -kLinearKernelTol || v > rmax + kLinearKernelTol)
          throw InvariantError("reward-range", "linear reward outside [0,1/H]");
        rh(s, a) = std::clamp(v, 0.0, rmax);
      }
    r.push_back(std::move(rh));
  }
  return TabularMdp(start, std::move(p), std::move(r));
}

}  // namespace

LinearMdp::LinearMdp(int start_state, int num_actions, std::vector<Matrix> features, std::vector<Matrix> mu,
                     std::vector<Vector> theta)
    : num_states_(mu.empty() ? 0 : static_cast<int>(mu.front().rows())),
      num_actions_(num_actions),
      start_(start_state),
      features_(std::move(features)),
      mu_(std::move(mu)),
      theta_(std::move(theta)),
      tabular_(build_tabular(start_state, num_actions, features_, mu_, theta_)) {}

Matrix LinearMdp::reward_matrix(int h) const { return tabular_.rewards(h); }

Vector linear_transition(const LinearMdp& model, int h, int s, int a) {
  if (h < 0 || h >= model.horizon() || s < 0 || s >= model.num_states() || a < 0 || a >= model.num_actions())
    throw std::out_of_range("linear_transition: index out of range");
  return model.mu(h) * model.features(h).row(s * model.num_actions() + a).transpose();
}

LinearMdp tabular_to_linear(const TabularMdp& mdp) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  const int d = S * A;
  std::vector<Matrix> features(mdp.horizon(), Matrix::Identity(d, d));
  std::vector<Matrix> mu;
  std::vector<Vector> theta;
  for (int h = 0; h < mdp.horizon(); ++h) {
    mu.push_back(mdp.transitions(h).transpose());
    theta.push_back(flatten(mdp.rewards(h)));
  }
  return LinearMdp(mdp.start_state(), A, std::move(features), std::move(mu), std::move(theta));
}

NormalizationReport normalization_constant(const LinearMdp& model) {
  NormalizationReport report;
  for (int h = 0; h < model.horizon(); ++h) {
    if (model.theta(h).norm() > 1.0 + kFeatureNormTol) throw InvariantError("theta-norm", "||theta^h|| exceeds one");
    double total = 0.0;
    for (int s = 0; s < model.num_states(); ++s) total += std::sqrt(model.mu(h).row(s).norm());
    report.c_m = std::max(report.c_m, total);
  }
  report.passes = std::isfinite(report.c_m);
  return report;
}

TrustedStructureLinear TrustedStructureLinear::empty_for(const LinearMdp& like, double zeta) {
  if (!(zeta > 0.0)) throw std::domain_error("zeta must be positive");
  TrustedStructureLinear st;
  st.horizon = like.horizon();
  st.num_states = like.num_states();
  st.num_actions = like.num_actions();
  st.start_state = like.start_state();
  st.zeta = zeta;
  st.features = like.all_features();
  return st;
}

Matrix estimated_kernel(const TrustedStructureLinear& structure, int j) {
  return structure.features[j] * structure.layers[j].mu.transpose();
}

std::vector<Matrix> trusted_kernels(const TrustedStructureLinear& structure, int count) {
  if (count > structure.deepest_layer())
    throw std::invalid_argument("linear trusted structure lacks the trusted sets for this layer");
  std::vector<Matrix> kernels;
  kernels.reserve(count);
  for (int j = 0; j < count; ++j) {
    Matrix k = estimated_kernel(structure, j);
    for (int s = 0; s < structure.num_states; ++s)
      if (!structure.trusted[j][s]) k.col(s).setZero();
    kernels.push_back(std::move(k));
  }
  return kernels;
}

OccupancyTensor trusted_occupancy_linear(const TrustedStructureLinear& structure, const Policy& policy, int upto) {
  if (policy.horizon() != structure.horizon || policy.num_states() != structure.num_states ||
      policy.num_actions() != structure.num_actions)
    throw DimensionError("policy does not match the linear trusted structure");
  const auto kernels = trusted_kernels(structure, upto);
  return truncated_occupancy(structure.start_state, kernels, policy, upto);
}

Eigen::Array<bool, Eigen::Dynamic, 1> trusted_set_linear(const TrustedStructureLinear& structure,
                                                         const Policy& executed_policy, int h) {
  if (h < 0 || h >= structure.layers_estimated())
    throw std::invalid_argument("trusted_set_linear: layer estimate missing");
  const OccupancyTensor occ = trusted_occupancy_linear(structure, executed_policy, h);
  const Vector inflow = estimated_kernel(structure, h).transpose() * flatten(occ.mass[h]);
  return inflow.array() >= 1.0 / structure.zeta;
}

void extend_structure(TrustedStructureLinear& structure, LinearLayerEstimate estimate,
                      const Policy& executed_policy) {
  if (structure.layers_estimated() != structure.deepest_layer())
    throw std::logic_error("extend_structure: structure is not in a consistent state");
  if (estimate.mu.rows() != structure.num_states || estimate.mu.cols() != structure.dim() ||
      estimate.theta.size() != structure.dim())
    throw DimensionError("linear layer estimate shape mismatch");
  structure.layers.push_back(std::move(estimate));
  const int h = structure.layers_estimated() - 1;
  structure.trusted.push_back(trusted_set_linear(structure, executed_policy, h));
}

Matrix feature_covariance(const Matrix& features, const Matrix& weights) {
  return features.transpose() * flatten(weights).asDiagonal() * features;
}

Matrix trusted_covariance(const TrustedStructureLinear& structure, const Policy& policy, int j) {
  const OccupancyTensor occ = trusted_occupancy_linear(structure, policy, j);
  return feature_covariance(structure.features[j], occ.mass[j]);
}

LinearMdp aggregate_linear(int start_state, int num_actions, std::span<const Matrix> features,
                           std::span<const LinearLayerEstimate> layers) {
  std::vector<Matrix> mu;
  std::vector<Vector> theta;
  for (const auto& layer : layers) {
    mu.push_back(layer.mu);
    theta.push_back(layer.theta);
  }
  return LinearMdp(start_state, num_actions, std::vector<Matrix>(features.begin(), features.end()), std::move(mu),
                   std::move(theta));
}

LinearLayerEstimate layer_of(const LinearMdp& model, int h) { return {model.mu(h), model.theta(h)}; }

void check_class(const LinearModelClass& cls) {
  if (cls.models.empty()) throw std::invalid_argument("model class is empty");
  const auto& ref = cls.models.front();
  for (const auto& m : cls.models)
    if (m.horizon() != ref.horizon() || m.num_states() != ref.num_states() || m.num_actions() != ref.num_actions() ||
        m.dim() != ref.dim() || m.start_state() != ref.start_state())
      throw DimensionError("linear model class members disagree on their dimensions");
}

EstimationReport lse_linear(const LinearModelClass& cls, const Policy& policy, std::span<const Trajectory> data) {
  check_class(cls);
  TabularModelClass shadow;
  shadow.models.reserve(cls.size());
  for (const auto& m : cls.models) shadow.models.push_back(m.tabular());
  return lse_estimate(shadow, policy, data);
}

}  // namespace doerl
