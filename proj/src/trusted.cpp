#include "doerl/trusted.hpp"

#include <stdexcept>

namespace doerl {

namespace {

Vector flatten(const Matrix& sa) {
  Vector flat(sa.size());
  const auto A = sa.cols();
  for (Eigen::Index s = 0; s < sa.rows(); ++s) flat.segment(s * A, A) = sa.row(s).transpose();
  return flat;
}

void check_policy_shape(const TrustedStructure& st, const Policy& policy) {
  if (policy.horizon() != st.horizon || policy.num_states() != st.num_states ||
      policy.num_actions() != st.num_actions)
    throw DimensionError("policy does not match the trusted structure");
}

}  // namespace

TrustedStructure TrustedStructure::empty_for(const TabularMdp& like, double zeta) {
  if (!(zeta > 0.0)) throw std::domain_error("zeta must be positive");
  TrustedStructure st;
  st.horizon = like.horizon();
  st.num_states = like.num_states();
  st.num_actions = like.num_actions();
  st.start_state = like.start_state();
  st.zeta = zeta;
  return st;
}

AggregatedModel aggregate_model(int start_state, std::span<const LayerEstimate> layers) {
  std::vector<Matrix> p;
  std::vector<Matrix> r;
  for (const auto& layer : layers) {
    p.push_back(layer.transitions);
    r.push_back(layer.rewards);
  }
  return TabularMdp(start_state, std::move(p), std::move(r));
}

LayerEstimate layer_of(const TabularMdp& model, int h) { return {model.transitions(h), model.rewards(h)}; }

OccupancyTensor truncated_occupancy(int start_state, std::span<const Matrix> kernels, const Policy& policy,
                                    int upto) {
  if (upto < 0 || upto >= policy.horizon()) throw std::out_of_range("truncated_occupancy: layer out of range");
  if (static_cast<int>(kernels.size()) < upto) throw std::invalid_argument("truncated_occupancy: missing kernels");
  const int S = policy.num_states();
  OccupancyTensor occ;
  occ.mass.reserve(upto + 1);
  Vector state = Vector::Zero(S);
  state[start_state] = 1.0;
  for (int j = 0; j <= upto; ++j) {
    occ.mass.push_back(state.asDiagonal() * policy.layer(j));
    if (j == upto) break;
    state = kernels[j].transpose() * flatten(occ.mass[j]);
  }
  return occ;
}

std::vector<Matrix> truncated_occupancy_pullback(const OccupancyTensor& occ, std::span<const Matrix> kernels,
                                                 const Policy& policy, std::span<const Matrix> weights, int upto) {
  const int S = policy.num_states();
  const int A = policy.num_actions();
  std::vector<Matrix> grad(policy.horizon(), Matrix::Zero(S, A));
  Vector upstream = Vector::Zero(S);  // adjoint of the state mass at layer j+1
  for (int j = upto; j >= 0; --j) {
    Matrix adj = weights[j];
    if (j < upto) {
      const Vector pulled = kernels[j] * upstream;
      for (int s = 0; s < S; ++s) adj.row(s) += pulled.segment(s * A, A).transpose();
    }
    const Vector state = occ.state_mass(j);
    grad[j] = state.asDiagonal() * adj;
    upstream = adj.cwiseProduct(policy.layer(j)).rowwise().sum();
  }
  return grad;
}

std::vector<Matrix> trusted_kernels(const TrustedStructure& structure, int count) {
  if (count > static_cast<int>(structure.trusted.size()))
    throw std::invalid_argument("trusted structure lacks the trusted sets for this layer");
  std::vector<Matrix> kernels;
  kernels.reserve(count);
  for (int j = 0; j < count; ++j)
    kernels.push_back(structure.trusted[j].select(structure.layers[j].transitions, 0.0));
  return kernels;
}

OccupancyTensor trusted_occupancy(const TrustedStructure& structure, const Policy& policy, int upto) {
  check_policy_shape(structure, policy);
  const auto kernels = trusted_kernels(structure, upto);
  return truncated_occupancy(structure.start_state, kernels, policy, upto);
}

TransitionMask build_trusted_set(const TrustedStructure& structure, const Policy& executed_policy, int h) {
  check_policy_shape(structure, executed_policy);
  if (h < 0 || h >= structure.layers_estimated())
    throw std::invalid_argument("build_trusted_set: layer estimate missing");
  const OccupancyTensor occ = trusted_occupancy(structure, executed_policy, h);
  const Vector flow = flatten(occ.mass[h]);
  const Matrix product = flow.asDiagonal() * structure.layers[h].transitions;
  return product.array() >= 1.0 / structure.zeta;
}

void extend_structure(TrustedStructure& structure, LayerEstimate estimate, const Policy& executed_policy) {
  if (structure.layers_estimated() != structure.deepest_layer())
    throw std::logic_error("extend_structure: structure is not in a consistent state");
  if (estimate.transitions.rows() != structure.num_states * structure.num_actions ||
      estimate.transitions.cols() != structure.num_states || estimate.rewards.rows() != structure.num_states ||
      estimate.rewards.cols() != structure.num_actions)
    throw DimensionError("layer estimate shape mismatch");
  structure.layers.push_back(std::move(estimate));
  const int h = structure.layers_estimated() - 1;
  structure.trusted.push_back(build_trusted_set(structure, executed_policy, h));
}

OccupancyTensor true_observable_occupancy(const TabularMdp& truth, const TrustedStructure& structure,
                                          const Policy& policy) {
  check_policy_shape(structure, policy);
  check_compatible(truth, policy);
  const int upto = std::min(structure.deepest_layer(), structure.horizon - 1);
  std::vector<Matrix> kernels;
  for (int j = 0; j < upto; ++j) kernels.push_back(structure.trusted[j].select(truth.transitions(j), 0.0));
  return truncated_occupancy(structure.start_state, kernels, policy, upto);
}

OccupancyTensor estimated_occupancy(const AggregatedModel& model, const Policy& policy) {
  return occupancy_forward(model, policy);
}

Policy mixture_policy(const TrustedStructure& structure, const Policy& pi1, const Policy& pi2, double lambda,
                      int upto) {
  check_policy_shape(structure, pi1);
  check_policy_shape(structure, pi2);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::domain_error("mixture_policy: lambda outside [0,1]");
  const auto kernels = trusted_kernels(structure, upto);
  const OccupancyTensor d1 = truncated_occupancy(structure.start_state, kernels, pi1, upto);
  const OccupancyTensor d2 = truncated_occupancy(structure.start_state, kernels, pi2, upto);
  const int S = structure.num_states;
  const int A = structure.num_actions;
  std::vector<Matrix> mixed;
  for (int j = 0; j < pi1.horizon(); ++j) {
    if (j > upto) {
      mixed.push_back(lambda * pi1.layer(j) + (1.0 - lambda) * pi2.layer(j));
      continue;
    }
    Matrix layer = lambda * d1.mass[j] + (1.0 - lambda) * d2.mass[j];
    for (int s = 0; s < S; ++s) {
      const double total = layer.row(s).sum();
      if (total > 0.0)
        layer.row(s) /= total;
      else
        layer.row(s).setConstant(1.0 / A);
    }
    mixed.push_back(std::move(layer));
  }
  return Policy(std::move(mixed));
}

}  // namespace doerl
