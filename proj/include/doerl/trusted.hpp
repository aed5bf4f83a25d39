#pragma once

#include <span>
#include <vector>

#include "doerl/mdp.hpp"

namespace doerl {

/// Boolean (S*A) x S table; entry (s*A+a, s') marks a trusted triple (s, a, s').
using TransitionMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Layer-h slice of a segment's fitted model.
struct LayerEstimate {
  Matrix transitions;  ///< (S*A) x S, rows on the simplex
  Matrix rewards;      ///< S x A, entries in [0, 1/H]
};

/// Per-epoch trusted transition sets and the layer estimates that feed them.
///
/// `layers[j]` is the layer-j estimate taken from segment j of the current epoch, and
/// `trusted[j]` gates the flow from layer j into layer j+1.  Both grow together as
/// segments complete; `trusted.size() <= layers.size()`.
struct TrustedStructure {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  int start_state = 0;
  double zeta = 1.0;
  std::vector<LayerEstimate> layers;
  std::vector<TransitionMask> trusted;

  static TrustedStructure empty_for(const TabularMdp& like, double zeta);

  int layers_estimated() const { return static_cast<int>(layers.size()); }
  /// Deepest layer whose trusted occupancy is computable.
  int deepest_layer() const { return static_cast<int>(trusted.size()); }

  /// Number of trusted triples in trusted[j].
  long long trusted_count(int j) const { return trusted[j].count(); }
};

/// Aggregated model M_out: stitches one layer estimate per layer.
using AggregatedModel = TabularMdp;

AggregatedModel aggregate_model(int start_state, std::span<const LayerEstimate> layers);

LayerEstimate layer_of(const TabularMdp& model, int h);

/// Occupancy recursion that routes flow only through `kernels`, where kernels[j] is the
/// (S*A) x S sub-stochastic flow from layer j to j+1.  Computes layers 0..upto.
OccupancyTensor truncated_occupancy(int start_state, std::span<const Matrix> kernels, const Policy& policy,
                                    int upto);

/// Reverse-mode derivative of sum_j <weights[j], d[j]> (j = 0..upto) with respect to
/// the raw policy entries, where d is `truncated_occupancy(...)`.  Returns S x A
/// matrices for every policy layer (zero beyond upto).
std::vector<Matrix> truncated_occupancy_pullback(const OccupancyTensor& occ, std::span<const Matrix> kernels,
                                                 const Policy& policy, std::span<const Matrix> weights, int upto);

/// Masked kernels mask .* P-hat for j < count.
std::vector<Matrix> trusted_kernels(const TrustedStructure& structure, int count);

/// Trusted occupancy d~ up to (and including) layer `upto`.
OccupancyTensor trusted_occupancy(const TrustedStructure& structure, const Policy& policy, int upto);

/// Trusted set gating layer h -> h+1: d~^h(s,a; executed) * P-hat^h(s'|s,a) >= 1/zeta.
TransitionMask build_trusted_set(const TrustedStructure& structure, const Policy& executed_policy, int h);

/// Appends the next layer estimate and the trusted set it induces under `executed_policy`.
void extend_structure(TrustedStructure& structure, LayerEstimate estimate, const Policy& executed_policy);

/// Same recursion as trusted_occupancy with the true kernel in place of P-hat; goes as
/// deep as the trusted sets allow.
OccupancyTensor true_observable_occupancy(const TabularMdp& truth, const TrustedStructure& structure,
                                          const Policy& policy);

/// Occupancy under the aggregated estimated model (untruncated).
OccupancyTensor estimated_occupancy(const AggregatedModel& model, const Policy& policy);

/// Policy whose trusted occupancies on layers 0..upto equal
/// lambda * d~(pi1) + (1 - lambda) * d~(pi2).  Layers after `upto` take the
/// entrywise mixture of the two policies.
Policy mixture_policy(const TrustedStructure& structure, const Policy& pi1, const Policy& pi2, double lambda,
                      int upto);

}  // namespace doerl
