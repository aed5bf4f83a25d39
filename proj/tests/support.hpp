#pragma once

// Test-side generators and brute-force oracles.  Nothing here calls the dynamic
// programs under test.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "doerl/mdp.hpp"

namespace testing_support {

using doerl::Matrix;
using doerl::Policy;
using doerl::Rng;
using doerl::TabularMdp;

inline Matrix random_stochastic(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = 0.05 + doerl::uniform01(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

inline TabularMdp random_mdp(int S, int A, int H, Rng& rng, int start = 0) {
  std::vector<Matrix> p;
  std::vector<Matrix> r;
  for (int h = 0; h < H; ++h) {
    p.push_back(random_stochastic(S * A, S, rng));
    Matrix rh(S, A);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) rh(s, a) = doerl::uniform01(rng) / H;
    r.push_back(rh);
  }
  return TabularMdp(start, p, r);
}

inline Policy random_policy(int H, int S, int A, Rng& rng) {
  std::vector<Matrix> layers;
  for (int h = 0; h < H; ++h) layers.push_back(random_stochastic(S, A, rng));
  return Policy(layers);
}

/// One full observation: states s_1..s_H, actions, reward bits.
struct Observation {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<int> bits;
  double probability = 0.0;
};

/// Every (state, action, reward-bit) sequence with its probability under M(pi), by
/// nested iteration over all index tuples.  Zero-probability sequences are kept.
inline std::vector<Observation> all_observations(const TabularMdp& m, const Policy& pi) {
  const int H = m.horizon();
  const int S = m.num_states();
  const int A = m.num_actions();
  std::vector<Observation> out;
  Observation cur;
  cur.states.resize(H);
  cur.actions.resize(H);
  cur.bits.resize(H);
  std::function<void(int)> rec = [&](int h) {
    if (h == H) {
      double p = 1.0;
      for (int j = 0; j < H; ++j) {
        const int s = cur.states[j];
        const int a = cur.actions[j];
        if (j == 0 && s != m.start_state()) p = 0.0;
        if (j > 0) p *= m.p(j - 1, cur.states[j - 1], cur.actions[j - 1], s);
        p *= pi(j, s, a);
        const double q = H * m.r(j, s, a);
        p *= cur.bits[j] ? q : 1.0 - q;
      }
      cur.probability = p;
      out.push_back(cur);
      return;
    }
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        for (int b = 0; b < 2; ++b) {
          cur.states[h] = s;
          cur.actions[h] = a;
          cur.bits[h] = b;
          rec(h + 1);
        }
  };
  rec(0);
  return out;
}

/// Mean total reward, occupancy and law of one layer, by summing over all_observations.
inline double brute_value(const TabularMdp& m, const Policy& pi) {
  double v = 0.0;
  for (const auto& o : all_observations(m, pi))
    for (int h = 0; h < m.horizon(); ++h) v += o.probability * m.r(h, o.states[h], o.actions[h]);
  return v;
}

inline std::vector<Matrix> brute_occupancy(const TabularMdp& m, const Policy& pi) {
  std::vector<Matrix> d(m.horizon(), Matrix::Zero(m.num_states(), m.num_actions()));
  for (const auto& o : all_observations(m, pi))
    for (int h = 0; h < m.horizon(); ++h) d[h](o.states[h], o.actions[h]) += o.probability;
  return d;
}

/// Every deterministic non-stationary policy (A^(S*H) of them).
inline std::vector<Policy> all_deterministic(int H, int S, int A) {
  std::vector<Policy> out;
  const int slots = H * S;
  std::vector<int> choice(slots, 0);
  while (true) {
    std::vector<std::vector<int>> acts(H, std::vector<int>(S));
    for (int i = 0; i < slots; ++i) acts[i / S][i % S] = choice[i];
    out.push_back(Policy::deterministic(acts, A));
    int i = 0;
    while (i < slots && ++choice[i] == A) choice[i++] = 0;
    if (i == slots) break;
  }
  return out;
}

inline double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

/// Random direction with zero row sums, so small steps stay on the simplices.
inline std::vector<Matrix> tangent_direction(int H, int S, int A, Rng& rng) {
  std::vector<Matrix> dir;
  for (int h = 0; h < H; ++h) {
    Matrix d(S, A);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) d(s, a) = doerl::uniform01(rng) - 0.5;
    d.colwise() -= d.rowwise().mean();
    dir.push_back(d);
  }
  return dir;
}

inline Policy shifted(const Policy& pi, const std::vector<Matrix>& dir, double t) {
  std::vector<Matrix> layers = pi.layers();
  for (std::size_t h = 0; h < layers.size(); ++h) layers[h] += t * dir[h];
  return Policy(layers);
}

inline double directional(const std::vector<Matrix>& grad, const std::vector<Matrix>& dir) {
  double out = 0.0;
  for (std::size_t h = 0; h < grad.size(); ++h) out += grad[h].cwiseProduct(dir[h]).sum();
  return out;
}

/// Central difference of f along dir.
template <class F>
double central_difference(F&& f, const Policy& pi, const std::vector<Matrix>& dir, double step) {
  return (f(shifted(pi, dir, step)) - f(shifted(pi, dir, -step))) / (2.0 * step);
}

}  // namespace testing_support
