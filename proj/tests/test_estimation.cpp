#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "doerl/estimation.hpp"
#include "support.hpp"

using namespace doerl;
using namespace testing_support;

namespace {

TabularModelClass mixed_class(const TabularMdp& truth, int size, double rate, Rng& rng, std::size_t truth_at) {
  TabularModelClass cls;
  for (int k = 0; k < size; ++k) {
    if (static_cast<std::size_t>(k) == truth_at) {
      cls.models.push_back(truth);
      continue;
    }
    std::vector<Matrix> p;
    std::vector<Matrix> r;
    for (int h = 0; h < truth.horizon(); ++h) {
      const Matrix noise = random_stochastic(truth.num_states() * truth.num_actions(), truth.num_states(), rng);
      p.push_back((1.0 - rate) * truth.transitions(h) + rate * noise);
      Matrix rh = truth.rewards(h);
      for (Eigen::Index i = 0; i < rh.size(); ++i)
        rh(i) = std::clamp(rh(i) + rate * (uniform01(rng) - 0.5) / truth.horizon(), 0.0, 1.0 / truth.horizon());
      r.push_back(rh);
    }
    cls.models.emplace_back(truth.start_state(), p, r);
  }
  cls.realizable_index = truth_at;
  return cls;
}

Trajectory as_trajectory(const Observation& o, std::uint64_t id = 0) {
  Trajectory t;
  t.policy_id = id;
  for (std::size_t h = 0; h < o.states.size(); ++h) t.steps.push_back({o.states[h], o.actions[h], o.bits[h] == 1});
  return t;
}

double brute_log_likelihood(const TabularMdp& m, const Trajectory& t) {
  double ll = 0.0;
  const int H = m.horizon();
  for (int h = 0; h < H; ++h) {
    const auto& st = t.steps[h];
    if (h > 0) ll += std::log(m.p(h - 1, t.steps[h - 1].state, t.steps[h - 1].action, st.state));
    const double q = H * m.r(h, st.state, st.action);
    ll += std::log(st.reward_bit ? q : 1.0 - q);
  }
  return ll;
}

TabularMdp deterministic_model(int H, int first_target) {
  std::vector<Matrix> p;
  std::vector<Matrix> r;
  for (int h = 0; h < H; ++h) {
    Matrix ph = Matrix::Zero(2, 2);
    ph.col(h == 0 ? first_target : 0).setOnes();
    p.push_back(ph);
    r.push_back(Matrix::Zero(2, 1));
  }
  return TabularMdp(0, p, r);
}

}  // namespace

TEST_CASE("oracle_rate closed forms") {
  const OracleRate unit;
  CHECK(oracle_rate(unit, 1, 7, 0.5) == doctest::Approx(std::log(2.0) / 7).epsilon(1e-14));
  CHECK(std::abs(oracle_rate(unit, 8, 1024, 0.05) - std::log(160.0) / 1024) <= 1e-18);
  CHECK(std::abs(oracle_rate(unit, 8, 1024, 0.05) - 4.9562e-3) < 1e-7);
  CHECK(oracle_rate(unit, 8, 2048, 0.05) == doctest::Approx(oracle_rate(unit, 8, 1024, 0.05) / 2).epsilon(1e-15));
  CHECK(oracle_rate(unit, 8, 100, 0.01) > oracle_rate(unit, 8, 100, 0.02));
  CHECK(oracle_rate(OracleRate{3.0}, 8, 100, 0.01) == doctest::Approx(3 * oracle_rate(unit, 8, 100, 0.01)));
  CHECK_THROWS_AS(oracle_rate(unit, 8, 0, 0.05), std::domain_error);
  CHECK_THROWS_AS(oracle_rate(unit, 8, 10, 0.6), std::domain_error);
  CHECK_THROWS_AS(oracle_rate(unit, 0, 10, 0.1), std::domain_error);
  CHECK_THROWS_AS(oracle_rate(OracleRate{0.0}, 8, 10, 0.1), std::domain_error);
}

TEST_CASE("trajectory likelihoods agree with a direct product") {
  Rng rng(3);
  const TabularMdp m = random_mdp(2, 2, 3, rng);
  const Policy pi = random_policy(3, 2, 2, rng);
  for (int k = 0; k < 50; ++k) {
    const Trajectory t = sample_trajectory(m, pi, rng);
    CHECK(std::abs(trajectory_log_likelihood(m, t) - brute_log_likelihood(m, t)) <= 1e-12);
    double pol = 1.0;
    for (int h = 0; h < 3; ++h) pol *= pi(h, t.steps[h].state, t.steps[h].action);
    CHECK(trajectory_probability(m, pi, t) == doctest::Approx(pol * std::exp(brute_log_likelihood(m, t))).epsilon(1e-12));
  }
}

TEST_CASE("mle_estimate basics") {
  Rng rng(5);
  const TabularMdp m = random_mdp(2, 2, 2, rng);
  TabularModelClass single{{m}, 0};
  std::vector<Trajectory> data{sample_trajectory(m, Policy::uniform(2, 2, 2), rng)};
  CHECK(mle_estimate(single, data).chosen_index == 0);
  CHECK_THROWS(mle_estimate(single, std::vector<Trajectory>{}));

  // model 1 cannot produce the transition into state 1 that model 0 always takes
  TabularModelClass pair{{deterministic_model(2, 1), deterministic_model(2, 0)}, 0};
  Rng r2(8);
  std::vector<Trajectory> obs{sample_trajectory(pair.models[0], Policy::uniform(2, 2, 1), r2)};
  const EstimationReport rep = mle_estimate(pair, obs);
  CHECK(rep.chosen_index == 0);
  CHECK(rep.scores[1] == -std::numeric_limits<double>::infinity());
}

TEST_CASE("mle_estimate matches the brute-force argmax") {
  Rng rng(7);
  const TabularMdp truth = random_mdp(3, 2, 2, rng);
  const TabularModelClass cls = mixed_class(truth, 5, 0.4, rng, 2);
  const Policy pi = random_policy(2, 3, 2, rng);
  std::vector<Trajectory> data;
  for (int i = 0; i < 40; ++i) data.push_back(sample_trajectory(truth, pi, rng));
  const EstimationReport rep = mle_estimate(cls, data);
  std::size_t best = 0;
  std::vector<double> ll(cls.size(), 0.0);
  for (std::size_t k = 0; k < cls.size(); ++k)
    for (const auto& t : data) ll[k] += brute_log_likelihood(cls.models[k], t);
  for (std::size_t k = 1; k < cls.size(); ++k)
    if (ll[k] > ll[best]) best = k;
  CHECK(rep.chosen_index == best);
  for (std::size_t k = 0; k < cls.size(); ++k) CHECK((rep.scores[k] == ll[k] || std::abs(rep.scores[k] - ll[k]) <= 1e-9));
}

TEST_CASE("lse_estimate matches the brute-force criterion") {
  Rng rng(9);
  const TabularMdp truth = random_mdp(2, 2, 2, rng);
  const TabularModelClass cls = mixed_class(truth, 4, 0.5, rng, 1);
  const Policy pi = random_policy(2, 2, 2, rng);
  std::vector<Trajectory> data;
  for (int i = 0; i < 30; ++i) data.push_back(sample_trajectory(truth, pi, rng, 4));
  const EstimationReport rep = lse_estimate(cls, pi, data);
  for (std::size_t k = 0; k < cls.size(); ++k) {
    double sq = 0.0;
    for (const auto& o : all_observations(cls.models[k], pi)) sq += o.probability * o.probability;
    double emp = 0.0;
    for (const auto& t : data) emp += trajectory_probability(cls.models[k], pi, t);
    CHECK(std::abs(rep.scores[k] - (sq - 2.0 * emp / data.size())) <= 1e-12);
  }
  TabularModelClass single{{truth}, 0};
  CHECK(lse_estimate(single, pi, data).chosen_index == 0);

  data.push_back(sample_trajectory(truth, pi, rng, 5));
  CHECK_THROWS(lse_estimate(cls, pi, data));
}

TEST_CASE("lse_estimate on a fully deterministic truth") {
  const TabularMdp truth = deterministic_model(2, 1);
  const Policy pi = Policy::uniform(2, 2, 1);
  TabularModelClass cls{{deterministic_model(2, 0), truth}, 1};
  Rng rng(1);
  std::vector<Trajectory> data{sample_trajectory(truth, pi, rng), sample_trajectory(truth, pi, rng)};
  const EstimationReport rep = lse_estimate(cls, pi, data);
  CHECK(rep.chosen_index == 1);
  CHECK(rep.scores[1] == doctest::Approx(1.0 - 2.0));
}

TEST_CASE("estimators recover the realizable model at n = 4096") {
  Rng env(13);
  const TabularMdp truth = random_mdp(3, 2, 3, env);
  const TabularModelClass cls = mixed_class(truth, 8, 0.3, env, 5);
  const Policy pi = Policy::uniform(3, 3, 2);
  int mle_hits = 0;
  int lse_hits = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    std::vector<Trajectory> data;
    for (int i = 0; i < 4096; ++i) data.push_back(sample_trajectory(truth, pi, rng));
    mle_hits += mle_estimate(cls, data).chosen_index == 5;
    lse_hits += lse_estimate(cls, pi, data).chosen_index == 5;
  }
  CHECK(mle_hits >= 95);
  CHECK(lse_hits >= 95);
}

TEST_CASE("exact divergences match enumeration") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const int A = 1 + trial % 2;
    const TabularMdp a = random_mdp(2, A, 2, rng);
    const TabularMdp b = random_mdp(2, A, 2, rng);
    const Policy pi = random_policy(2, 2, A, rng);
    const auto oa = all_observations(a, pi);
    const auto ob = all_observations(b, pi);
    double hel = 0.0;
    double l2 = 0.0;
    double inner = 0.0;
    for (std::size_t i = 0; i < oa.size(); ++i) {
      hel += std::pow(std::sqrt(oa[i].probability) - std::sqrt(ob[i].probability), 2);
      l2 += std::pow(oa[i].probability - ob[i].probability, 2);
      inner += oa[i].probability * ob[i].probability;
    }
    CHECK(std::abs(hellinger_sq_exact(a, b, pi) - hel) <= 1e-10);
    CHECK(std::abs(l2_sq_exact(a, b, pi) - l2) <= 1e-10);
    CHECK(std::abs(trajectory_inner_product(a, b, pi) - inner) <= 1e-12);
    CHECK(std::abs(hellinger_sq_exact(a, a, pi)) <= 1e-12);
    CHECK(std::abs(l2_sq_exact(a, a, pi)) <= 1e-12);
  }
}

TEST_CASE("divergences at disjoint supports") {
  const TabularMdp a = deterministic_model(2, 0);
  const TabularMdp b = deterministic_model(2, 1);
  const Policy pi = Policy::uniform(2, 2, 1);
  CHECK(hellinger_sq_exact(a, b, pi) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(l2_sq_exact(a, b, pi) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("Hellinger inequalities on enumerated laws") {
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const TabularMdp a = random_mdp(2, 2, 2, rng);
    const TabularMdp b = random_mdp(2, 2, 2, rng);
    const Policy pi = random_policy(2, 2, 2, rng);
    const auto oa = all_observations(a, pi);
    const auto ob = all_observations(b, pi);
    const double dh = hellinger_sq_exact(a, b, pi);

    double tv = 0.0;
    for (std::size_t i = 0; i < oa.size(); ++i) tv += 0.5 * std::abs(oa[i].probability - ob[i].probability);
    CHECK(tv * tv <= 2.0 * dh + 1e-12);

    // bounded test function h(z) in [-1, 1]
    double ea = 0.0, eb = 0.0, e2a = 0.0, e2b = 0.0;
    for (std::size_t i = 0; i < oa.size(); ++i) {
      const double hz = std::sin(1.7 * static_cast<double>(i) + trial);
      ea += hz * oa[i].probability;
      eb += hz * ob[i].probability;
      e2a += hz * hz * oa[i].probability;
      e2b += hz * hz * ob[i].probability;
    }
    CHECK(std::abs(ea - eb) <= std::sqrt((e2a + e2b) / 2.0 * dh) + 1e-12);

    // marginal of the last state cannot be farther apart
    Vector ma = Vector::Zero(2);
    Vector mb = Vector::Zero(2);
    for (std::size_t i = 0; i < oa.size(); ++i) {
      ma[oa[i].states[1]] += oa[i].probability;
      mb[ob[i].states[1]] += ob[i].probability;
    }
    CHECK((ma.cwiseSqrt() - mb.cwiseSqrt()).squaredNorm() <= dh + 1e-12);
  }
}

TEST_CASE("trajectory_probability sums to one over every observation") {
  Rng rng(33);
  const TabularMdp m = random_mdp(2, 2, 2, rng);
  const Policy pi = random_policy(2, 2, 2, rng);
  double total = 0.0;
  for (const auto& o : all_observations(m, pi)) {
    const double p = trajectory_probability(m, pi, as_trajectory(o));
    CHECK(std::abs(p - o.probability) <= 1e-15);
    total += p;
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
}
