#include "doerl/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "doerl/trusted.hpp"

namespace doerl {

bool EpochSchedule::satisfies_growth() const {
  for (int m = 2; m <= num_epochs(); ++m)
    if (taus[m] - taus[m - 1] < taus[m - 1]) return false;
  return true;
}

EpochSchedule schedule_known_T(long long rounds, int horizon) {
  if (horizon < 1) throw std::domain_error("schedule_known_T: horizon must be positive");
  if (rounds < horizon) throw std::domain_error("schedule_known_T: T must be at least H");
  EpochSchedule sched;
  sched.kind = EpochSchedule::Kind::KnownHorizon;
  sched.horizon = horizon;
  sched.requested_rounds = rounds;
  sched.truncated = rounds % horizon != 0;
  const long long k = rounds / horizon;
  sched.taus.push_back(0);
  const double kd = static_cast<double>(k);
  for (int m = 1; sched.taus.back() < k; ++m) {
    const double raw = 2.0 * std::pow(kd, 1.0 - std::ldexp(1.0, -m));
    // pow can overshoot an exact integer by an ulp or two
    const double guarded = std::ceil(raw * (1.0 - 1e-12));
    const long long tau = guarded >= kd ? k : static_cast<long long>(guarded);
    if (tau > sched.taus.back()) sched.taus.push_back(tau);
  }
  return sched;
}

EpochSchedule schedule_doubling(long long budget, int horizon) {
  if (horizon < 1) throw std::domain_error("schedule_doubling: horizon must be positive");
  if (budget < horizon) throw std::domain_error("schedule_doubling: budget must be at least H");
  EpochSchedule sched;
  sched.kind = EpochSchedule::Kind::Doubling;
  sched.horizon = horizon;
  sched.requested_rounds = budget;
  const long long k = budget / horizon;
  sched.taus.push_back(0);
  for (long long tau = 2; tau <= k; tau *= 2) sched.taus.push_back(tau);
  if (sched.taus.back() < k) {
    sched.taus.push_back(k);
    sched.truncated = true;
  }
  if (budget % horizon != 0) sched.truncated = true;
  return sched;
}

double epoch_confidence(const EpochSchedule& schedule, int m, double delta) {
  if (m < 1 || m > schedule.num_epochs()) throw std::out_of_range("epoch index out of range");
  if (!(delta > 0.0 && delta < 0.5)) throw std::domain_error("delta must lie in (0, 1/2)");
  if (schedule.kind == EpochSchedule::Kind::Doubling) return delta / (4.0 * m * m);
  const double n = schedule.num_epochs();
  return delta / (2.0 * n * n);
}

void validate(const Knobs& knobs) {
  for (double k : {knobs.c_beta, knobs.c_eta, knobs.c_zeta})
    if (!(k > 0.0) || !std::isfinite(k)) throw std::domain_error("knobs must be positive and finite");
}

HyperParams tabular_hyperparams_from_rate(double rate, int S, int A, int H, const Knobs& knobs) {
  validate(knobs);
  if (!(rate > 0.0) || S < 1 || A < 1 || H < 1) throw std::domain_error("hyperparams_tabular: bad arguments");
  const double e2 = std::exp(2.0);
  const double h1 = H + 1.0;
  const double sa = static_cast<double>(S) * A;
  HyperParams hp;
  hp.rate = rate;
  hp.beta = knobs.c_beta * (9.0 - e2) / 2.0 * rate;
  hp.eta = knobs.c_eta / (1360.0 * h1 * h1 * h1 * sa * sa * sa * sa * std::sqrt(rate));
  hp.zeta = knobs.c_zeta * 136.0 * h1 * h1 * sa * sa * sa / std::sqrt(rate);
  return hp;
}

HyperParams linear_hyperparams_from_rate(double rate, int d, int H, double c_class, const Knobs& knobs) {
  validate(knobs);
  if (!(rate > 0.0) || d < 1 || H < 1 || !(c_class >= 0.0)) throw std::domain_error("hyperparams_linear: bad arguments");
  const double c2 = c_class * c_class;
  const double g = (c2 + 1.0) * (c2 + c_class + 11.0);
  HyperParams hp;
  hp.rate = rate;
  hp.beta = knobs.c_beta * rate * rate;
  hp.eta = knobs.c_eta / (40.0 * g * H * H * std::pow(rate, 0.2));
  hp.zeta = knobs.c_zeta * std::sqrt(10.0 * g) / (std::sqrt(static_cast<double>(d)) * std::pow(rate, 0.4));
  return hp;
}

HyperParams hyperparams_tabular(int m, const EpochSchedule& schedule, double delta, int S, int A, int H,
                                const OracleRate& rate, std::size_t class_size, const Knobs& knobs) {
  const double conf = epoch_confidence(schedule, m, delta);
  HyperParams hp = tabular_hyperparams_from_rate(oracle_rate(rate, class_size, schedule.epoch_length(m), conf), S, A,
                                                 H, knobs);
  hp.confidence = conf;
  return hp;
}

HyperParams hyperparams_linear(int m, const EpochSchedule& schedule, double delta, int d, int H, double c_class,
                               const OracleRate& rate, std::size_t class_size, const Knobs& knobs) {
  const double conf = epoch_confidence(schedule, m, delta);
  HyperParams hp =
      linear_hyperparams_from_rate(oracle_rate(rate, class_size, schedule.epoch_length(m), conf), d, H, c_class, knobs);
  hp.confidence = conf;
  return hp;
}

std::vector<double> RunLog::cumulative() const {
  std::vector<double> out(round_regret.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < round_regret.size(); ++i) out[i] = acc += round_regret[i];
  return out;
}

std::vector<double> regret_recursion(const std::vector<double>& epsilons) {
  std::vector<double> out;
  for (std::size_t m = 0; m < epsilons.size(); ++m)
    out.push_back(m == 0 ? 2.0 * epsilons[0] + 0.1 : out.back() / 9.0 + 20.0 / 9.0 * epsilons[m]);
  return out;
}

TabularMdp initial_tabular_model(const TabularMdp& like) {
  const int S = like.num_states();
  const int A = like.num_actions();
  std::vector<Matrix> p(like.horizon(), Matrix::Constant(S * A, S, 1.0 / S));
  std::vector<Matrix> r(like.horizon(), Matrix::Zero(S, A));
  return TabularMdp(like.start_state(), std::move(p), std::move(r));
}

namespace {

double clean_regret(double r) {
  if (r < -1e-9) throw std::logic_error("negative policy regret");
  return std::max(r, 0.0);
}

std::uint64_t mix_seed(std::uint64_t seed, int m, int h) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(m) * 1024 + h + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void check_schedule(const EpochSchedule& schedule, int horizon) {
  if (schedule.horizon != horizon) throw std::invalid_argument("schedule horizon differs from the model horizon");
  if (schedule.taus.size() < 2 || schedule.taus.front() != 0)
    throw std::invalid_argument("schedule must start at 0 and contain an epoch");
  for (std::size_t i = 1; i < schedule.taus.size(); ++i)
    if (schedule.taus[i] <= schedule.taus[i - 1]) throw std::invalid_argument("schedule must be strictly increasing");
}

void append_rounds(RunLog& log, int m, int h, long long n, double regret) {
  for (long long i = 0; i < n; ++i) {
    log.round_epoch.push_back(m);
    log.round_segment.push_back(h);
    log.round_regret.push_back(regret);
  }
}

// max over executed policies of the value error of the new model in excess of
// pseudo-regret / 20 under the previous one
double epoch_epsilon(const TabularMdp& truth, const TabularMdp& prev, const TabularMdp& next,
                     const std::vector<Policy>& executed) {
  double eps = 1e-12;
  for (const auto& pi : executed) {
    const double err = std::abs(value_backward(next, pi).value - value_backward(truth, pi).value);
    eps = std::max(eps, err - pseudo_regret(prev, pi) / 20.0);
  }
  return eps;
}

void finish(RunLog& log, std::chrono::steady_clock::time_point start) {
  const auto cum = log.cumulative();
  log.cumulative_regret = cum.empty() ? 0.0 : cum.back();
  std::vector<double> eps;
  for (const auto& e : log.epochs) eps.push_back(e.epsilon);
  const auto rec = regret_recursion(eps);
  for (std::size_t i = 0; i < rec.size(); ++i) log.epochs[i].recursion_delta = rec[i];
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<Trajectory> collect(const TabularMdp& truth, const Policy& pi, long long n, Rng& rng, std::uint64_t id) {
  std::vector<Trajectory> data;
  data.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) data.push_back(sample_trajectory(truth, pi, rng, id));
  return data;
}

}  // namespace

RunLog run_doerl_tabular(const TabularMdp& truth, const TabularModelClass& cls, const EpochSchedule& schedule,
                         const DoerlOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  check_class(cls);
  const auto& ref = cls.models.front();
  if (ref.horizon() != truth.horizon() || ref.num_states() != truth.num_states() ||
      ref.num_actions() != truth.num_actions() || ref.start_state() != truth.start_state())
    throw DimensionError("model class does not match the environment");
  check_schedule(schedule, truth.horizon());
  validate(options.solver);
  const int H = truth.horizon();
  const int S = truth.num_states();
  const int A = truth.num_actions();

  RunLog log;
  log.agent = "doerl-tabular";
  log.horizon = H;
  log.total_rounds = schedule.total_rounds();
  log.seed = options.seed;
  log.schedule = schedule;
  log.round_regret.reserve(static_cast<std::size_t>(log.total_rounds));
  Rng rng(options.seed);
  std::uint64_t policy_id = 0;

  TabularMdp prev = initial_tabular_model(truth);
  for (int m = 1; m <= schedule.num_epochs(); ++m) {
    const long long n = schedule.epoch_length(m);
    EpochRecord er;
    er.epoch = m;
    er.tau_begin = schedule.taus[m - 1];
    er.tau_end = schedule.taus[m];
    er.hyper = hyperparams_tabular(m, schedule, options.delta, S, A, H, options.rate, cls.size(), options.knobs);
    TrustedStructure structure = TrustedStructure::empty_for(truth, er.hyper.zeta);
    std::vector<Policy> executed;
    for (int h = 0; h < H; ++h) {
      BarrierObjectiveSpec spec{prev, structure, h, er.hyper.eta, er.hyper.beta};
      SolverConfig sc = options.solver;
      sc.seed = mix_seed(options.solver.seed ^ options.seed, m, h);
      SolveResult solved = optimize_barrier(spec, sc);
      ++log.counters.planning_calls;

      SegmentRecord seg;
      seg.epoch = m;
      seg.segment = h + 1;
      seg.episodes = n;
      seg.solver = solved.diagnostics;
      const OccupancyTensor tocc = trusted_occupancy(structure, solved.policy, h);
      for (int j = 0; j <= h; ++j) seg.retained_mass.push_back(tocc.layer_mass(j));
      seg.policy_regret = clean_regret(regret_of_policy(truth, solved.policy));
      seg.pseudo_regret = pseudo_regret(prev, solved.policy);

      const auto data = collect(truth, solved.policy, n, rng, ++policy_id);
      log.counters.episodes_executed += n;
      append_rounds(log, m, h + 1, n, seg.policy_regret);

      const EstimationReport est = mle_estimate(cls, data);
      ++log.counters.estimation_calls;
      seg.chosen_model = est.chosen_index;
      extend_structure(structure, layer_of(cls.models[est.chosen_index], h), solved.policy);
      seg.trusted_size = structure.trusted_count(h);
      log.segments.push_back(std::move(seg));
      executed.push_back(std::move(solved.policy));
    }
    TabularMdp next = aggregate_model(truth.start_state(), structure.layers);
    er.epsilon = epoch_epsilon(truth, prev, next, executed);
    log.epochs.push_back(er);
    prev = std::move(next);
  }
  finish(log, start);
  return log;
}

RunLog run_doerl_linear(const LinearMdp& truth, const LinearModelClass& cls, const EpochSchedule& schedule,
                        const DoerlOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  check_class(cls);
  const auto& ref = cls.models.front();
  if (ref.horizon() != truth.horizon() || ref.num_states() != truth.num_states() ||
      ref.num_actions() != truth.num_actions() || ref.dim() != truth.dim() || ref.start_state() != truth.start_state())
    throw DimensionError("linear model class does not match the environment");
  check_schedule(schedule, truth.horizon());
  validate(options.solver);
  const int H = truth.horizon();
  const int A = truth.num_actions();
  const int d = truth.dim();

  double c_class = 0.0;
  for (const auto& model : cls.models) c_class = std::max(c_class, normalization_constant(model).c_m);

  RunLog log;
  log.agent = "doerl-linear";
  log.horizon = H;
  log.total_rounds = schedule.total_rounds();
  log.seed = options.seed;
  log.schedule = schedule;
  log.c_class = c_class;
  log.round_regret.reserve(static_cast<std::size_t>(log.total_rounds));
  Rng rng(options.seed);
  std::uint64_t policy_id = 0;
  const TabularMdp& world = truth.tabular();

  // class model 0 with zero rewards
  std::vector<Vector> zero_theta(H, Vector::Zero(d));
  std::vector<Matrix> mu0;
  for (int h = 0; h < H; ++h) mu0.push_back(ref.mu(h));
  LinearMdp prev(ref.start_state(), A, ref.all_features(), std::move(mu0), std::move(zero_theta));

  for (int m = 1; m <= schedule.num_epochs(); ++m) {
    const long long n = schedule.epoch_length(m);
    EpochRecord er;
    er.epoch = m;
    er.tau_begin = schedule.taus[m - 1];
    er.tau_end = schedule.taus[m];
    er.hyper = hyperparams_linear(m, schedule, options.delta, d, H, c_class, options.rate, cls.size(), options.knobs);
    TrustedStructureLinear structure = TrustedStructureLinear::empty_for(ref, er.hyper.zeta);
    std::vector<Policy> executed;
    for (int h = 0; h < H; ++h) {
      LogDetObjectiveSpec spec{prev, structure, h, er.hyper.eta, er.hyper.beta};
      SolverConfig sc = options.solver;
      sc.seed = mix_seed(options.solver.seed ^ options.seed, m, h);
      SolveResult solved = optimize_logdet(spec, sc);
      ++log.counters.planning_calls;

      SegmentRecord seg;
      seg.epoch = m;
      seg.segment = h + 1;
      seg.episodes = n;
      seg.solver = solved.diagnostics;
      const OccupancyTensor tocc = trusted_occupancy_linear(structure, solved.policy, h);
      for (int j = 0; j <= h; ++j) seg.retained_mass.push_back(tocc.layer_mass(j));
      seg.policy_regret = clean_regret(regret_of_policy(world, solved.policy));
      seg.pseudo_regret = pseudo_regret(prev.tabular(), solved.policy);

      const auto data = collect(world, solved.policy, n, rng, ++policy_id);
      log.counters.episodes_executed += n;
      append_rounds(log, m, h + 1, n, seg.policy_regret);

      const EstimationReport est = lse_linear(cls, solved.policy, data);
      ++log.counters.estimation_calls;
      seg.chosen_model = est.chosen_index;
      extend_structure(structure, layer_of(cls.models[est.chosen_index], h), solved.policy);
      seg.trusted_size = structure.trusted_count(h);
      log.segments.push_back(std::move(seg));
      executed.push_back(std::move(solved.policy));
    }
    LinearMdp next = aggregate_linear(ref.start_state(), A, structure.features, structure.layers);
    er.epsilon = epoch_epsilon(world, prev.tabular(), next.tabular(), executed);
    log.epochs.push_back(er);
    prev = std::move(next);
  }
  finish(log, start);
  return log;
}

RunLog run_baseline_replan(const TabularMdp& truth, const TabularModelClass& cls, long long rounds, double epsilon,
                           std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  check_class(cls);
  if (rounds < 1) throw std::domain_error("baseline: T must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::domain_error("baseline: epsilon must lie in [0,1]");
  const int H = truth.horizon();
  const int S = truth.num_states();
  const int A = truth.num_actions();

  RunLog log;
  log.agent = "baseline-replan";
  log.horizon = H;
  log.total_rounds = rounds;
  log.seed = seed;
  log.schedule.horizon = H;
  log.schedule.taus = {0};
  log.schedule.requested_rounds = rounds;
  log.round_regret.reserve(static_cast<std::size_t>(rounds));
  Rng rng(seed);

  const Policy uniform = Policy::uniform(H, S, A);
  std::vector<std::optional<std::pair<Policy, double>>> cache(cls.size());
  // running log-likelihoods; argmax over them equals MLE on all data so far
  std::vector<double> loglik(cls.size(), 0.0);
  for (long long t = 0; t < rounds; ++t) {
    const std::size_t chosen =
        static_cast<std::size_t>(std::max_element(loglik.begin(), loglik.end()) - loglik.begin());
    ++log.counters.estimation_calls;
    if (!cache[chosen]) {
      const Policy greedy = optimal_policy_plan(cls.models[chosen]).policy;
      std::vector<Matrix> layers;
      for (int h = 0; h < H; ++h) layers.push_back((1.0 - epsilon) * greedy.layer(h) + epsilon * uniform.layer(h));
      Policy explore(std::move(layers));
      const double reg = clean_regret(regret_of_policy(truth, explore));
      cache[chosen].emplace(std::move(explore), reg);
    }
    ++log.counters.planning_calls;
    const auto& [pi, reg] = *cache[chosen];
    const Trajectory traj = sample_trajectory(truth, pi, rng, static_cast<std::uint64_t>(t + 1));
    ++log.counters.episodes_executed;
    log.round_epoch.push_back(static_cast<int>(t + 1));
    log.round_segment.push_back(1);
    log.round_regret.push_back(reg);
    for (std::size_t i = 0; i < cls.size(); ++i) loglik[i] += trajectory_log_likelihood(cls.models[i], traj);
  }
  finish(log, start);
  return log;
}

}  // namespace doerl
