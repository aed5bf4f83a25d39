#include "doerl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "doerl/policy_opt.hpp"
#include "doerl/trusted.hpp"

namespace fs = std::filesystem;

namespace doerl {

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::Tabular:
      return "tabular";
    case Mode::Linear:
      return "linear";
    case Mode::Baseline:
      return "baseline";
  }
  return "unknown";
}

namespace {

void only_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw SchemaError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const Json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw SchemaError(where + "." + key + " is missing or has the wrong type");
  }
}

template <class T>
void get_optional(const Json& obj, const char* key, const std::string& where, T& out) {
  if (obj.contains(key)) out = get<T>(obj, key, where);
}

double positive(double x, const std::string& what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw SchemaError(what + " must be positive");
  return x;
}

Vector dirichlet_one(int n, Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = -std::log(1.0 - uniform01(rng));
  return v / v.sum();
}

double quantile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

}  // namespace

ExperimentConfig parse_config(const Json& doc, const std::string& base_dir) {
  check_version(doc, "config");
  only_keys(doc,
            {"version", "mode", "environment", "model_class", "schedule", "delta", "knobs", "oracle_rate", "solver",
             "epsilon", "seeds", "output_dir"},
            "config");
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;

  const auto mode = get<std::string>(doc, "mode", "config");
  if (mode == "tabular")
    cfg.mode = Mode::Tabular;
  else if (mode == "linear")
    cfg.mode = Mode::Linear;
  else if (mode == "baseline")
    cfg.mode = Mode::Baseline;
  else
    throw SchemaError("config.mode must be tabular, linear or baseline");

  if (!doc.contains("environment")) throw SchemaError("config.environment is missing");
  const Json& env = doc.at("environment");
  only_keys(env, {"generate", "file"}, "environment");
  if (env.contains("generate") == env.contains("file"))
    throw SchemaError("environment needs exactly one of 'generate' or 'file'");
  if (env.contains("file")) {
    cfg.environment = get<std::string>(env, "file", "environment");
  } else {
    const Json& g = env.at("generate");
    only_keys(g, {"num_states", "num_actions", "horizon", "dim", "seed"}, "environment.generate");
    GeneratedEnvironment ge;
    get_optional(g, "num_states", "environment.generate", ge.num_states);
    get_optional(g, "num_actions", "environment.generate", ge.num_actions);
    get_optional(g, "horizon", "environment.generate", ge.horizon);
    get_optional(g, "dim", "environment.generate", ge.dim);
    get_optional(g, "seed", "environment.generate", ge.seed);
    if (ge.num_states < 1 || ge.num_actions < 1 || ge.horizon < 1 || ge.dim < 1)
      throw SchemaError("environment.generate dimensions must be positive");
    cfg.environment = ge;
  }

  if (doc.contains("model_class")) {
    const Json& mc = doc.at("model_class");
    only_keys(mc, {"size", "seed", "perturbation"}, "model_class");
    get_optional(mc, "size", "model_class", cfg.model_class.size);
    get_optional(mc, "seed", "model_class", cfg.model_class.seed);
    get_optional(mc, "perturbation", "model_class", cfg.model_class.perturbation);
    if (cfg.model_class.size < 1) throw SchemaError("model_class.size must be positive");
    if (!(cfg.model_class.perturbation > 0.0 && cfg.model_class.perturbation <= 1.0))
      throw SchemaError("model_class.perturbation must lie in (0,1]");
  }

  if (!doc.contains("schedule")) throw SchemaError("config.schedule is missing");
  const Json& sch = doc.at("schedule");
  only_keys(sch, {"known_T", "doubling"}, "schedule");
  if (sch.contains("known_T") == sch.contains("doubling"))
    throw SchemaError("schedule needs exactly one of 'known_T' or 'doubling'");
  if (sch.contains("known_T")) {
    cfg.schedule = {EpochSchedule::Kind::KnownHorizon, get<long long>(sch, "known_T", "schedule")};
  } else {
    cfg.schedule = {EpochSchedule::Kind::Doubling, get<long long>(sch, "doubling", "schedule")};
  }
  if (cfg.schedule.rounds < 1) throw SchemaError("schedule rounds must be positive");

  get_optional(doc, "delta", "config", cfg.delta);
  if (!(cfg.delta > 0.0 && cfg.delta < 0.5)) throw SchemaError("delta must lie in (0, 1/2)");

  if (doc.contains("knobs")) {
    const Json& k = doc.at("knobs");
    only_keys(k, {"c_beta", "c_eta", "c_zeta"}, "knobs");
    get_optional(k, "c_beta", "knobs", cfg.knobs.c_beta);
    get_optional(k, "c_eta", "knobs", cfg.knobs.c_eta);
    get_optional(k, "c_zeta", "knobs", cfg.knobs.c_zeta);
    positive(cfg.knobs.c_beta, "knobs.c_beta");
    positive(cfg.knobs.c_eta, "knobs.c_eta");
    positive(cfg.knobs.c_zeta, "knobs.c_zeta");
  }

  if (doc.contains("oracle_rate")) {
    const Json& r = doc.at("oracle_rate");
    only_keys(r, {"c_est"}, "oracle_rate");
    get_optional(r, "c_est", "oracle_rate", cfg.rate.c_est);
    positive(cfg.rate.c_est, "oracle_rate.c_est");
  }

  if (doc.contains("solver")) {
    const Json& s = doc.at("solver");
    only_keys(s, {"max_iters", "restarts", "stationarity_tol", "seed", "initial_step"}, "solver");
    get_optional(s, "max_iters", "solver", cfg.solver.max_iters);
    get_optional(s, "restarts", "solver", cfg.solver.restarts);
    get_optional(s, "stationarity_tol", "solver", cfg.solver.stationarity_tol);
    get_optional(s, "seed", "solver", cfg.solver.seed);
    get_optional(s, "initial_step", "solver", cfg.solver.initial_step);
    try {
      validate(cfg.solver);
    } catch (const std::invalid_argument& e) {
      throw SchemaError(e.what());
    }
  }

  get_optional(doc, "epsilon", "config", cfg.epsilon);
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw SchemaError("epsilon must lie in [0,1]");

  if (doc.contains("seeds")) {
    cfg.seeds = get<std::vector<std::uint64_t>>(doc, "seeds", "config");
    if (cfg.seeds.empty()) throw SchemaError("seeds must be nonempty");
  }
  get_optional(doc, "output_dir", "config", cfg.output_dir);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  const Json doc = read_json_file(path);
  return parse_config(doc, fs::path(path).parent_path().string());
}

TabularMdp random_tabular_mdp(int S, int A, int H, Rng& rng) {
  std::vector<Matrix> p;
  std::vector<Matrix> r;
  for (int h = 0; h < H; ++h) {
    Matrix ph(S * A, S);
    for (int i = 0; i < S * A; ++i) ph.row(i) = dirichlet_one(S, rng).transpose();
    Matrix rh(S, A);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) rh(s, a) = uniform01(rng) / H;
    p.push_back(std::move(ph));
    r.push_back(std::move(rh));
  }
  return TabularMdp(0, std::move(p), std::move(r));
}

TabularModelClass perturbed_class(const TabularMdp& truth, std::size_t size, double rate, Rng& rng) {
  if (size < 1) throw std::invalid_argument("class size must be positive");
  const int H = truth.horizon();
  const int S = truth.num_states();
  const int A = truth.num_actions();
  const auto truth_pos = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(size));
  TabularModelClass cls;
  for (std::size_t k = 0; k < size; ++k) {
    if (k == truth_pos) {
      cls.models.push_back(truth);
      continue;
    }
    std::vector<Matrix> p;
    std::vector<Matrix> r;
    for (int h = 0; h < H; ++h) {
      Matrix ph = truth.transitions(h);
      for (int i = 0; i < S * A; ++i) ph.row(i) = (1.0 - rate) * ph.row(i) + rate * dirichlet_one(S, rng).transpose();
      Matrix rh = truth.rewards(h);
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
          rh(s, a) = std::clamp(rh(s, a) + rate * (uniform01(rng) - 0.5) / H, 0.0, 1.0 / H);
      p.push_back(make_stochastic(std::move(ph)));
      r.push_back(std::move(rh));
    }
    cls.models.emplace_back(truth.start_state(), std::move(p), std::move(r));
  }
  cls.realizable_index = truth_pos;
  return cls;
}

LinearMdp random_linear_mdp(int S, int A, int d, int H, Rng& rng) {
  const double cap = std::min(1.0, H / std::sqrt(static_cast<double>(d))) / H;
  std::vector<Matrix> features;
  std::vector<Matrix> mu;
  std::vector<Vector> theta;
  for (int h = 0; h < H; ++h) {
    Matrix phi(S * A, d);
    for (int i = 0; i < S * A; ++i) phi.row(i) = dirichlet_one(d, rng).transpose();
    Matrix m(S, d);
    for (int k = 0; k < d; ++k) m.col(k) = dirichlet_one(S, rng);
    Vector th(d);
    for (int k = 0; k < d; ++k) th[k] = uniform01(rng) * cap;
    features.push_back(std::move(phi));
    mu.push_back(std::move(m));
    theta.push_back(std::move(th));
  }
  return LinearMdp(0, A, std::move(features), std::move(mu), std::move(theta));
}

LinearModelClass perturbed_linear_class(const LinearMdp& truth, std::size_t size, double rate, Rng& rng) {
  if (size < 1) throw std::invalid_argument("class size must be positive");
  const int H = truth.horizon();
  const int S = truth.num_states();
  const int d = truth.dim();
  const double cap = std::min(1.0, H / std::sqrt(static_cast<double>(d))) / H;
  const auto truth_pos = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(size));
  LinearModelClass cls;
  for (std::size_t k = 0; k < size; ++k) {
    if (k == truth_pos) {
      cls.models.push_back(truth);
      continue;
    }
    std::vector<Matrix> mu;
    std::vector<Vector> theta;
    for (int h = 0; h < H; ++h) {
      Matrix m = truth.mu(h);
      for (int c = 0; c < d; ++c) {
        m.col(c) = (1.0 - rate) * m.col(c) + rate * dirichlet_one(S, rng);
        m.col(c) /= m.col(c).sum();
      }
      Vector th = truth.theta(h);
      for (int c = 0; c < d; ++c) th[c] = std::clamp(th[c] + rate * (uniform01(rng) - 0.5) * cap, 0.0, cap);
      mu.push_back(std::move(m));
      theta.push_back(std::move(th));
    }
    cls.models.emplace_back(truth.start_state(), truth.num_actions(), truth.all_features(), std::move(mu),
                            std::move(theta));
  }
  cls.realizable_index = truth_pos;
  return cls;
}

Instance build_instance(const ExperimentConfig& config) {
  Instance inst;
  const bool linear = config.mode == Mode::Linear;
  if (const auto* path = std::get_if<std::string>(&config.environment)) {
    fs::path p(*path);
    if (p.is_relative() && !config.base_dir.empty()) p = fs::path(config.base_dir) / p;
    const Json doc = read_json_file(p.string());
    if (linear)
      inst.linear = linear_from_json(doc);
    else
      inst.tabular = tabular_from_json(doc);
  } else {
    const auto& g = std::get<GeneratedEnvironment>(config.environment);
    Rng rng(g.seed);
    if (linear)
      inst.linear = random_linear_mdp(g.num_states, g.num_actions, g.dim, g.horizon, rng);
    else
      inst.tabular = random_tabular_mdp(g.num_states, g.num_actions, g.horizon, rng);
  }
  Rng crng(config.model_class.seed);
  if (linear)
    inst.linear_class = perturbed_linear_class(*inst.linear, config.model_class.size, config.model_class.perturbation,
                                               crng);
  else
    inst.tabular_class = perturbed_class(*inst.tabular, config.model_class.size, config.model_class.perturbation, crng);
  return inst;
}

EpochSchedule make_schedule(const ScheduleSpec& spec, int horizon) {
  return spec.kind == EpochSchedule::Kind::Doubling ? schedule_doubling(spec.rounds, horizon)
                                                    : schedule_known_T(spec.rounds, horizon);
}

RunLog run_experiment(const ExperimentConfig& config, const Instance& instance, std::uint64_t seed) {
  DoerlOptions opt;
  opt.delta = config.delta;
  opt.solver = config.solver;
  opt.knobs = config.knobs;
  opt.rate = config.rate;
  opt.seed = seed;
  switch (config.mode) {
    case Mode::Tabular:
      return run_doerl_tabular(*instance.tabular, instance.tabular_class,
                               make_schedule(config.schedule, instance.tabular->horizon()), opt);
    case Mode::Linear:
      return run_doerl_linear(*instance.linear, instance.linear_class,
                              make_schedule(config.schedule, instance.linear->horizon()), opt);
    case Mode::Baseline: {
      const auto sched = make_schedule(config.schedule, instance.tabular->horizon());
      return run_baseline_replan(*instance.tabular, instance.tabular_class, sched.total_rounds(), config.epsilon, seed);
    }
  }
  throw std::logic_error("unknown mode");
}

int cmd_run(const std::string& config_path, const RunOverrides& overrides, std::ostream& err) {
  ExperimentConfig config;
  Instance instance;
  try {
    config = load_config(config_path);
    if (overrides.seeds) config.seeds = *overrides.seeds;
    if (overrides.output_dir) config.output_dir = *overrides.output_dir;
    if (config.seeds.empty()) throw SchemaError("no seeds to run");
    instance = build_instance(config);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }
  const int workers = std::max(1, overrides.workers.value_or(1));
  try {
    fs::create_directories(config.output_dir);
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return 3;
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::vector<std::string> failures;
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      const std::uint64_t seed = config.seeds[i];
      try {
        const RunLog log = run_experiment(config, instance, seed);
        const std::string stem = (fs::path(config.output_dir) / (mode_name(config.mode) + "_seed" + std::to_string(seed))).string();
        std::ostringstream csv;
        write_runlog_csv(csv, log);
        write_file_atomic(stem + ".csv", csv.str());
        write_file_atomic(stem + ".json", to_json(log).dump(2) + "\n");
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mutex);
        failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < std::min<int>(workers, static_cast<int>(config.seeds.size())); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end());
    for (const auto& f : failures) err << "runtime error: " << f << '\n';
    return 3;
  }
  return 0;
}

std::vector<ComparisonRow> build_comparison(const std::vector<std::string>& dirs) {
  struct Group {
    std::vector<RunSummary> runs;
    std::vector<std::vector<double>> curves;
  };
  std::map<std::pair<std::string, long long>, Group> groups;
  std::optional<int> horizon;
  for (const auto& dir : dirs) {
    if (!fs::is_directory(dir)) throw SchemaError("not a directory: " + dir);
    std::vector<fs::path> sidecars;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (entry.path().extension() == ".json" && name.find("_seed") != std::string::npos)
        sidecars.push_back(entry.path());
    }
    std::sort(sidecars.begin(), sidecars.end());
    if (sidecars.empty()) throw SchemaError("no run logs in " + dir);
    for (const auto& path : sidecars) {
      const RunSummary s = summary_from_json(read_json_file(path.string()));
      if (horizon && *horizon != s.horizon) throw SchemaError("run logs mix horizons; refusing to aggregate");
      horizon = s.horizon;
      fs::path csv_path = path;
      csv_path.replace_extension(".csv");
      std::ifstream in(csv_path);
      if (!in) throw SchemaError("missing CSV for " + path.string());
      RegretCurve curve = read_runlog_csv(in);
      if (static_cast<long long>(curve.cumulative.size()) != s.total_rounds)
        throw SchemaError("round count mismatch in " + csv_path.string());
      auto& g = groups[{s.agent, s.total_rounds}];
      g.runs.push_back(s);
      g.curves.push_back(std::move(curve.cumulative));
    }
  }
  std::vector<ComparisonRow> rows;
  for (const auto& [key, g] : groups) {
    ComparisonRow row;
    row.agent = key.first;
    row.rounds = key.second;
    row.horizon = *horizon;
    row.seeds = g.runs.size();
    std::vector<double> finals;
    for (const auto& r : g.runs) {
      finals.push_back(r.cumulative_regret);
      row.wall_time_mean += r.wall_seconds / static_cast<double>(g.runs.size());
      if (r.counters.estimation_calls != g.runs.front().counters.estimation_calls ||
          r.counters.planning_calls != g.runs.front().counters.planning_calls)
        throw SchemaError("seeds of " + row.agent + " disagree on oracle-call counts");
    }
    row.estimation_calls = g.runs.front().counters.estimation_calls;
    row.planning_calls = g.runs.front().counters.planning_calls;
    for (double f : finals) row.regret_mean += f / static_cast<double>(finals.size());
    row.regret_median = quantile(finals, 0.5);
    row.regret_q25 = quantile(finals, 0.25);
    row.regret_q75 = quantile(finals, 0.75);
    row.mean_curve.assign(static_cast<std::size_t>(row.rounds), 0.0);
    for (const auto& c : g.curves)
      for (std::size_t t = 0; t < c.size(); ++t) row.mean_curve[t] += c[t] / static_cast<double>(g.curves.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "# doerl comparison version " << kSchemaVersion << '\n';
  out << "agent,T,H,seeds,cum_regret_mean,cum_regret_median,cum_regret_q25,cum_regret_q75,estimation_calls,"
         "planning_calls,wall_time_mean\n";
  for (const auto& r : rows)
    out << r.agent << ',' << r.rounds << ',' << r.horizon << ',' << r.seeds << ',' << format_double(r.regret_mean)
        << ',' << format_double(r.regret_median) << ',' << format_double(r.regret_q25) << ','
        << format_double(r.regret_q75) << ',' << r.estimation_calls << ',' << r.planning_calls << ','
        << format_double(r.wall_time_mean) << '\n';
  return out.str();
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_dir, std::ostream& err) {
  std::vector<ComparisonRow> rows;
  try {
    if (dirs.empty()) throw SchemaError("no run directories given");
    rows = build_comparison(dirs);
  } catch (const std::exception& e) {
    err << "compare error: " << e.what() << '\n';
    return 2;
  }
  try {
    fs::create_directories(out_dir);
    write_file_atomic((fs::path(out_dir) / "comparison.csv").string(), comparison_csv(rows));
    write_file_atomic((fs::path(out_dir) / "comparison.svg").string(), comparison_svg(rows));
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

namespace {

void record(std::vector<InvariantCheck>& out, std::string name, bool ok, std::string detail = "") {
  out.push_back({std::move(name), ok, std::move(detail)});
}

Policy random_policy(int H, int S, int A, Rng& rng) {
  std::vector<Matrix> layers;
  for (int h = 0; h < H; ++h) {
    Matrix m(S, A);
    for (int s = 0; s < S; ++s) m.row(s) = dirichlet_one(A, rng).transpose();
    layers.push_back(std::move(m));
  }
  return Policy(std::move(layers));
}

// Central differences along pi(a|s) += e, pi(b|s) -= e; returns the worst relative error.
template <class F>
double fd_gradient_error(const F& objective, const Policy& pi, Rng& rng, int probes) {
  const ObjectiveValue base = objective(pi);
  double worst = 0.0;
  const int H = pi.horizon();
  const int S = pi.num_states();
  const int A = pi.num_actions();
  if (A < 2) return 0.0;
  for (int k = 0; k < probes; ++k) {
    const int j = static_cast<int>(uniform01(rng) * H);
    const int s = static_cast<int>(uniform01(rng) * S);
    const int a = static_cast<int>(uniform01(rng) * A);
    const int b = (a + 1 + static_cast<int>(uniform01(rng) * (A - 1))) % A;
    const double eps = 1e-6 * std::min(pi(j, s, b), 1.0);
    auto shifted = [&](double e) {
      std::vector<Matrix> layers = pi.layers();
      layers[j](s, a) += e;
      layers[j](s, b) -= e;
      return Policy(std::move(layers));
    };
    const double fd = (objective(shifted(eps)).value - objective(shifted(-eps)).value) / (2.0 * eps);
    const double an = base.grad[j](s, a) - base.grad[j](s, b);
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-3));
  }
  return worst;
}

void tabular_checks(const TabularMdp& truth, const TabularModelClass& cls, std::vector<InvariantCheck>& out) {
  const int H = truth.horizon();
  const int S = truth.num_states();
  const int A = truth.num_actions();
  Rng rng(12345);

  bool simplex = true;
  bool rewards = true;
  for (const auto& m : cls.models)
    for (int h = 0; h < H; ++h) {
      const Matrix& p = m.transitions(h);
      simplex = simplex && (p.array() >= 0.0).all() &&
                ((p.rowwise().sum().array() - 1.0).abs() <= kSimplexTol).all();
      rewards = rewards && (m.rewards(h).array() >= 0.0).all() && (m.rewards(h).array() <= 1.0 / H).all();
    }
  record(out, "transition-simplex", simplex);
  record(out, "reward-range", rewards);

  double mass_err = 0.0;
  double duality_err = 0.0;
  for (int k = 0; k < 5; ++k) {
    const Policy pi = k == 0 ? Policy::uniform(H, S, A) : random_policy(H, S, A, rng);
    const OccupancyTensor occ = occupancy_forward(truth, pi);
    double via_occ = 0.0;
    for (int h = 0; h < H; ++h) {
      mass_err = std::max(mass_err, std::abs(occ.layer_mass(h) - 1.0));
      via_occ += occ.mass[h].cwiseProduct(truth.rewards(h)).sum();
    }
    duality_err = std::max(duality_err, std::abs(via_occ - value_backward(truth, pi).value));
  }
  record(out, "occupancy-mass", mass_err <= 1e-12, "max error " + format_double(mass_err));
  record(out, "value-duality", duality_err <= 1e-12, "max error " + format_double(duality_err));

  TrustedStructure st = TrustedStructure::empty_for(truth, 20.0);
  const Policy uniform = Policy::uniform(H, S, A);
  extend_structure(st, layer_of(truth, 0), uniform);
  const int segment = std::min(1, H - 1);
  const BarrierObjectiveSpec spec{truth, st, segment, 1.0, 0.05};
  double grad_err = 0.0;
  for (int k = 0; k < 3; ++k)
    grad_err = std::max(grad_err, fd_gradient_error([&](const Policy& p) { return barrier_value_grad(spec, p); },
                                                     random_policy(H, S, A, rng), rng, 6));
  record(out, "gradient-barrier", grad_err < 1e-5, "max relative error " + format_double(grad_err));

  const LinearMdp embedded = tabular_to_linear(truth);
  double embed_err = 0.0;
  for (int h = 0; h < H; ++h)
    embed_err = std::max(embed_err, (embedded.transition_matrix(h) - truth.transitions(h)).cwiseAbs().maxCoeff());
  const Policy probe = random_policy(H, S, A, rng);
  embed_err = std::max(embed_err,
                       std::abs(value_backward(embedded.tabular(), probe).value - value_backward(truth, probe).value));
  record(out, "embedding-faithfulness", embed_err <= 1e-12, "max error " + format_double(embed_err));
}

void linear_checks(const LinearMdp& truth, const LinearModelClass& cls, std::vector<InvariantCheck>& out) {
  const int H = truth.horizon();
  const int S = truth.num_states();
  const int A = truth.num_actions();
  Rng rng(54321);
  double kernel_err = 0.0;
  for (const auto& m : cls.models)
    for (int h = 0; h < H; ++h)
      kernel_err = std::max(kernel_err, (m.transition_matrix(h) - m.tabular().transitions(h)).cwiseAbs().maxCoeff());
  record(out, "linear-kernel", kernel_err <= 1e-10, "max error " + format_double(kernel_err));
  try {
    double c = 0.0;
    for (const auto& m : cls.models) c = std::max(c, normalization_constant(m).c_m);
    record(out, "theta-norm", true, "c_M = " + format_double(c));
  } catch (const InvariantError& e) {
    record(out, e.invariant(), false, e.what());
  }

  TrustedStructureLinear st = TrustedStructureLinear::empty_for(truth, 20.0);
  extend_structure(st, layer_of(truth, 0), Policy::uniform(H, S, A));
  const LogDetObjectiveSpec spec{truth, st, std::min(1, H - 1), 1.0, 0.05};
  double grad_err = 0.0;
  for (int k = 0; k < 3; ++k)
    grad_err = std::max(grad_err, fd_gradient_error([&](const Policy& p) { return logdet_value_grad(spec, p); },
                                                     random_policy(H, S, A, rng), rng, 6));
  record(out, "gradient-logdet", grad_err < 1e-5, "max relative error " + format_double(grad_err));
}

}  // namespace

std::vector<InvariantCheck> validate_instance(const ExperimentConfig& config) {
  std::vector<InvariantCheck> out;
  Instance inst;
  try {
    inst = build_instance(config);
  } catch (const InvariantError& e) {
    record(out, e.invariant(), false, e.what());
    return out;
  }
  if (config.mode == Mode::Linear) {
    TabularModelClass shadow;
    for (const auto& m : inst.linear_class.models) shadow.models.push_back(m.tabular());
    tabular_checks(inst.linear->tabular(), shadow, out);
    linear_checks(*inst.linear, inst.linear_class, out);
  } else {
    tabular_checks(*inst.tabular, inst.tabular_class, out);
  }
  const auto sched = make_schedule(config.schedule, config.mode == Mode::Linear ? inst.linear->horizon()
                                                                                 : inst.tabular->horizon());
  bool sched_ok = sched.taus.front() == 0 && sched.total_rounds() <= config.schedule.rounds;
  for (std::size_t i = 1; i < sched.taus.size(); ++i) sched_ok = sched_ok && sched.taus[i] > sched.taus[i - 1];
  record(out, "schedule-monotone", sched_ok);
  return out;
}

int cmd_validate(const std::string& config_path, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_config(config_path);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }
  std::vector<InvariantCheck> checks;
  try {
    checks = validate_instance(config);
  } catch (const SchemaError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "invariant suite aborted: " << e.what() << '\n';
    return 1;
  }
  bool all = true;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << "  (" << c.detail << ')';
    out << '\n';
    all = all && c.passed;
  }
  return all ? 0 : 1;
}

}  // namespace doerl
