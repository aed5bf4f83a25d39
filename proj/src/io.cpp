#include "doerl/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace doerl {

namespace {

const Json& require(const Json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw SchemaError(std::string("missing key '") + key + "'");
  return doc.at(key);
}

void require_keys(const Json& doc, std::initializer_list<const char*> allowed, const std::string& what) {
  for (const auto& [key, value] : doc.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError(what + ": unknown key '" + key + "'");
  }
}

std::vector<Matrix> matrices(const Json& arr, const char* what) {
  if (!arr.is_array() || arr.empty()) throw SchemaError(std::string(what) + " must be a nonempty array");
  std::vector<Matrix> out;
  for (const auto& layer : arr) out.push_back(matrix_from_json(layer));
  return out;
}

Json schedule_json(const EpochSchedule& s) {
  return {{"kind", s.kind == EpochSchedule::Kind::Doubling ? "doubling" : "known_T"},
          {"taus", s.taus},
          {"requested_rounds", s.requested_rounds},
          {"truncated", s.truncated},
          {"num_epochs", s.num_epochs()}};
}

Json hyper_json(const HyperParams& hp) {
  return {{"beta", hp.beta}, {"eta", hp.eta}, {"zeta", hp.zeta}, {"E", hp.rate}, {"confidence", hp.confidence}};
}

}  // namespace

void check_version(const Json& doc, const std::string& what) {
  if (!doc.is_object()) throw SchemaError(what + ": document must be an object");
  const Json& v = require(doc, "version");
  if (!v.is_string()) throw SchemaError(what + ": version must be a string");
  const std::string s = v.get<std::string>();
  int major = -1;
  if (std::sscanf(s.c_str(), "%d", &major) != 1 || major != kSchemaMajor)
    throw SchemaError(what + ": unsupported schema version '" + s + "'");
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array() || j.front().empty())
    throw SchemaError("matrix must be a nonempty array of nonempty rows");
  const auto rows = j.size();
  const auto cols = j.front().size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw SchemaError("matrix rows have unequal lengths");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw SchemaError("matrix entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Json to_json(const TabularMdp& mdp) {
  Json t = Json::array();
  Json r = Json::array();
  for (int h = 0; h < mdp.horizon(); ++h) {
    t.push_back(to_json(mdp.transitions(h)));
    r.push_back(to_json(mdp.rewards(h)));
  }
  return {{"version", kSchemaVersion},
          {"type", "tabular"},
          {"start_state", mdp.start_state()},
          {"transitions", t},
          {"rewards", r}};
}

TabularMdp tabular_from_json(const Json& doc) {
  check_version(doc, "tabular environment");
  require_keys(doc, {"version", "type", "start_state", "transitions", "rewards"}, "tabular environment");
  if (require(doc, "type") != "tabular") throw SchemaError("environment type is not 'tabular'");
  return TabularMdp(require(doc, "start_state").get<int>(), matrices(require(doc, "transitions"), "transitions"),
                    matrices(require(doc, "rewards"), "rewards"));
}

Json to_json(const LinearMdp& mdp) {
  Json f = Json::array();
  Json mu = Json::array();
  Json theta = Json::array();
  for (int h = 0; h < mdp.horizon(); ++h) {
    f.push_back(to_json(mdp.features(h)));
    mu.push_back(to_json(mdp.mu(h)));
    theta.push_back(std::vector<double>(mdp.theta(h).data(), mdp.theta(h).data() + mdp.theta(h).size()));
  }
  return {{"version", kSchemaVersion},  {"type", "linear"}, {"start_state", mdp.start_state()},
          {"num_actions", mdp.num_actions()}, {"features", f},   {"mu", mu},
          {"theta", theta}};
}

LinearMdp linear_from_json(const Json& doc) {
  check_version(doc, "linear environment");
  require_keys(doc, {"version", "type", "start_state", "num_actions", "features", "mu", "theta"},
               "linear environment");
  if (require(doc, "type") != "linear") throw SchemaError("environment type is not 'linear'");
  std::vector<Vector> theta;
  const Json& tj = require(doc, "theta");
  if (!tj.is_array()) throw SchemaError("theta must be an array");
  for (const auto& layer : tj) {
    const auto v = layer.get<std::vector<double>>();
    theta.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return LinearMdp(require(doc, "start_state").get<int>(), require(doc, "num_actions").get<int>(),
                   matrices(require(doc, "features"), "features"), matrices(require(doc, "mu"), "mu"),
                   std::move(theta));
}

Json to_json(const EstimationReport& report) {
  return {{"version", kSchemaVersion},
          {"kind", report.kind == EstimationReport::Kind::LogLikelihood ? "log_likelihood" : "squared_loss"},
          {"chosen_index", report.chosen_index},
          {"scores", report.scores},
          {"n_samples", report.n_samples}};
}

Json to_json(const RunLog& log) {
  Json segments = Json::array();
  for (const auto& s : log.segments)
    segments.push_back({{"m", s.epoch},
                        {"h", s.segment},
                        {"episodes", s.episodes},
                        {"chosen_model", s.chosen_model},
                        {"trusted_size", s.trusted_size},
                        {"retained_mass", s.retained_mass},
                        {"policy_regret", s.policy_regret},
                        {"pseudo_regret", s.pseudo_regret},
                        {"solver",
                         {{"iterations", s.solver.iterations},
                          {"evaluations", s.solver.evaluations},
                          {"grad_norm", s.solver.grad_norm},
                          {"converged", s.solver.converged},
                          {"winner", s.solver.winner}}}});
  Json epochs = Json::array();
  for (const auto& e : log.epochs)
    epochs.push_back({{"m", e.epoch},
                      {"tau_begin", e.tau_begin},
                      {"tau_end", e.tau_end},
                      {"hyper", hyper_json(e.hyper)},
                      {"epsilon", e.epsilon},
                      {"delta_recursion", e.recursion_delta}});
  return {{"version", kSchemaVersion},
          {"agent", log.agent},
          {"horizon", log.horizon},
          {"total_rounds", log.total_rounds},
          {"seed", log.seed},
          {"schedule", schedule_json(log.schedule)},
          {"c_class", log.c_class},
          {"counters",
           {{"estimation_calls", log.counters.estimation_calls},
            {"planning_calls", log.counters.planning_calls},
            {"episodes_executed", log.counters.episodes_executed}}},
          {"cumulative_regret", log.cumulative_regret},
          {"epochs", epochs},
          {"segments", segments},
          {"wall_time", log.wall_seconds}};
}

RunSummary summary_from_json(const Json& doc) {
  check_version(doc, "run log");
  RunSummary s;
  try {
    s.agent = require(doc, "agent").get<std::string>();
    s.horizon = require(doc, "horizon").get<int>();
    s.total_rounds = require(doc, "total_rounds").get<long long>();
    s.seed = require(doc, "seed").get<std::uint64_t>();
    s.num_epochs = require(require(doc, "schedule"), "num_epochs").get<int>();
    const Json& c = require(doc, "counters");
    s.counters.estimation_calls = require(c, "estimation_calls").get<long long>();
    s.counters.planning_calls = require(c, "planning_calls").get<long long>();
    s.counters.episodes_executed = require(c, "episodes_executed").get<long long>();
    s.cumulative_regret = require(doc, "cumulative_regret").get<double>();
    s.wall_seconds = require(doc, "wall_time").get<double>();
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("run log: ") + e.what());
  }
  return s;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_runlog_csv(std::ostream& out, const RunLog& log) {
  out << "# doerl runlog version " << kSchemaVersion << '\n';
  out << "t,m,h,regret,cum_regret\n";
  double acc = 0.0;
  for (std::size_t i = 0; i < log.round_regret.size(); ++i) {
    acc += log.round_regret[i];
    out << (i + 1) << ',' << log.round_epoch[i] << ',' << log.round_segment[i] << ','
        << format_double(log.round_regret[i]) << ',' << format_double(acc) << '\n';
  }
}

RegretCurve read_runlog_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# doerl runlog version ", 0) != 0)
    throw SchemaError("run CSV: missing version line");
  int major = -1;
  if (std::sscanf(line.c_str() + 23, "%d", &major) != 1 || major != kSchemaMajor)
    throw SchemaError("run CSV: unsupported schema version");
  if (!std::getline(in, line) || line != "t,m,h,regret,cum_regret") throw SchemaError("run CSV: bad header");
  RegretCurve curve;
  long long expected = 1;
  while (std::getline(in, line)) {
    long long t = 0;
    int m = 0;
    int h = 0;
    double r = 0.0;
    double c = 0.0;
    if (std::sscanf(line.c_str(), "%lld,%d,%d,%lf,%lf", &t, &m, &h, &r, &c) != 5 || t != expected)
      throw SchemaError("run CSV: malformed row " + std::to_string(expected));
    curve.regret.push_back(r);
    curve.cumulative.push_back(c);
    ++expected;
  }
  return curve;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace doerl
