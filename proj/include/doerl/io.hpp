#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "doerl/driver.hpp"
#include "doerl/estimation.hpp"
#include "doerl/linear_mdp.hpp"
#include "doerl/mdp.hpp"

namespace doerl {

using Json = nlohmann::json;

inline constexpr int kSchemaMajor = 1;
inline constexpr const char* kSchemaVersion = "1.0";

/// Thrown on malformed documents: wrong version, missing keys, bad shapes.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejects documents without a "version" string or with a different major number.
void check_version(const Json& doc, const std::string& what);

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

/// {"version","type":"tabular","start_state","transitions":[H][S*A][S],"rewards":[H][S][A]}
Json to_json(const TabularMdp& mdp);
TabularMdp tabular_from_json(const Json& doc);

/// {"version","type":"linear","start_state","num_actions","features":[H][S*A][d],
///  "mu":[H][S][d],"theta":[H][d]}
Json to_json(const LinearMdp& mdp);
LinearMdp linear_from_json(const Json& doc);

Json to_json(const EstimationReport& report);

/// Sidecar: schedule, hyperparameters, per-segment diagnostics, counters.
Json to_json(const RunLog& log);

/// Fields of a sidecar needed to aggregate runs.
struct RunSummary {
  std::string agent;
  int horizon = 0;
  long long total_rounds = 0;
  std::uint64_t seed = 0;
  int num_epochs = 0;
  OracleCounters counters;
  double cumulative_regret = 0.0;
  double wall_seconds = 0.0;
};

RunSummary summary_from_json(const Json& doc);

/// "t,m,h,regret,cum_regret" rows (t, m, h 1-based) after a version comment line.
void write_runlog_csv(std::ostream& out, const RunLog& log);

struct RegretCurve {
  std::vector<double> regret;
  std::vector<double> cumulative;
};

RegretCurve read_runlog_csv(std::istream& in);

Json read_json_file(const std::string& path);

/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

std::string format_double(double x);

}  // namespace doerl
