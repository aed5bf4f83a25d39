#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doerl/experiment.hpp"
#include "support.hpp"

using namespace doerl;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("doerl_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Json tiny_config(const std::string& mode = "tabular", int horizon = 2) {
  Json c = {
      {"version", "1.0"},
      {"mode", mode},
      {"environment", {{"generate", {{"num_states", 2}, {"num_actions", 2}, {"horizon", horizon}, {"dim", 2},
                                     {"seed", 3}}}}},
      {"model_class", {{"size", 3}, {"seed", 4}, {"perturbation", 0.4}}},
      {"schedule", {{"known_T", horizon * 16}}},
      {"knobs", {{"c_eta", 1e8}}},
      {"solver", {{"max_iters", 30}, {"restarts", 1}, {"stationarity_tol", 1e-6}}},
      {"seeds", {0}},
  };
  return c;
}

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_files(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator()));
}

int run_into(const TempDir& tmp, const Json& config, const std::string& out, std::optional<std::vector<std::uint64_t>> seeds = {},
             int workers = 1) {
  const std::string cfg = tmp.file("config_" + out + ".json");
  write(cfg, config.dump(2));
  RunOverrides ov;
  ov.output_dir = tmp.file(out);
  ov.seeds = seeds;
  ov.workers = workers;
  std::ostringstream err;
  return cmd_run(cfg, ov, err);
}

}  // namespace

TEST_CASE("config parsing is strict") {
  CHECK_NOTHROW(parse_config(tiny_config()));
  const ExperimentConfig cfg = parse_config(tiny_config());
  CHECK(cfg.mode == Mode::Tabular);
  CHECK(cfg.knobs.c_eta == 1e8);
  CHECK(cfg.schedule.rounds == 32);

  Json unknown = tiny_config();
  unknown["colour"] = "blue";
  CHECK_THROWS_AS(parse_config(unknown), SchemaError);

  Json nested = tiny_config();
  nested["solver"]["momentum"] = 0.9;
  CHECK_THROWS_AS(parse_config(nested), SchemaError);

  Json eta = tiny_config();
  eta["knobs"]["c_eta"] = 0.0;
  CHECK_THROWS_AS(parse_config(eta), SchemaError);

  Json delta = tiny_config();
  delta["delta"] = -0.1;
  CHECK_THROWS_AS(parse_config(delta), SchemaError);

  Json major = tiny_config();
  major["version"] = "2.0";
  CHECK_THROWS_AS(parse_config(major), SchemaError);

  Json both = tiny_config();
  both["schedule"]["doubling"] = 64;
  CHECK_THROWS_AS(parse_config(both), SchemaError);

  Json typed = tiny_config();
  typed["seeds"] = "zero";
  CHECK_THROWS_AS(parse_config(typed), SchemaError);
}

TEST_CASE("run writes one CSV and one sidecar per seed, deterministically") {
  TempDir tmp;
  REQUIRE(run_into(tmp, tiny_config(), "a") == 0);
  CHECK(count_files(tmp.path / "a") == 2);
  REQUIRE(fs::exists(tmp.path / "a" / "tabular_seed0.csv"));
  REQUIRE(fs::exists(tmp.path / "a" / "tabular_seed0.json"));

  REQUIRE(run_into(tmp, tiny_config(), "b") == 0);
  CHECK(slurp(tmp.file("a/tabular_seed0.csv")) == slurp(tmp.file("b/tabular_seed0.csv")));
  Json ja = read_json_file(tmp.file("a/tabular_seed0.json"));
  Json jb = read_json_file(tmp.file("b/tabular_seed0.json"));
  ja.erase("wall_time");
  jb.erase("wall_time");
  CHECK(ja == jb);

  const std::string csv = slurp(tmp.file("a/tabular_seed0.csv"));
  CHECK(csv.rfind("# doerl runlog version 1.0\nt,m,h,regret,cum_regret\n", 0) == 0);
  CHECK(csv.find('\r') == std::string::npos);

  // parallel seeds give the same bytes as serial ones
  REQUIRE(run_into(tmp, tiny_config(), "c", std::vector<std::uint64_t>{0, 1, 2}, 3) == 0);
  CHECK(count_files(tmp.path / "c") == 6);
  CHECK(slurp(tmp.file("c/tabular_seed0.csv")) == slurp(tmp.file("a/tabular_seed0.csv")));
}

TEST_CASE("run rejects bad configs with exit 2 and writes nothing") {
  TempDir tmp;
  Json bad = tiny_config();
  bad["delta"] = -0.5;
  CHECK(run_into(tmp, bad, "bad") == 2);
  CHECK(count_files(tmp.path / "bad") == 0);
  RunOverrides ov;
  std::ostringstream err;
  CHECK(cmd_run(tmp.file("missing.json"), ov, err) == 2);
  CHECK_FALSE(err.str().empty());
}

TEST_CASE("linear and baseline modes run") {
  TempDir tmp;
  CHECK(run_into(tmp, tiny_config("linear"), "lin") == 0);
  CHECK(fs::exists(tmp.path / "lin" / "linear_seed0.csv"));
  Json base = tiny_config("baseline");
  base["epsilon"] = 0.2;
  CHECK(run_into(tmp, base, "base") == 0);
  const Json side = read_json_file(tmp.file("base/baseline_seed0.json"));
  const RunSummary s = summary_from_json(side);
  CHECK(s.agent == "baseline-replan");
  CHECK(s.counters.estimation_calls == 32);
  CHECK(s.counters.planning_calls == 32);
}

TEST_CASE("validate") {
  std::ostringstream out, err;
  CHECK(cmd_validate(std::string(DOERL_SOURCE_DIR) + "/configs/validate_default.json", out, err) == 0);
  CHECK(out.str().find("FAIL") == std::string::npos);
  CHECK(out.str().find("PASS transition-simplex") != std::string::npos);
  CHECK(out.str().find("PASS gradient-barrier") != std::string::npos);

  TempDir tmp;
  Rng rng(1);
  Json env = to_json(random_mdp(2, 2, 2, rng));
  env["transitions"][1][0][0] = 0.9;  // row no longer sums to one
  write(tmp.file("env.json"), env.dump());
  Json cfg = tiny_config();
  cfg["environment"] = {{"file", "env.json"}};
  write(tmp.file("cfg.json"), cfg.dump());
  std::ostringstream out2, err2;
  CHECK(cmd_validate(tmp.file("cfg.json"), out2, err2) == 1);
  CHECK(out2.str().find("FAIL transition-simplex") != std::string::npos);

  Json zero = tiny_config();
  zero["knobs"]["c_eta"] = 0;
  write(tmp.file("zero.json"), zero.dump());
  std::ostringstream out3, err3;
  CHECK(cmd_validate(tmp.file("zero.json"), out3, err3) == 2);

  Json lin = tiny_config("linear", 3);
  write(tmp.file("lin.json"), lin.dump());
  std::ostringstream out4, err4;
  CHECK(cmd_validate(tmp.file("lin.json"), out4, err4) == 0);
  CHECK(out4.str().find("PASS gradient-logdet") != std::string::npos);
}

TEST_CASE("compare aggregates seeds and refuses mixed horizons") {
  TempDir tmp;
  REQUIRE(run_into(tmp, tiny_config(), "two", std::vector<std::uint64_t>{0, 1}) == 0);
  const auto rows = build_comparison({tmp.file("two")});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].agent == "doerl-tabular");
  CHECK(rows[0].seeds == 2);
  CHECK(rows[0].rounds == 32);
  const auto sched = schedule_known_T(32, 2);
  CHECK(rows[0].estimation_calls == sched.num_epochs() * 2);
  CHECK(rows[0].planning_calls == sched.num_epochs() * 2);
  CHECK(rows[0].mean_curve.size() == 32);

  const RunSummary s0 = summary_from_json(read_json_file(tmp.file("two/tabular_seed0.json")));
  const RunSummary s1 = summary_from_json(read_json_file(tmp.file("two/tabular_seed1.json")));
  CHECK(rows[0].regret_mean == doctest::Approx(0.5 * (s0.cumulative_regret + s1.cumulative_regret)).epsilon(1e-15));
  CHECK(rows[0].regret_median == doctest::Approx(rows[0].regret_mean).epsilon(1e-15));
  CHECK(rows[0].regret_q25 <= rows[0].regret_median);
  CHECK(rows[0].regret_q75 >= rows[0].regret_median);

  std::ostringstream err;
  REQUIRE(cmd_compare({tmp.file("two")}, tmp.file("cmp"), err) == 0);
  const std::string csv = slurp(tmp.file("cmp/comparison.csv"));
  CHECK(csv == comparison_csv(rows));
  CHECK(csv.find("agent,T,H,seeds,cum_regret_mean") != std::string::npos);
  const std::string svg = slurp(tmp.file("cmp/comparison.svg"));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("doerl-tabular") != std::string::npos);

  REQUIRE(run_into(tmp, tiny_config("tabular", 3), "h3") == 0);
  std::ostringstream err2;
  CHECK(cmd_compare({tmp.file("two"), tmp.file("h3")}, tmp.file("cmp2"), err2) == 2);
  CHECK_FALSE(fs::exists(tmp.path / "cmp2" / "comparison.csv"));
  std::ostringstream err3;
  CHECK(cmd_compare({tmp.file("nowhere")}, tmp.file("cmp3"), err3) == 2);

  fs::remove(tmp.path / "two" / "tabular_seed1.csv");
  CHECK_THROWS_AS(build_comparison({tmp.file("two")}), SchemaError);
}

TEST_CASE("JSON and CSV round-trips") {
  Rng rng(2);
  const TabularMdp m = random_mdp(3, 2, 2, rng, 1);
  const TabularMdp back = tabular_from_json(to_json(m));
  CHECK(back.start_state() == 1);
  for (int h = 0; h < 2; ++h) {
    CHECK(max_abs(back.transitions(h) - m.transitions(h)) <= 1e-15);  // rows are renormalized on load
    CHECK(max_abs(back.rewards(h) - m.rewards(h)) == 0.0);
  }

  const LinearMdp lin = random_linear_mdp(3, 2, 2, 2, rng);
  const LinearMdp lback = linear_from_json(to_json(lin));
  for (int h = 0; h < 2; ++h) {
    CHECK(max_abs(lback.features(h) - lin.features(h)) == 0.0);
    CHECK(max_abs(lback.mu(h) - lin.mu(h)) == 0.0);
    CHECK((lback.theta(h) - lin.theta(h)).cwiseAbs().maxCoeff() == 0.0);
  }

  Json wrong = to_json(m);
  wrong["version"] = "3.1";
  CHECK_THROWS_AS(tabular_from_json(wrong), SchemaError);
  Json extra = to_json(m);
  extra["notes"] = "x";
  CHECK_THROWS_AS(tabular_from_json(extra), SchemaError);

  const TabularModelClass cls = perturbed_class(m, 3, 0.3, rng);
  const RunLog log = run_baseline_replan(m, cls, 12, 0.3, 9);
  std::ostringstream csv;
  write_runlog_csv(csv, log);
  std::istringstream in(csv.str());
  const RegretCurve curve = read_runlog_csv(in);
  CHECK(curve.regret == log.round_regret);
  CHECK(curve.cumulative == log.cumulative());
  const RunSummary s = summary_from_json(to_json(log));
  CHECK(s.total_rounds == 12);
  CHECK(s.cumulative_regret == log.cumulative_regret);
  CHECK(s.counters.estimation_calls == 12);
}

TEST_CASE("generators") {
  Rng rng(3);
  const TabularMdp m = random_tabular_mdp(4, 2, 3, rng);
  CHECK(m.start_state() == 0);
  const TabularModelClass cls = perturbed_class(m, 8, 0.3, rng);
  CHECK(cls.size() == 8);
  REQUIRE(cls.realizable_index.has_value());
  const TabularMdp& t = cls.models[*cls.realizable_index];
  for (int h = 0; h < 3; ++h) CHECK(max_abs(t.transitions(h) - m.transitions(h)) == 0.0);

  const LinearMdp lin = random_linear_mdp(6, 2, 4, 3, rng);
  CHECK(normalization_constant(lin).passes);
  const LinearModelClass lcls = perturbed_linear_class(lin, 8, 0.3, rng);
  CHECK(lcls.size() == 8);
  for (const auto& member : lcls.models) CHECK(max_abs(member.features(1) - lin.features(1)) == 0.0);
}
