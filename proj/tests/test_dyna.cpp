#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dynalab/dyna.hpp"
#include "dynalab/params.hpp"

using namespace dynalab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "dynalab_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    // A trailing empty cell is dropped by getline; restore it.
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::map<std::string, std::string> read_kv(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find(" = ");
    REQUIRE(eq != std::string::npos);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

// A tiny but structurally complete configuration; fast enough for unit tests.
RunConfig tiny_sac(const fs::path& dir) {
  RunConfig c;
  c.env = "pendulum/dmc";
  c.algorithm = Algorithm::sac;
  c.seed = 7;
  c.total_steps = 400;
  c.warmup = 100;
  c.updates_per_step = 1;
  c.batch = 16;
  c.sac_hidden = {16};
  c.eval_interval = 100;
  c.eval_episodes = 2;
  c.record_timing = false;
  c.out_dir = dir.string();
  return c;
}

RunConfig tiny_mbpo(const fs::path& dir) {
  RunConfig c = tiny_sac(dir);
  c.algorithm = Algorithm::mbpo;
  c.updates_per_step = 3;
  c.synthetic_ratio = 0.5;
  c.rollouts_per_step = 20;
  c.model_retrain_interval = 50;
  c.model_train_steps = 5;
  c.model_batch = 16;
  c.model_hidden = {8};
  c.ensemble_members = 2;
  c.ensemble_elites = 1;
  c.total_steps = 300;
  return c;
}

}  // namespace

TEST_CASE("a sac run emits the fixed metrics schema and a consistent ledger") {
  fs::path dir = scratch_dir("sac_schema");
  RunConfig cfg = tiny_sac(dir);
  RunResult res = train(cfg);

  auto rows = read_csv(res.metrics_path);
  REQUIRE(rows.size() == 5);  // header + evals at 100, 200, 300, 400
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i)
    header += (i ? "," : "") + rows[0][i];
  CHECK(header == kMetricsHeader);
  CHECK(rows[1][0] == "100");
  CHECK(rows[4][0] == "400");
  // Warmup-only interval: no update statistics yet.
  CHECK(rows[1][3].empty());
  CHECK(rows[1][4].empty());
  // Later rows carry averaged update statistics.
  CHECK(!rows[2][3].empty());
  CHECK(!rows[2][4].empty());
  CHECK(!rows[2][5].empty());
  // sac never reports model error; timing was disabled.
  for (int r = 1; r <= 4; ++r) {
    CHECK(rows[static_cast<std::size_t>(r)][7].empty());
    CHECK(rows[static_cast<std::size_t>(r)][8].empty());
  }

  CHECK(res.ledger.env_steps == 400);
  CHECK(res.ledger.updates == 300);
  CHECK(res.ledger.retrains == 0);
  CHECK(res.ledger.rollout_transitions == 0);
  CHECK(res.ledger.agent_resets == 0);
  CHECK(fs::exists(dir / "config.txt"));
  CHECK(fs::exists(dir / "ledger.txt"));
  CHECK(fs::exists(dir / "final_params.bin"));
  auto kv = read_kv(dir / "ledger.txt");
  CHECK(kv.at("env_steps") == "400");
  CHECK(kv.at("updates") == "300");
}

TEST_CASE("mbpo with ratio zero and rollouts disabled matches sac byte for byte") {
  fs::path da = scratch_dir("equiv_sac");
  fs::path db = scratch_dir("equiv_mbpo");
  RunConfig a = tiny_sac(da);
  RunConfig b = tiny_sac(db);
  b.algorithm = Algorithm::mbpo;  // S = 0, rollouts = 0: semantically sac
  train(a);
  train(b);
  CHECK(slurp(da / "metrics.csv") == slurp(db / "metrics.csv"));
  CHECK(slurp(da / "final_params.bin") == slurp(db / "final_params.bin"));
  CHECK(slurp(da / "ledger.txt") == slurp(db / "ledger.txt"));
}

TEST_CASE("ledger counters match their closed forms for an active mbpo run") {
  fs::path dir = scratch_dir("mbpo_ledger");
  RunConfig cfg = tiny_mbpo(dir);
  RunResult res = train(cfg);
  const RunLedger& l = res.ledger;

  // 200 post-warmup steps, retrain every 50: floor(200 / 50) = 4.
  CHECK(l.retrains == 4);
  CHECK(l.updates == 200 * 3);
  CHECK(l.mixed_batches == 200 * 3);
  // Horizon-1 rollouts: every chain yields one transition unless dropped.
  CHECK(l.rollout_transitions + l.rollout_blowups == 200 * 20);
  CHECK(l.composition_violations == 0);
  CHECK(l.env_steps == 300);
  CHECK(fs::exists(dir / "model_report.csv"));
  auto report = read_csv(dir / "model_report.csv");
  CHECK(report.size() == 5);  // header + one row per retrain
  CHECK(report[1][0] == "150");
  CHECK(report[4][0] == "300");
}

TEST_CASE("retrain events land in the metrics file at the scheduled steps") {
  fs::path dir = scratch_dir("mbpo_events");
  RunConfig cfg = tiny_mbpo(dir);
  RunResult res = train(cfg);
  auto rows = read_csv(res.metrics_path);
  // Retrains at 150, 200, 250, 300; evals at 100, 200, 300. Steps 150 and
  // 250 get sparse event rows; 200 and 300 merge into the eval row.
  std::map<std::string, std::string> event_by_step;
  for (std::size_t r = 1; r < rows.size(); ++r)
    event_by_step[rows[r][0]] = rows[r][9];
  CHECK(event_by_step.at("150") == "retrain");
  CHECK(event_by_step.at("250") == "retrain");
  CHECK(event_by_step.at("200") == "retrain");
  CHECK(event_by_step.at("300") == "retrain");
  CHECK(event_by_step.at("100") == "");
  // Sparse event rows keep the metric cells empty.
  for (std::size_t r = 1; r < rows.size(); ++r)
    if (rows[r][0] == "150")
      for (int c = 1; c <= 8; ++c)
        CHECK(rows[r][static_cast<std::size_t>(c)].empty());
  // The post-retrain eval rows report a model error figure.
  for (std::size_t r = 1; r < rows.size(); ++r)
    if (rows[r][0] == "200" || rows[r][0] == "300")
      CHECK(!rows[r][7].empty());
}

TEST_CASE("every mixed batch honours the 243/13 split at B=256, S=0.95") {
  fs::path dir = scratch_dir("mbpo_composition");
  RunConfig cfg = tiny_mbpo(dir);
  cfg.total_steps = 150;
  cfg.batch = 256;
  cfg.synthetic_ratio = 0.95;
  cfg.updates_per_step = 2;
  RunResult res = train(cfg);
  CHECK(res.ledger.composition_expected_synthetic == 243);
  CHECK(res.ledger.mixed_batches == 50 * 2);
  CHECK(res.ledger.composition_violations == 0);
}

TEST_CASE("agent resets fire on schedule, reseed exactly, and spare the data") {
  fs::path da = scratch_dir("reset_on");
  fs::path db = scratch_dir("reset_off");
  RunConfig a = tiny_mbpo(da);
  a.total_steps = 200;
  a.agent_reset_period = 200;
  a.dump_state = true;
  RunConfig b = tiny_mbpo(db);
  b.total_steps = 200;
  b.dump_state = true;
  RunResult ra = train(a);
  train(b);

  CHECK(ra.ledger.agent_resets == 1);
  // The reset rebuilds the agent but must not touch replay data or model.
  CHECK(slurp(da / "real_buffer.bin") == slurp(db / "real_buffer.bin"));
  CHECK(slurp(da / "synthetic_buffer.bin") ==
        slurp(db / "synthetic_buffer.bin"));
  CHECK(slurp(da / "model_params.bin") == slurp(db / "model_params.bin"));

  // Post-reset parameters equal a fresh init from the reset's own seed.
  SacConfig scfg;
  scfg.obs_dim = 3;
  scfg.act_dim = 1;
  scfg.hidden = a.sac_hidden;
  scfg.lr = a.lr;
  Rng fresh_rng(derive_seed(a.seed, "agent", 1));
  SacAgent fresh(scfg, fresh_rng);
  ParamSet got = load_params(da / "final_params.bin");
  for (const auto& [k, v] : fresh.snapshot().entries)
    CHECK(got.at(k).data == v.data);

  // The eval row at the reset step carries both tags.
  auto rows = read_csv(ra.metrics_path);
  bool tagged = false;
  for (std::size_t r = 1; r < rows.size(); ++r)
    if (rows[r][0] == "200")
      tagged = rows[r][9].find("agent_reset") != std::string::npos &&
               rows[r][9].find("post_reset_eval") != std::string::npos;
  CHECK(tagged);
}

TEST_CASE("perfect-model rollouts survive a transition-level simulator audit") {
  fs::path dir = scratch_dir("perfect_audit");
  RunConfig cfg = tiny_mbpo(dir);
  cfg.algorithm = Algorithm::mbpo_perfect_model;
  cfg.total_steps = 150;
  cfg.rollouts_per_step = 10;
  RunResult res = train(cfg);
  CHECK(res.ledger.audits_checked == 50 * 10);
  CHECK(res.ledger.audit_failures == 0);
  CHECK(res.ledger.retrains == 0);  // the perfect model never trains
  CHECK(res.ledger.rollout_transitions == 50 * 10);
}

TEST_CASE("identical configurations replay to identical artifacts") {
  fs::path da = scratch_dir("repro_a");
  fs::path db = scratch_dir("repro_b");
  RunConfig a = tiny_mbpo(da);
  RunConfig b = tiny_mbpo(db);
  train(a);
  train(b);
  CHECK(slurp(da / "metrics.csv") == slurp(db / "metrics.csv"));
  CHECK(slurp(da / "final_params.bin") == slurp(db / "final_params.bin"));
  CHECK(slurp(da / "ledger.txt") == slurp(db / "ledger.txt"));
  CHECK(slurp(da / "model_report.csv") == slurp(db / "model_report.csv"));
}

TEST_CASE("configuration round-trips through the key-value registry") {
  RunConfig cfg = tiny_mbpo("somewhere");
  cfg.sac_hidden = {48, 32};
  cfg.lr = 1.25e-4;
  auto kv = run_config_to_kv(cfg);
  RunConfig back = run_config_from_kv(kv);
  CHECK(run_config_to_kv(back) == kv);
  CHECK(back.sac_hidden == cfg.sac_hidden);
  CHECK(back.lr == cfg.lr);
  CHECK(back.algorithm == Algorithm::mbpo);

  RunConfig probe;
  CHECK_THROWS_AS(set_run_config_field(probe, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(set_run_config_field(probe, "batch", "not_a_number"),
                  ConfigError);
  CHECK_THROWS_AS(set_run_config_field(probe, "algorithm", "ppo"), ConfigError);
  CHECK(algorithm_from_string("mbpo_perfect_model") ==
        Algorithm::mbpo_perfect_model);
}

TEST_CASE("invalid configurations are rejected before any work happens") {
  RunConfig bad = tiny_sac(scratch_dir("invalid"));
  bad.synthetic_ratio = 0.5;  // sac implies a zero ratio
  CHECK_THROWS_AS(train(bad), ConfigError);
  RunConfig bad2 = tiny_sac(scratch_dir("invalid2"));
  bad2.warmup = bad2.total_steps;
  CHECK_THROWS_AS(train(bad2), ConfigError);
}

TEST_CASE("ratio_sweep records per-cell failures and keeps going") {
  fs::path dir = scratch_dir("sweep");
  RunConfig base = tiny_sac(dir / "base");
  base.total_steps = 120;
  base.warmup = 60;
  auto cells = ratio_sweep(base, {0.0, 0.5}, {1, 2}, dir);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].ok);
  CHECK(cells[1].ok);
  CHECK(!cells[2].ok);  // S = 0.5 contradicts algorithm sac
  CHECK(!cells[3].ok);
  CHECK(cells[2].error.find("sac implies") != std::string::npos);
  auto rows = read_csv(dir / "ratio_sweep.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[1][2] == "ok");
  CHECK(rows[3][2] == "failed");
  // Successful cells carry the final evaluation return.
  CHECK(!rows[1][3].empty());
}
