#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dynalab/envsuite.hpp"
#include "dynalab/sac.hpp"
#include "dynalab/worldmodel.hpp"

namespace dynalab {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Algorithm { sac, mbpo, mbpo_perfect_model };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

// One training run, fully determined by this struct plus the code. Defaults
// follow the reference MBPO/SAC hyperparameter tables; desk_profile() scales
// the compute-bound knobs down for single-core experimentation while
// preserving the Dyna semantics (replay ratio, synthetic ratio, retrain
// cadence, rollout count).
struct RunConfig {
  std::string env = "pendulum/dmc";
  Algorithm algorithm = Algorithm::sac;
  std::uint64_t seed = 0;
  std::int64_t total_steps = 30000;
  std::int64_t warmup = 10000;          // uniform random actions, no updates
  std::int64_t updates_per_step = 1;    // replay ratio
  std::int64_t batch = 256;
  double synthetic_ratio = 0.0;         // S: synthetic share of each batch
  std::int64_t rollouts_per_step = 0;   // M: model rollouts per env step
  std::int64_t model_horizon = 1;
  std::int64_t model_retrain_interval = 250;
  std::int64_t model_train_steps = 2500;
  std::int64_t model_batch = 256;
  std::int64_t ensemble_members = 7;
  std::int64_t ensemble_elites = 5;
  std::vector<std::int64_t> sac_hidden = {256, 256};
  std::vector<std::int64_t> model_hidden = {200, 200};
  double lr = 3e-4;
  double gamma = 0.99;
  double polyak = 0.995;
  bool critic_layernorm = false;
  std::int64_t agent_reset_period = 0;  // env steps; 0 disables
  std::int64_t model_reset_period = 0;  // env steps; 0 disables
  std::int64_t eval_interval = 1000;
  std::int64_t eval_episodes = 5;
  std::int64_t real_capacity = 1000000;
  std::int64_t synthetic_capacity = 100000;
  std::int64_t model_error_window = 1000;
  bool record_timing = true;
  bool audit_perfect_model = true;
  // Also dump the replay buffers (and ensemble weights, when learned) at the
  // end of the run, for invariance checks across runs.
  bool dump_state = false;
  std::string out_dir = "run";

  // True when synthetic data actually flows: a non-sac algorithm with a
  // nonzero synthetic ratio or rollout count. An mbpo run with S = 0 and
  // rollouts disabled is semantically SAC and must behave identically.
  bool model_active() const {
    return algorithm != Algorithm::sac &&
           (synthetic_ratio > 0.0 || rollouts_per_step > 0);
  }

  void validate() const;  // throws ConfigError
};

// Preset: MBPO defaults (Dyna arm).
RunConfig mbpo_config();
// Preset: plain SAC defaults.
RunConfig sac_config();
// Scale the compute-bound knobs for a single desktop core.
void desk_profile(RunConfig& cfg);

// Field registry used by the config-file layer; every settable RunConfig
// field has a stable key.
std::vector<std::string> run_config_keys();
std::map<std::string, std::string> run_config_to_kv(const RunConfig& cfg);
// Throws ConfigError on unknown keys or unparseable values.
void set_run_config_field(RunConfig& cfg, const std::string& key,
                          const std::string& value);
RunConfig run_config_from_kv(const std::map<std::string, std::string>& kv);

// Everything a finished run proves about itself; serialized as a flat
// key=value ledger next to the metrics file.
struct RunLedger {
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::int64_t updates = 0;
  std::int64_t retrains = 0;
  std::int64_t rollout_transitions = 0;
  std::int64_t rollout_blowups = 0;
  std::int64_t rollout_terminated = 0;
  std::int64_t agent_resets = 0;
  std::int64_t model_resets = 0;
  std::int64_t clip_events = 0;
  std::int64_t mixed_batches = 0;
  std::int64_t composition_expected_synthetic = 0;  // per batch, from (B, S)
  std::int64_t composition_violations = 0;
  std::int64_t audits_checked = 0;
  std::int64_t audit_failures = 0;
  double final_eval_return = 0.0;
  double wall_seconds = 0.0;

  std::map<std::string, std::string> to_kv() const;
};

struct RunResult {
  RunLedger ledger;
  std::filesystem::path run_dir;
  std::filesystem::path metrics_path;
};

// Fixed metrics header. One row per evaluation point (update metrics are
// means over the interval since the previous row; temperature is the value
// at evaluation time) plus one sparse row per event (retrain, agent_reset,
// model_reset) with the metric cells empty. Floats use %.9g. The timing
// column is empty when record_timing is off.
inline constexpr const char* kMetricsHeader =
    "step,eval_return_mean,eval_return_std,mean_q,critic_loss,actor_loss,"
    "temperature,pct_model_error,sec_per_env_step,event";

// Execute one run: writes metrics.csv, ledger.txt, config.txt and
// final_params.bin into cfg.out_dir. Deterministic given cfg (timing column
// aside). Component failures are rethrown with the env step attached.
RunResult train(const RunConfig& cfg);

struct SweepCell {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  double final_return = 0.0;
  std::string error;
};

// One train() per (ratio, seed) under out_dir; individual failures are
// recorded and the sweep continues. Writes ratio_sweep.csv.
std::vector<SweepCell> ratio_sweep(const RunConfig& base,
                                   const std::vector<double>& ratios,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::filesystem::path& out_dir);

}  // namespace dynalab
