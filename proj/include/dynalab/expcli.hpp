#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dynalab/dyna.hpp"

namespace dynalab {

// Experiment description parsed from a flat text file:
//   # comment
//   key = value            (any RunConfig key, see run_config_keys())
//   name = my_experiment   (experiment-level)
//   sweep.key = v1, v2     (cartesian sweep axis over a RunConfig key)
// Unknown keys and malformed values raise ConfigError at parse time.
struct ExperimentSpec {
  std::string name = "experiment";
  RunConfig base;
  // Axis order is the key's lexicographic order; expansion is the cartesian
  // product in that order with the last axis fastest.
  std::map<std::string, std::vector<std::string>> sweeps;
};

ExperimentSpec parse_experiment_text(const std::string& text);
ExperimentSpec parse_experiment_file(const std::filesystem::path& path);
// Inverse of parsing; parse(render(spec)) == spec.
std::string render_experiment(const ExperimentSpec& spec);

struct ExpandedRun {
  std::string name;  // directory-safe, derived from the axis values
  RunConfig config;  // out_dir not yet assigned
};

std::vector<ExpandedRun> expand_runs(const ExperimentSpec& spec);

struct RunOutcome {
  std::string name;
  bool ok = false;
  std::string error;
  RunLedger ledger;
};

struct ExperimentResult {
  std::vector<RunOutcome> outcomes;
  std::int64_t n_ok = 0;
  std::int64_t n_failed = 0;
};

// Execute every expanded run under out_dir/<run name>/ using `parallel`
// worker threads. Runs are independent and individually deterministic, so
// the artifacts do not depend on `parallel`. Per-run failures are recorded
// and the remaining runs proceed. Writes runs.csv and manifest.txt.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::filesystem::path& out_dir,
                                int parallel);

// FNV-1a content manifest over every run artifact under dir, one
// "<relative path> <hex hash>" line per file, sorted by path. Wall-clock
// content (the sec_per_env_step metrics column and the ledger wall_seconds
// value) is masked before hashing so that identical work hashes identically.
void write_manifest(const std::filesystem::path& dir);
std::uint64_t fnv1a(const std::string& bytes);

// Normalizers for aggregate(): a named policy or a literal positive number.
//   per_task_max_mean: per task, the best eval_return_mean observed across
//                      all of that task's runs and steps.
//   dmc_max_return:    per task, horizon * 1.0 from the task's variant.
struct AggregateOptions {
  std::string normalizer = "per_task_max_mean";
};

struct AggregateSummary {
  struct TaskAlgo {
    std::string env;
    std::string algorithm;
    std::int64_t runs = 0;
    double final_return_mean = 0.0;
    double final_normalized_mean = 0.0;
  };
  std::vector<TaskAlgo> rows;
  std::map<std::string, double> normalizer_by_env;
};

// Pure function of the on-disk run artifacts under dir: emits long-format
// plot data (plot_return.csv, plot_mean_q.csv, plot_model_error.csv), a
// summary (aggregate.csv), and one SVG learning-curve chart per task under
// dir/aggregate/.
AggregateSummary aggregate(const std::filesystem::path& dir,
                           const AggregateOptions& opts = {});

struct TimingRow {
  std::string run;
  std::string algorithm;
  std::int64_t samples = 0;
  double mean_sec = 0.0;
  double p95_sec = 0.0;
};

struct TimingReport {
  std::vector<TimingRow> runs;
  std::map<std::string, double> mean_by_algorithm;
};

// Per-run mean and 95th percentile of sec_per_env_step, plus per-algorithm
// means; written to dir/timing.csv.
TimingReport timing_report(const std::filesystem::path& dir);

}  // namespace dynalab
