#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "dynalab/expcli.hpp"

using namespace dynalab;

int main(int argc, char** argv) {
  CLI::App app{"dynalab: Dyna-style model-based RL laboratory"};
  app.require_subcommand(1);

  std::string spec_path, out_dir = "out", normalizer = "per_task_max_mean";
  std::string dir;
  int parallel = 1;

  auto* run = app.add_subcommand("run", "Execute an experiment spec");
  run->add_option("spec", spec_path, "Experiment spec file")->required();
  run->add_option("--parallel", parallel, "Worker threads")
      ->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory");

  auto* agg = app.add_subcommand("aggregate", "Build plot data from runs");
  agg->add_option("dir", dir, "Directory of finished runs")->required();
  agg->add_option("--normalizer", normalizer,
                  "per_task_max_mean, dmc_max_return, or a positive number");

  auto* tim = app.add_subcommand("timing", "Per-run timing report");
  tim->add_option("dir", dir, "Directory of finished runs")->required();

  auto* exp = app.add_subcommand("sweep-expand", "List the expanded runs");
  exp->add_option("spec", spec_path, "Experiment spec file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ExperimentSpec spec = parse_experiment_file(spec_path);
      if (const char* s = std::getenv("DYNALAB_SEED"))
        set_run_config_field(spec.base, "seed", s);
      ExperimentResult res = run_experiment(spec, out_dir, parallel);
      for (const auto& o : res.outcomes)
        std::printf("%-40s %s%s%s\n", o.name.c_str(),
                    o.ok ? "ok" : "FAILED", o.ok ? "" : ": ",
                    o.ok ? "" : o.error.c_str());
      std::printf("%lld ok, %lld failed\n",
                  static_cast<long long>(res.n_ok),
                  static_cast<long long>(res.n_failed));
      if (res.n_failed == 0) return 0;
      return res.n_ok > 0 ? 2 : 1;
    }
    if (agg->parsed()) {
      AggregateOptions opts;
      opts.normalizer = normalizer;
      AggregateSummary s = aggregate(dir, opts);
      for (const auto& r : s.rows)
        std::printf("%-24s %-20s runs=%lld final=%.6g normalized=%.6g\n",
                    r.env.c_str(), r.algorithm.c_str(),
                    static_cast<long long>(r.runs), r.final_return_mean,
                    r.final_normalized_mean);
      return 0;
    }
    if (tim->parsed()) {
      TimingReport rep = timing_report(dir);
      for (const auto& t : rep.runs)
        std::printf("%-40s %-20s mean=%.6gs p95=%.6gs (%lld samples)\n",
                    t.run.c_str(), t.algorithm.c_str(), t.mean_sec, t.p95_sec,
                    static_cast<long long>(t.samples));
      for (const auto& [algo, mean] : rep.mean_by_algorithm)
        std::printf("algorithm %-20s mean=%.6gs\n", algo.c_str(), mean);
      return 0;
    }
    if (exp->parsed()) {
      ExperimentSpec spec = parse_experiment_file(spec_path);
      auto runs = expand_runs(spec);
      for (const auto& r : runs) std::printf("%s\n", r.name.c_str());
      std::printf("%zu runs\n", runs.size());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
