#include "dynalab/dyna.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>

namespace dynalab {

namespace {

std::string fmt_g(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string g9(double v) { return fmt_g(v, "%.9g"); }
std::string g17(double v) { return fmt_g(v, "%.17g"); }

std::string i64s(std::int64_t v) { return std::to_string(v); }

std::int64_t parse_i64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    std::int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + v +
                      "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key +
                      "': expected unsigned integer, got '" + v + "'");
  }
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v +
                      "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + v +
                    "'");
}

std::string list_to_string(const std::vector<std::int64_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

std::vector<std::int64_t> parse_list(const std::string& key,
                                     const std::string& v) {
  std::vector<std::int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_i64(key, item));
  if (out.empty())
    throw ConfigError("config key '" + key + "': expected integer list");
  return out;
}

struct FieldDef {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<FieldDef>& field_registry() {
  static const std::vector<FieldDef> fields = [] {
    std::vector<FieldDef> f;
    auto add = [&f](std::string key, auto get, auto set) {
      f.push_back({std::move(key), get, set});
    };
    add("env", [](const RunConfig& c) { return c.env; },
        [](RunConfig& c, const std::string& v) { c.env = v; });
    add("algorithm",
        [](const RunConfig& c) { return to_string(c.algorithm); },
        [](RunConfig& c, const std::string& v) {
          c.algorithm = algorithm_from_string(v);
        });
    add("seed", [](const RunConfig& c) { return std::to_string(c.seed); },
        [](RunConfig& c, const std::string& v) {
          c.seed = parse_u64("seed", v);
        });
    auto add_i64 = [&add](std::string key, std::int64_t RunConfig::*mem) {
      add(key, [mem](const RunConfig& c) { return i64s(c.*mem); },
          [key, mem](RunConfig& c, const std::string& v) {
            c.*mem = parse_i64(key, v);
          });
    };
    auto add_f64 = [&add](std::string key, double RunConfig::*mem) {
      add(key, [mem](const RunConfig& c) { return g17(c.*mem); },
          [key, mem](RunConfig& c, const std::string& v) {
            c.*mem = parse_f64(key, v);
          });
    };
    auto add_bool = [&add](std::string key, bool RunConfig::*mem) {
      add(key,
          [mem](const RunConfig& c) { return c.*mem ? std::string("true")
                                                    : std::string("false"); },
          [key, mem](RunConfig& c, const std::string& v) {
            c.*mem = parse_bool(key, v);
          });
    };
    auto add_list = [&add](std::string key,
                           std::vector<std::int64_t> RunConfig::*mem) {
      add(key, [mem](const RunConfig& c) { return list_to_string(c.*mem); },
          [key, mem](RunConfig& c, const std::string& v) {
            c.*mem = parse_list(key, v);
          });
    };
    add_i64("total_steps", &RunConfig::total_steps);
    add_i64("warmup", &RunConfig::warmup);
    add_i64("updates_per_step", &RunConfig::updates_per_step);
    add_i64("batch", &RunConfig::batch);
    add_f64("synthetic_ratio", &RunConfig::synthetic_ratio);
    add_i64("rollouts_per_step", &RunConfig::rollouts_per_step);
    add_i64("model_horizon", &RunConfig::model_horizon);
    add_i64("model_retrain_interval", &RunConfig::model_retrain_interval);
    add_i64("model_train_steps", &RunConfig::model_train_steps);
    add_i64("model_batch", &RunConfig::model_batch);
    add_i64("ensemble_members", &RunConfig::ensemble_members);
    add_i64("ensemble_elites", &RunConfig::ensemble_elites);
    add_list("sac_hidden", &RunConfig::sac_hidden);
    add_list("model_hidden", &RunConfig::model_hidden);
    add_f64("lr", &RunConfig::lr);
    add_f64("gamma", &RunConfig::gamma);
    add_f64("polyak", &RunConfig::polyak);
    add_bool("critic_layernorm", &RunConfig::critic_layernorm);
    add_i64("agent_reset_period", &RunConfig::agent_reset_period);
    add_i64("model_reset_period", &RunConfig::model_reset_period);
    add_i64("eval_interval", &RunConfig::eval_interval);
    add_i64("eval_episodes", &RunConfig::eval_episodes);
    add_i64("real_capacity", &RunConfig::real_capacity);
    add_i64("synthetic_capacity", &RunConfig::synthetic_capacity);
    add_i64("model_error_window", &RunConfig::model_error_window);
    add_bool("record_timing", &RunConfig::record_timing);
    add_bool("audit_perfect_model", &RunConfig::audit_perfect_model);
    add_bool("dump_state", &RunConfig::dump_state);
    add("out_dir", [](const RunConfig& c) { return c.out_dir; },
        [](RunConfig& c, const std::string& v) { c.out_dir = v; });
    return f;
  }();
  return fields;
}

void write_kv_file(const std::filesystem::path& path,
                   const std::map<std::string, std::string>& kv) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::sac: return "sac";
    case Algorithm::mbpo: return "mbpo";
    case Algorithm::mbpo_perfect_model: return "mbpo_perfect_model";
  }
  throw ConfigError("unknown algorithm enum value");
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "sac") return Algorithm::sac;
  if (s == "mbpo") return Algorithm::mbpo;
  if (s == "mbpo_perfect_model") return Algorithm::mbpo_perfect_model;
  throw ConfigError("unknown algorithm '" + s +
                    "' (expected sac, mbpo, or mbpo_perfect_model)");
}

void RunConfig::validate() const {
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (warmup < 0 || warmup >= total_steps)
    throw ConfigError("warmup must be in [0, total_steps)");
  if (updates_per_step < 0) throw ConfigError("updates_per_step must be >= 0");
  if (batch <= 0) throw ConfigError("batch must be positive");
  if (synthetic_ratio < 0.0 || synthetic_ratio > 1.0)
    throw ConfigError("synthetic_ratio must be in [0, 1]");
  if (rollouts_per_step < 0) throw ConfigError("rollouts_per_step must be >= 0");
  if (model_horizon <= 0) throw ConfigError("model_horizon must be positive");
  if (model_retrain_interval <= 0)
    throw ConfigError("model_retrain_interval must be positive");
  if (ensemble_elites <= 0 || ensemble_elites > ensemble_members)
    throw ConfigError("ensemble_elites must be in [1, ensemble_members]");
  if (eval_interval <= 0) throw ConfigError("eval_interval must be positive");
  if (eval_episodes <= 0) throw ConfigError("eval_episodes must be positive");
  if (real_capacity <= 0 || synthetic_capacity <= 0)
    throw ConfigError("buffer capacities must be positive");
  if (agent_reset_period < 0 || model_reset_period < 0)
    throw ConfigError("reset periods must be >= 0");
  if (algorithm == Algorithm::sac &&
      (synthetic_ratio != 0.0 || rollouts_per_step != 0))
    throw ConfigError(
        "algorithm sac implies synthetic_ratio = 0 and rollouts_per_step = 0");
}

RunConfig mbpo_config() {
  RunConfig c;
  c.algorithm = Algorithm::mbpo;
  c.updates_per_step = 20;
  c.synthetic_ratio = 0.95;
  c.rollouts_per_step = 400;
  return c;
}

RunConfig sac_config() { return RunConfig{}; }

void desk_profile(RunConfig& cfg) {
  cfg.warmup = 1000;
  cfg.batch = 64;
  cfg.sac_hidden = {48, 48};
  cfg.model_hidden = {48, 48};
  cfg.model_batch = 64;
  cfg.model_train_steps = 120;
  cfg.eval_episodes = 3;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : field_registry()) keys.push_back(f.key);
  return keys;
}

std::map<std::string, std::string> run_config_to_kv(const RunConfig& cfg) {
  std::map<std::string, std::string> kv;
  for (const auto& f : field_registry()) kv[f.key] = f.get(cfg);
  return kv;
}

void set_run_config_field(RunConfig& cfg, const std::string& key,
                          const std::string& value) {
  for (const auto& f : field_registry()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig run_config_from_kv(const std::map<std::string, std::string>& kv) {
  RunConfig cfg;
  for (const auto& [k, v] : kv) set_run_config_field(cfg, k, v);
  return cfg;
}

std::map<std::string, std::string> RunLedger::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["env_steps"] = i64s(env_steps);
  kv["episodes"] = i64s(episodes);
  kv["updates"] = i64s(updates);
  kv["retrains"] = i64s(retrains);
  kv["rollout_transitions"] = i64s(rollout_transitions);
  kv["rollout_blowups"] = i64s(rollout_blowups);
  kv["rollout_terminated"] = i64s(rollout_terminated);
  kv["agent_resets"] = i64s(agent_resets);
  kv["model_resets"] = i64s(model_resets);
  kv["clip_events"] = i64s(clip_events);
  kv["mixed_batches"] = i64s(mixed_batches);
  kv["composition_expected_synthetic"] = i64s(composition_expected_synthetic);
  kv["composition_violations"] = i64s(composition_violations);
  kv["audits_checked"] = i64s(audits_checked);
  kv["audit_failures"] = i64s(audit_failures);
  kv["final_eval_return"] = g17(final_eval_return);
  kv["wall_seconds"] = g17(wall_seconds);
  return kv;
}

namespace {

// Bit-exact comparison helper for the perfect-model audit.
bool rows_equal(const Array& a, const Array& b) {
  if (a.size() != b.size()) return false;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

RunResult train(const RunConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  write_kv_file(dir / "config.txt", run_config_to_kv(cfg));

  Environment env(cfg.env);
  Environment eval_env(cfg.env);
  const EnvSpec& spec = env.task().spec();
  const std::vector<double>& bound = spec.action_bound;

  const bool model_active = cfg.model_active();
  const bool learned_model = model_active && cfg.algorithm == Algorithm::mbpo;
  const bool perfect_model =
      model_active && cfg.algorithm == Algorithm::mbpo_perfect_model;

  // Each concern draws from its own seed lineage so that an inactive
  // component never perturbs the others' streams.
  Rng exploration_rng(derive_seed(cfg.seed, "exploration"));
  Rng update_rng(derive_seed(cfg.seed, "update"));
  Rng model_rng(derive_seed(cfg.seed, "model"));

  SacConfig scfg;
  scfg.obs_dim = spec.obs_dim;
  scfg.act_dim = spec.act_dim;
  scfg.hidden = cfg.sac_hidden;
  scfg.lr = cfg.lr;
  scfg.gamma = cfg.gamma;
  scfg.polyak = cfg.polyak;
  scfg.critic_layernorm = cfg.critic_layernorm;
  Rng agent_init(derive_seed(cfg.seed, "agent", 0));
  SacAgent agent(scfg, agent_init);

  ReplayBuffer real("real", cfg.real_capacity, spec.obs_dim, spec.act_dim);
  ReplayBuffer synthetic("synthetic", cfg.synthetic_capacity, spec.obs_dim,
                         spec.act_dim);

  std::unique_ptr<Ensemble> ensemble;
  std::unique_ptr<PerfectModel> pmodel;
  std::ofstream model_report;
  if (learned_model) {
    EnsembleConfig ecfg;
    ecfg.obs_dim = spec.obs_dim;
    ecfg.act_dim = spec.act_dim;
    ecfg.hidden = cfg.model_hidden;
    ecfg.members = cfg.ensemble_members;
    ecfg.elites = cfg.ensemble_elites;
    ecfg.lr = cfg.lr;
    ecfg.batch = cfg.model_batch;
    ecfg.train_steps = cfg.model_train_steps;
    Rng model_init(derive_seed(cfg.seed, "model_init", 0));
    ensemble = std::make_unique<Ensemble>(ecfg, model_init);
    model_report.open(dir / "model_report.csv");
    model_report << "step,retrain,validation_nll_mean,train_nll_last,"
                    "dataset_rows,validation_rows,elites\n";
  }
  if (perfect_model) pmodel = std::make_unique<PerfectModel>(cfg.env);
  // Audit environment for replaying perfect-model transitions independently.
  std::unique_ptr<Environment> audit_env;
  if (perfect_model && cfg.audit_perfect_model)
    audit_env = std::make_unique<Environment>(cfg.env);

  TerminationPredicate term_pred;
  if (env.variant().termination == TerminationMode::early_termination) {
    const Task* task = &env.task();
    term_pred = [task](const Array& o) {
      return task->early_terminated(task->state_from_observation(o));
    };
  } else {
    term_pred = [](const Array&) { return false; };
  }

  RolloutPolicy rollout_policy = [&agent](const Array& o, Rng& rg) {
    return agent.act(o, rg, false);
  };

  std::filesystem::path metrics_path = dir / "metrics.csv";
  std::ofstream metrics(metrics_path);
  if (!metrics)
    throw std::runtime_error("cannot open " + metrics_path.string());
  metrics << kMetricsHeader << "\n";

  RunLedger ledger;
  std::uint64_t episode_counter = 0;
  std::uint64_t eval_counter = 0;
  std::uint64_t agent_reset_counter = 0;
  std::uint64_t model_reset_counter = 0;
  Array obs = env.reset(derive_seed(cfg.seed, "env", episode_counter++));

  // Accumulators for the interval since the last metrics row.
  double sum_mean_q = 0.0, sum_critic = 0.0, sum_actor = 0.0;
  std::int64_t n_update_stats = 0;
  double interval_seconds = 0.0;
  std::int64_t interval_steps = 0;
  bool post_reset_pending = false;

  auto write_row = [&metrics](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) metrics << ",";
      metrics << cells[i];
    }
    metrics << "\n";
  };

  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    try {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<std::string> events;

      // 1. Act: uniform random during warmup, stochastic policy after.
      Array a_norm = Array::zeros({1, spec.act_dim});
      if (step <= cfg.warmup) {
        for (std::int64_t j = 0; j < spec.act_dim; ++j)
          a_norm(0, j) = exploration_rng.uniform(-1.0, 1.0);
      } else {
        a_norm = agent.act(obs, exploration_rng, false);
      }
      Array u = a_norm;
      for (std::int64_t j = 0; j < spec.act_dim; ++j)
        u(0, j) *= bound[static_cast<std::size_t>(j)];

      // 2. Environment step, 3. store the real transition.
      StepResult r = env.step(u);
      real.push(obs, a_norm, r.reward, r.obs, r.terminated);
      ++ledger.env_steps;
      if (r.terminated || r.truncated) {
        ++ledger.episodes;
        obs = env.reset(derive_seed(cfg.seed, "env", episode_counter++));
      } else {
        obs = r.obs;
      }

      // 4. Periodic ensemble retrain on the real buffer.
      if (learned_model && step > cfg.warmup &&
          (step - cfg.warmup) % cfg.model_retrain_interval == 0) {
        EnsembleTrainStats ts = ensemble->train(real, model_rng);
        ++ledger.retrains;
        events.push_back("retrain");
        double nll = 0.0;
        for (double v : ts.validation_nll) nll += v;
        nll /= static_cast<double>(ts.validation_nll.size());
        model_report << step << "," << ledger.retrains << "," << g9(nll) << ","
                     << g9(ts.train_nll_last) << "," << ts.dataset_rows << ","
                     << ts.validation_rows << ",";
        for (std::size_t i = 0; i < ts.elites.size(); ++i)
          model_report << (i ? " " : "") << ts.elites[i];
        model_report << "\n";
      }

      // 5. Synthetic rollouts into the model buffer.
      if (model_active && step > cfg.warmup && cfg.rollouts_per_step > 0) {
        RolloutStats rs;
        if (perfect_model) {
          rs = pmodel->generate_rollouts(real, synthetic, cfg.rollouts_per_step,
                                         cfg.model_horizon, rollout_policy,
                                         model_rng);
          if (audit_env && rs.generated > 0) {
            // Every stored perfect-model transition must match an
            // independent simulator replay bit for bit.
            std::int64_t start = synthetic.size() - rs.generated;
            if (start < 0) start = 0;
            for (std::int64_t i = start; i < synthetic.size(); ++i) {
              Array o = synthetic.obs_at(i);
              Array a = synthetic.act_at(i);
              EnvState s = env.task().state_from_observation(o);
              audit_env->reset_to_state(s);
              Array ua = a;
              for (std::int64_t j = 0; j < spec.act_dim; ++j)
                ua[j] *= bound[static_cast<std::size_t>(j)];
              StepResult rr = audit_env->step(ua);
              ++ledger.audits_checked;
              const bool ok = rows_equal(rr.obs, synthetic.next_obs_at(i)) &&
                              rr.reward == synthetic.reward_at(i) &&
                              rr.terminated == synthetic.terminated_at(i);
              if (!ok) ++ledger.audit_failures;
            }
          }
        } else {
          rs = ensemble->generate_rollouts(real, synthetic,
                                           cfg.rollouts_per_step,
                                           cfg.model_horizon, rollout_policy,
                                           term_pred, model_rng);
        }
        ledger.rollout_transitions += rs.generated;
        ledger.rollout_blowups += rs.dropped;
        ledger.rollout_terminated += rs.terminated;
      }

      // 6. Gradient updates on mixed minibatches.
      if (step > cfg.warmup) {
        const double ratio = model_active ? cfg.synthetic_ratio : 0.0;
        for (std::int64_t k = 0; k < cfg.updates_per_step; ++k) {
          Batch bt = sample_mixed(real, synthetic, cfg.batch, ratio,
                                  update_rng);
          if (model_active) {
            ++ledger.mixed_batches;
            const std::int64_t expect =
                synthetic_rows(cfg.batch, cfg.synthetic_ratio);
            ledger.composition_expected_synthetic = expect;
            if (synthetic.size() > 0 && bt.n_synthetic != expect)
              ++ledger.composition_violations;
          }
          SacUpdateStats us = agent.update(bt, update_rng);
          ++ledger.updates;
          sum_mean_q += us.mean_q;
          sum_critic += us.critic_loss;
          sum_actor += us.actor_loss;
          ++n_update_stats;
        }
      }

      // 7. Scheduled interventions.
      if (cfg.agent_reset_period > 0 && step % cfg.agent_reset_period == 0) {
        Rng rr(derive_seed(cfg.seed, "agent", ++agent_reset_counter));
        agent.reset(rr);
        ++ledger.agent_resets;
        events.push_back("agent_reset");
        post_reset_pending = true;
      }
      if (learned_model && cfg.model_reset_period > 0 &&
          step % cfg.model_reset_period == 0) {
        Rng rr(derive_seed(cfg.seed, "model_init", ++model_reset_counter));
        ensemble->reset(rr);
        ++ledger.model_resets;
        events.push_back("model_reset");
      }

      if (cfg.record_timing) {
        interval_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
      }
      ++interval_steps;

      // 8. Evaluation and the metrics row.
      const bool eval_now =
          step % cfg.eval_interval == 0 || step == cfg.total_steps;
      if (eval_now) {
        EvalStats es = evaluate_policy(
            agent, eval_env, cfg.eval_episodes,
            derive_seed(cfg.seed, "eval", eval_counter++));
        ledger.final_eval_return = es.mean_return;

        std::string pct;
        if (learned_model && ensemble->trained())
          pct = g9(ensemble->percent_model_error(real, cfg.model_error_window));
        else if (perfect_model)
          pct = g9(0.0);

        std::string timing;
        if (cfg.record_timing && interval_steps > 0)
          timing = g9(interval_seconds /
                      static_cast<double>(interval_steps));

        if (post_reset_pending) {
          events.push_back("post_reset_eval");
          post_reset_pending = false;
        }
        std::string event;
        for (std::size_t i = 0; i < events.size(); ++i) {
          if (i) event += "+";
          event += events[i];
        }

        std::vector<std::string> cells(10);
        cells[0] = i64s(step);
        cells[1] = g9(es.mean_return);
        cells[2] = g9(es.std_return);
        if (n_update_stats > 0) {
          const double n = static_cast<double>(n_update_stats);
          cells[3] = g9(sum_mean_q / n);
          cells[4] = g9(sum_critic / n);
          cells[5] = g9(sum_actor / n);
        }
        cells[6] = g9(agent.alpha());
        cells[7] = pct;
        cells[8] = timing;
        cells[9] = event;
        write_row(cells);

        sum_mean_q = sum_critic = sum_actor = 0.0;
        n_update_stats = 0;
        interval_seconds = 0.0;
        interval_steps = 0;
      } else if (!events.empty()) {
        // Sparse event row: metric cells stay empty.
        std::string event;
        for (std::size_t i = 0; i < events.size(); ++i) {
          if (i) event += "+";
          event += events[i];
        }
        std::vector<std::string> cells(10);
        cells[0] = i64s(step);
        cells[9] = event;
        write_row(cells);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("env step " + std::to_string(step) + ": " +
                               e.what());
    }
  }

  ledger.clip_events = env.clip_events();
  // Wall clock only when timing was requested, so that runs which must be
  // byte-comparable (timing off) produce identical ledgers.
  if (cfg.record_timing)
    ledger.wall_seconds = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t_start)
                              .count();

  metrics.close();
  write_kv_file(dir / "ledger.txt", ledger.to_kv());
  save_params(agent.snapshot(), dir / "final_params.bin");
  if (cfg.dump_state) {
    save_params(real.to_params(), dir / "real_buffer.bin");
    save_params(synthetic.to_params(), dir / "synthetic_buffer.bin");
    if (learned_model) {
      ParamSet mp;
      for (std::int64_t m = 0; m < cfg.ensemble_members; ++m)
        for (const auto& [k, v] : ensemble->member_params(m).entries)
          mp.insert(k, v);
      save_params(mp, dir / "model_params.bin");
    }
  }

  RunResult result;
  result.ledger = ledger;
  result.run_dir = dir;
  result.metrics_path = metrics_path;
  return result;
}

std::vector<SweepCell> ratio_sweep(const RunConfig& base,
                                   const std::vector<double>& ratios,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<SweepCell> cells;
  for (double ratio : ratios) {
    for (std::uint64_t seed : seeds) {
      SweepCell cell;
      cell.ratio = ratio;
      cell.seed = seed;
      RunConfig cfg = base;
      cfg.synthetic_ratio = ratio;
      cfg.seed = seed;
      std::ostringstream name;
      name << "S" << g9(ratio) << "_seed" << seed;
      cfg.out_dir = (out_dir / name.str()).string();
      try {
        RunResult r = train(cfg);
        cell.ok = true;
        cell.final_return = r.ledger.final_eval_return;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  std::ofstream out(out_dir / "ratio_sweep.csv");
  out << "synthetic_ratio,seed,status,final_return,error\n";
  for (const auto& c : cells) {
    std::string err = c.error;
    for (char& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    out << g9(c.ratio) << "," << c.seed << "," << (c.ok ? "ok" : "failed")
        << "," << (c.ok ? g9(c.final_return) : std::string()) << "," << err
        << "\n";
  }
  return cells;
}

}  // namespace dynalab
