#pragma once

#include <cstdint>
#include <vector>

#include "dynalab/adam.hpp"
#include "dynalab/array.hpp"
#include "dynalab/envsuite.hpp"
#include "dynalab/mlp.hpp"
#include "dynalab/params.hpp"
#include "dynalab/replay.hpp"
#include "dynalab/rng.hpp"

namespace dynalab {

// Soft actor-critic with twin critics, Polyak-averaged target critics, a
// squashed-Gaussian actor, and automatic temperature tuning.
struct SacConfig {
  std::int64_t obs_dim = 0;
  std::int64_t act_dim = 0;
  std::vector<std::int64_t> hidden = {256, 256};
  double lr = 3e-4;
  double adam_eps = 1.5e-4;
  double gamma = 0.99;
  double polyak = 0.995;        // retained fraction of the target weights
  double target_entropy = 0.0;  // 0 means "use -act_dim"
  double init_log_alpha = 0.0;
  double logstd_lo = -10.0;     // smooth clamp on the actor's log-std head
  double logstd_hi = 2.0;
  // Layer normalization on every hidden pre-activation of both critics (and
  // their targets), used to bound critic magnitudes.
  bool critic_layernorm = false;

  double resolved_target_entropy() const {
    return target_entropy != 0.0 ? target_entropy
                                 : -static_cast<double>(act_dim);
  }
};

struct SacUpdateStats {
  double critic_loss = 0.0;  // mse(q1, y) + mse(q2, y)
  double actor_loss = 0.0;   // mean(alpha * logp - min(q1, q2))
  double mean_q = 0.0;       // mean over the batch of min(q1, q2)
  double alpha = 0.0;        // temperature after this update
  double entropy_estimate = 0.0;  // -mean(logp) from the actor pass
};

class SacAgent {
 public:
  SacAgent(SacConfig cfg, Rng& init_rng);

  // Normalized action in (-1, 1)^act_dim for a single observation row.
  // Stochastic draws consume act_dim normals; deterministic consumes none.
  Array act(const Array& obs, Rng& rng, bool deterministic) const;

  // One gradient step on every component from one minibatch:
  // critic TD step, actor step against frozen critics, temperature step,
  // then the Polyak target update.
  SacUpdateStats update(const Batch& batch, Rng& rng);

  // Re-draw all parameters and reset optimizer and temperature state.
  void reset(Rng& rng);

  double alpha() const;
  double log_alpha() const { return log_alpha_; }
  std::int64_t updates_done() const { return updates_done_; }
  const SacConfig& config() const { return cfg_; }

  const ParamSet& actor_params() const { return actor_; }
  const ParamSet& critic_params() const { return critic_; }
  const ParamSet& target_params() const { return target_; }
  ParamSet& critic_params() { return critic_; }
  ParamSet& target_params() { return target_; }

  // Snapshot of every learnable tensor (actor, critics, targets, log-alpha)
  // for checkpointing.
  ParamSet snapshot() const;
  void restore(const ParamSet& snap);

 private:
  void init(Rng& rng);
  // Mean/log-std split of the actor head; log-std smooth-clamped.
  void actor_forward(const Array& obs, Array& mean, Array& logstd) const;

  SacConfig cfg_;
  MlpSpec actor_spec_, q1_spec_, q2_spec_;
  ParamSet actor_, critic_, target_;
  AdamState actor_opt_, critic_opt_;
  double log_alpha_ = 0.0;
  double alpha_m_ = 0.0, alpha_v_ = 0.0;  // scalar Adam for the temperature
  std::int64_t alpha_steps_ = 0;
  std::int64_t updates_done_ = 0;
};

struct EvalStats {
  double mean_return = 0.0;
  double std_return = 0.0;  // population standard deviation
  std::vector<double> returns;
};

// Deterministic-policy evaluation over fresh episodes; episode i resets the
// environment with derive_seed(seed, "episode", i).
EvalStats evaluate_policy(const SacAgent& agent, Environment& env,
                          std::int64_t episodes, std::uint64_t seed);

}  // namespace dynalab
