#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dynalab/adam.hpp"
#include "dynalab/array.hpp"
#include "dynalab/envsuite.hpp"
#include "dynalab/mlp.hpp"
#include "dynalab/params.hpp"
#include "dynalab/replay.hpp"
#include "dynalab/rng.hpp"

namespace dynalab {

// Probabilistic dynamics ensemble. Each member is an MLP mapping
// [obs, action] to the mean and log-variance of [next_obs - obs, reward].
// Training standardizes inputs and targets with statistics frozen at each
// retrain; predictions are reported in raw units.
struct EnsembleConfig {
  std::int64_t obs_dim = 0;
  std::int64_t act_dim = 0;
  std::vector<std::int64_t> hidden = {200, 200};
  std::int64_t members = 7;
  std::int64_t elites = 5;
  double lr = 3e-4;
  double adam_eps = 1.5e-4;
  std::int64_t batch = 256;
  std::int64_t train_steps = 500;      // gradient steps per member per retrain
  double validation_fraction = 0.1;    // shared held-out split
  double logvar_lo = -10.0;            // smooth clamp bounds on log-variance
  double logvar_hi = 0.5;
  double std_floor = 1e-6;             // floor on standardization scales

  std::int64_t in_dim() const { return obs_dim + act_dim; }
  std::int64_t target_dim() const { return obs_dim + 1; }
};

struct EnsembleTrainStats {
  std::vector<double> validation_nll;  // per member
  std::vector<std::int64_t> elites;    // ascending validation NLL, ties by index
  double train_nll_last = 0.0;         // mean over members, final step
  std::int64_t dataset_rows = 0;
  std::int64_t validation_rows = 0;
};

struct RolloutStats {
  std::int64_t generated = 0;   // transitions pushed into the synthetic buffer
  std::int64_t terminated = 0;  // predicted states hitting the termination set
  std::int64_t dropped = 0;     // non-finite predictions discarded
};

// Batched policy: maps [B, obs_dim] observations to [B, act_dim] normalized
// actions in (-1, 1), drawing any noise from the supplied generator.
using RolloutPolicy = std::function<Array(const Array& obs, Rng& rng)>;
// Termination predicate on a single predicted observation row.
using TerminationPredicate = std::function<bool(const Array& obs)>;

// Select the `n_elites` members with the lowest validation NLL; ties are
// broken toward the lower index, output sorted by (nll, index).
std::vector<std::int64_t> select_elites(const std::vector<double>& val_nll,
                                        std::int64_t n_elites);

class Ensemble {
 public:
  Ensemble(EnsembleConfig cfg, Rng& init_rng);

  // Re-initialize all member parameters, optimizer state, scalers, and
  // elites from a fresh draw.
  void reset(Rng& rng);

  // Full retrain on the real buffer: shared validation split, per-member
  // bootstrap resample of the training rows, Adam on the Gaussian NLL.
  EnsembleTrainStats train(const ReplayBuffer& real, Rng& rng);

  // Raw-unit prediction for one member: mean and variance of
  // [next_obs - obs, reward], each [B, target_dim].
  void predict(std::int64_t member, const Array& obs, const Array& act,
               Array& mean, Array& var) const;

  // Mean over elite members of the member means, raw units.
  Array elite_mean_prediction(const Array& obs, const Array& act) const;

  // 100 * ||y_hat - y|| / ||y|| averaged over the newest `max_rows`
  // transitions, using the elite mean prediction. Rows with ||y|| < 1e-8 are
  // excluded (count reported through `excluded` when given); an empty or
  // fully excluded batch is a SamplingError.
  double percent_model_error(const ReplayBuffer& real, std::int64_t max_rows,
                             std::int64_t* excluded = nullptr) const;

  // Dyna expansion: draw `count` start observations uniformly from the real
  // buffer, then run a `horizon`-step chain per start: actions from
  // `policy`, outcomes sampled from uniformly chosen elite members, results
  // pushed into `synthetic`. Chains stop early on predicted termination or
  // a non-finite prediction.
  RolloutStats generate_rollouts(const ReplayBuffer& real,
                                 ReplayBuffer& synthetic, std::int64_t count,
                                 std::int64_t horizon,
                                 const RolloutPolicy& policy,
                                 const TerminationPredicate& terminated,
                                 Rng& rng);

  const EnsembleConfig& config() const { return cfg_; }
  const std::vector<std::int64_t>& elites() const { return elites_; }
  bool trained() const { return trained_; }
  const ParamSet& member_params(std::int64_t m) const { return params_[m]; }
  ParamSet& member_params(std::int64_t m) { return params_[m]; }
  const MlpSpec& member_spec(std::int64_t m) const { return specs_[m]; }
  const std::vector<double>& input_mean() const { return in_mean_; }
  const std::vector<double>& input_std() const { return in_std_; }
  const std::vector<double>& target_mean() const { return t_mean_; }
  const std::vector<double>& target_std() const { return t_std_; }

 private:
  void init_members(Rng& rng);

  EnsembleConfig cfg_;
  std::vector<MlpSpec> specs_;
  std::vector<ParamSet> params_;
  std::vector<AdamState> opt_;
  std::vector<double> in_mean_, in_std_, t_mean_, t_std_;
  std::vector<std::int64_t> elites_;
  bool trained_ = false;
};

// The all-knowing baseline: predictions come from the simulator itself via
// the invertible observation map, so a rollout transition is bit-identical
// to the transition the environment would produce from the same state.
class PerfectModel {
 public:
  explicit PerfectModel(const std::string& env_id);

  // One exact transition from `obs` under the normalized action.
  StepResult step(const Array& obs, const Array& act_normalized);

  RolloutStats generate_rollouts(const ReplayBuffer& real,
                                 ReplayBuffer& synthetic, std::int64_t count,
                                 std::int64_t horizon,
                                 const RolloutPolicy& policy, Rng& rng);

  const Environment& env() const { return env_; }

 private:
  Environment env_;
};

}  // namespace dynalab
