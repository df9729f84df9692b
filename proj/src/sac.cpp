#include "dynalab/sac.hpp"

#include <cmath>

#include "dynalab/distributions.hpp"
#include "dynalab/tape.hpp"

namespace dynalab {

namespace {

ParamSet merged(ParamSet a, ParamSet b) {
  for (auto& [k, v] : b.entries) a.insert(k, std::move(v));
  return a;
}

Array fill_normal(std::int64_t rows, std::int64_t cols, Rng& rng) {
  Array n = Array::zeros({rows, cols});
  for (auto& v : n.data) v = rng.normal();
  return n;
}

}  // namespace

SacAgent::SacAgent(SacConfig cfg, Rng& init_rng) : cfg_(std::move(cfg)) {
  if (cfg_.obs_dim <= 0 || cfg_.act_dim <= 0)
    throw DimensionError("SacAgent: obs_dim and act_dim must be positive");
  actor_spec_ = MlpSpec{cfg_.obs_dim, cfg_.hidden, 2 * cfg_.act_dim,
                        Activation::relu, false, "actor."};
  q1_spec_ = MlpSpec{cfg_.obs_dim + cfg_.act_dim, cfg_.hidden, 1,
                     Activation::relu, cfg_.critic_layernorm, "q1."};
  q2_spec_ = MlpSpec{cfg_.obs_dim + cfg_.act_dim, cfg_.hidden, 1,
                     Activation::relu, cfg_.critic_layernorm, "q2."};
  init(init_rng);
}

void SacAgent::init(Rng& rng) {
  actor_ = init_mlp(actor_spec_, rng);
  critic_ = merged(init_mlp(q1_spec_, rng), init_mlp(q2_spec_, rng));
  target_ = critic_;
  actor_opt_ = AdamState{};
  actor_opt_.lr = cfg_.lr;
  actor_opt_.eps = cfg_.adam_eps;
  critic_opt_ = AdamState{};
  critic_opt_.lr = cfg_.lr;
  critic_opt_.eps = cfg_.adam_eps;
  log_alpha_ = cfg_.init_log_alpha;
  alpha_m_ = alpha_v_ = 0.0;
  alpha_steps_ = 0;
  updates_done_ = 0;
}

void SacAgent::reset(Rng& rng) { init(rng); }

double SacAgent::alpha() const { return std::exp(log_alpha_); }

void SacAgent::actor_forward(const Array& obs, Array& mean,
                             Array& logstd) const {
  Array out = eval_mlp(actor_spec_, actor_, obs);
  const std::int64_t b = out.rows();
  mean = Array::zeros({b, cfg_.act_dim});
  logstd = Array::zeros({b, cfg_.act_dim});
  for (std::int64_t r = 0; r < b; ++r)
    for (std::int64_t j = 0; j < cfg_.act_dim; ++j) {
      mean(r, j) = out(r, j);
      logstd(r, j) = smooth_clamp_value(out(r, cfg_.act_dim + j),
                                        cfg_.logstd_lo, cfg_.logstd_hi);
    }
}

Array SacAgent::act(const Array& obs, Rng& rng, bool deterministic) const {
  if (obs.cols() != cfg_.obs_dim)
    throw DimensionError("SacAgent::act: observation width mismatch");
  Array mean, logstd;
  actor_forward(obs, mean, logstd);
  Array a = Array::zeros({obs.rows(), cfg_.act_dim});
  for (std::int64_t r = 0; r < obs.rows(); ++r)
    for (std::int64_t j = 0; j < cfg_.act_dim; ++j) {
      double u = mean(r, j);
      if (!deterministic) u += std::exp(logstd(r, j)) * rng.normal();
      a(r, j) = std::tanh(u);
    }
  return a;
}

SacUpdateStats SacAgent::update(const Batch& batch, Rng& rng) {
  const std::int64_t b = batch.size();
  SacUpdateStats stats;

  // Rng consumption order is fixed: b*act_dim normals for the next-state
  // action, then b*act_dim normals for the actor's fresh action.
  Array next_noise = fill_normal(b, cfg_.act_dim, rng);
  Array actor_noise = fill_normal(b, cfg_.act_dim, rng);

  // TD target y = r + gamma * (1 - done) * (min target Q - alpha * logp').
  Array y = Array::zeros({b, 1});
  {
    Tape t;
    auto av = stage_mlp(t, actor_spec_, actor_, false);
    Var head = forward_mlp(t, actor_spec_, av, t.constant(batch.next_obs));
    Var mean = t.slice_cols(head, 0, cfg_.act_dim);
    Var logstd = smooth_clamp(t, t.slice_cols(head, cfg_.act_dim, cfg_.act_dim),
                              cfg_.logstd_lo, cfg_.logstd_hi);
    auto sample = squashed_gaussian_sample(t, mean, logstd, next_noise);
    Var in = t.concat_cols(t.constant(batch.next_obs), sample.action);
    Var tq1 = forward_mlp(t, q1_spec_, stage_mlp(t, q1_spec_, target_, false), in);
    Var tq2 = forward_mlp(t, q2_spec_, stage_mlp(t, q2_spec_, target_, false), in);
    Var tmin = t.min(tq1, tq2);
    const Array& q = t.val(tmin);
    const Array& lp = t.val(sample.logprob);
    const double a = alpha();
    for (std::int64_t r = 0; r < b; ++r)
      y(r, 0) = batch.rew(r, 0) +
                cfg_.gamma * (1.0 - batch.done(r, 0)) * (q(r, 0) - a * lp(r, 0));
  }

  // Critic step.
  {
    Tape t;
    Var in = t.constant([&] {
      Array x = Array::zeros({b, cfg_.obs_dim + cfg_.act_dim});
      for (std::int64_t r = 0; r < b; ++r) {
        for (std::int64_t j = 0; j < cfg_.obs_dim; ++j) x(r, j) = batch.obs(r, j);
        for (std::int64_t j = 0; j < cfg_.act_dim; ++j)
          x(r, cfg_.obs_dim + j) = batch.act(r, j);
      }
      return x;
    }());
    Var q1 = forward_mlp(t, q1_spec_, stage_mlp(t, q1_spec_, critic_, true), in);
    Var q2 = forward_mlp(t, q2_spec_, stage_mlp(t, q2_spec_, critic_, true), in);
    Var yv = t.constant(y);
    Var loss = t.add(t.mean_all(t.square(t.sub(q1, yv))),
                     t.mean_all(t.square(t.sub(q2, yv))));
    t.backward(loss);
    ParamSet grads = t.param_grads();
    adam_step(critic_opt_, critic_, grads);
    stats.critic_loss = t.val(loss)[0];
    const Array& v1 = t.val(q1);
    const Array& v2 = t.val(q2);
    double total = 0.0;
    for (std::int64_t r = 0; r < b; ++r)
      total += std::min(v1(r, 0), v2(r, 0));
    stats.mean_q = total / static_cast<double>(b);
  }

  // Actor step against the frozen (post-update) critics.
  double mean_logp = 0.0;
  {
    Tape t;
    auto av = stage_mlp(t, actor_spec_, actor_, true);
    Var head = forward_mlp(t, actor_spec_, av, t.constant(batch.obs));
    Var mean = t.slice_cols(head, 0, cfg_.act_dim);
    Var logstd = smooth_clamp(t, t.slice_cols(head, cfg_.act_dim, cfg_.act_dim),
                              cfg_.logstd_lo, cfg_.logstd_hi);
    auto sample = squashed_gaussian_sample(t, mean, logstd, actor_noise);
    Var in = t.concat_cols(t.constant(batch.obs), sample.action);
    Var q1 = forward_mlp(t, q1_spec_, stage_mlp(t, q1_spec_, critic_, false), in);
    Var q2 = forward_mlp(t, q2_spec_, stage_mlp(t, q2_spec_, critic_, false), in);
    Var qmin = t.min(q1, q2);
    Var loss = t.mean_all(t.sub(t.scale(sample.logprob, alpha()), qmin));
    t.backward(loss);
    ParamSet grads = t.param_grads();
    adam_step(actor_opt_, actor_, grads);
    stats.actor_loss = t.val(loss)[0];
    const Array& lp = t.val(sample.logprob);
    for (std::int64_t r = 0; r < b; ++r) mean_logp += lp(r, 0);
    mean_logp /= static_cast<double>(b);
  }
  stats.entropy_estimate = -mean_logp;

  // Temperature step: d/dlog_alpha of -exp(log_alpha) * mean(logp + H_bar),
  // with logp detached; a scalar Adam step mirroring adam_step().
  {
    const double g = -std::exp(log_alpha_) *
                     (mean_logp + cfg_.resolved_target_entropy());
    ++alpha_steps_;
    const double b1 = 0.9, b2 = 0.999;
    alpha_m_ = b1 * alpha_m_ + (1.0 - b1) * g;
    alpha_v_ = b2 * alpha_v_ + (1.0 - b2) * g * g;
    const double mhat =
        alpha_m_ / (1.0 - std::pow(b1, static_cast<double>(alpha_steps_)));
    const double vhat =
        alpha_v_ / (1.0 - std::pow(b2, static_cast<double>(alpha_steps_)));
    log_alpha_ -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
  }
  stats.alpha = alpha();

  // Polyak target update: theta' <- rho * theta' + (1 - rho) * theta.
  for (auto& [name, tp] : target_.entries) {
    const Array& cp = critic_.at(name);
    for (std::int64_t i = 0; i < tp.size(); ++i)
      tp[i] = cfg_.polyak * tp[i] + (1.0 - cfg_.polyak) * cp[i];
  }

  ++updates_done_;
  return stats;
}

ParamSet SacAgent::snapshot() const {
  ParamSet s;
  for (const auto& [k, v] : actor_.entries) s.insert(k, v);
  for (const auto& [k, v] : critic_.entries) s.insert(k, v);
  for (const auto& [k, v] : target_.entries) s.insert("tgt." + k, v);
  s.insert("alpha.log", Array::scalar(log_alpha_));
  return s;
}

void SacAgent::restore(const ParamSet& snap) {
  for (auto& [k, v] : actor_.entries) v = snap.at(k);
  for (auto& [k, v] : critic_.entries) v = snap.at(k);
  for (auto& [k, v] : target_.entries) v = snap.at("tgt." + k);
  log_alpha_ = snap.at("alpha.log")[0];
}

EvalStats evaluate_policy(const SacAgent& agent, Environment& env,
                          std::int64_t episodes, std::uint64_t seed) {
  EvalStats stats;
  Rng dummy(0);
  for (std::int64_t ep = 0; ep < episodes; ++ep) {
    Array obs = env.reset(derive_seed(seed, "episode",
                                      static_cast<std::uint64_t>(ep)));
    double total = 0.0;
    const auto& bound = env.task().spec().action_bound;
    while (true) {
      Array a = agent.act(obs, dummy, true);
      Array u = a;
      for (std::int64_t j = 0; j < u.size(); ++j)
        u[j] *= bound[static_cast<std::size_t>(j)];
      auto r = env.step(u);
      total += r.reward;
      obs = r.obs;
      if (r.terminated || r.truncated) break;
    }
    stats.returns.push_back(total);
  }
  double mean = 0.0;
  for (double r : stats.returns) mean += r;
  mean /= static_cast<double>(stats.returns.size());
  double var = 0.0;
  for (double r : stats.returns) var += (r - mean) * (r - mean);
  var /= static_cast<double>(stats.returns.size());
  stats.mean_return = mean;
  stats.std_return = std::sqrt(var);
  return stats;
}

}  // namespace dynalab
