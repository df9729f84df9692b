#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dynalab/distributions.hpp"
#include "dynalab/sac.hpp"

using namespace dynalab;

namespace {

SacConfig small_config() {
  SacConfig cfg;
  cfg.obs_dim = 2;
  cfg.act_dim = 1;
  cfg.hidden = {8};
  return cfg;
}

Batch make_batch(const std::vector<std::vector<double>>& obs,
                 const std::vector<double>& act,
                 const std::vector<double>& rew,
                 const std::vector<std::vector<double>>& next_obs,
                 const std::vector<double>& done) {
  const auto b = static_cast<std::int64_t>(obs.size());
  Batch out;
  out.obs = Array::zeros({b, 2});
  out.act = Array::zeros({b, 1});
  out.rew = Array::zeros({b, 1});
  out.next_obs = Array::zeros({b, 2});
  out.done = Array::zeros({b, 1});
  for (std::int64_t r = 0; r < b; ++r) {
    out.obs(r, 0) = obs[static_cast<std::size_t>(r)][0];
    out.obs(r, 1) = obs[static_cast<std::size_t>(r)][1];
    out.act(r, 0) = act[static_cast<std::size_t>(r)];
    out.rew(r, 0) = rew[static_cast<std::size_t>(r)];
    out.next_obs(r, 0) = next_obs[static_cast<std::size_t>(r)][0];
    out.next_obs(r, 1) = next_obs[static_cast<std::size_t>(r)][1];
    out.done(r, 0) = done[static_cast<std::size_t>(r)];
  }
  return out;
}

void zero_params(ParamSet& p) {
  for (auto& [k, v] : p.entries)
    for (auto& x : v.data) x = 0.0;
}

// log-density of the squashed sample for a zeroed actor (mean 0, raw
// log-std head 0), replicating the agent's formula scalar-by-scalar.
double zeroed_actor_logp(double eps) {
  const double ls = smooth_clamp_value(0.0, -10.0, 2.0);
  const double u = std::exp(ls) * eps;
  const double gauss = -0.5 * eps * eps - ls - 0.5 * kLog2Pi;
  const double neg_log_jac =
      2.0 * (u + stable_softplus_value(-2.0 * u) - std::numbers::ln2);
  return gauss + neg_log_jac;
}

}  // namespace

TEST_CASE("update statistics match a hand-built fixture with frozen nets") {
  SacConfig cfg = small_config();
  cfg.lr = 0.0;  // freeze everything: all quantities stay analytic
  Rng init(1);
  SacAgent agent(cfg, init);
  // Zero the actor; constant critics q1 = 0.7, q2 = 0.9 (live and target).
  {
    ParamSet snap = agent.snapshot();
    zero_params(snap);
    snap.at("q1.l1.b")[0] = 0.7;
    snap.at("q2.l1.b")[0] = 0.9;
    snap.at("tgt.q1.l1.b")[0] = 0.7;
    snap.at("tgt.q2.l1.b")[0] = 0.9;
    agent.restore(snap);
  }
  Batch batch = make_batch({{0.1, 0.2}, {-0.3, 0.4}, {0.5, -0.6}},
                           {0.2, -0.1, 0.9}, {1.0, -2.0, 0.5},
                           {{0.0, 0.1}, {0.2, 0.3}, {-0.4, 0.5}},
                           {0.0, 1.0, 0.0});
  Rng up(77);
  auto stats = agent.update(batch, up);

  // Replicate the rng consumption: 3 normals for the next-state action, 3
  // for the actor's fresh action.
  Rng shadow(77);
  double next_eps[3], act_eps[3];
  for (auto& e : next_eps) e = shadow.normal();
  for (auto& e : act_eps) e = shadow.normal();

  const double gamma = cfg.gamma, alpha = 1.0, qmin = 0.7;
  double critic_loss = 0.0, actor_loss = 0.0, mean_logp = 0.0;
  for (int r = 0; r < 3; ++r) {
    double lp_next = zeroed_actor_logp(next_eps[r]);
    double y = batch.rew(r, 0) +
               gamma * (1.0 - batch.done(r, 0)) * (qmin - alpha * lp_next);
    critic_loss += (0.7 - y) * (0.7 - y) / 3.0 + (0.9 - y) * (0.9 - y) / 3.0;
    double lp = zeroed_actor_logp(act_eps[r]);
    actor_loss += (alpha * lp - qmin) / 3.0;
    mean_logp += lp / 3.0;
  }
  CHECK(std::abs(stats.critic_loss - critic_loss) < 1e-10);
  CHECK(std::abs(stats.actor_loss - actor_loss) < 1e-10);
  CHECK(std::abs(stats.mean_q - qmin) < 1e-12);
  CHECK(std::abs(stats.entropy_estimate + mean_logp) < 1e-10);
  CHECK(stats.alpha == 1.0);  // lr = 0 freezes the temperature too
}

TEST_CASE("terminal transitions bootstrap to y = r exactly") {
  SacConfig cfg = small_config();
  cfg.lr = 0.0;
  Rng init(2);
  SacAgent agent(cfg, init);
  ParamSet snap = agent.snapshot();
  zero_params(snap);
  agent.restore(snap);  // critics identically zero
  Batch batch = make_batch({{0.0, 0.0}, {1.0, -1.0}}, {0.1, 0.2}, {3.0, -1.5},
                           {{0.5, 0.5}, {0.0, 0.2}}, {1.0, 1.0});
  Rng up(5);
  auto stats = agent.update(batch, up);
  // loss = mse(0, y) * 2 with y = r.
  const double want = (3.0 * 3.0 + 1.5 * 1.5) / 2.0 * 2.0;
  CHECK(std::abs(stats.critic_loss - want) < 1e-12);
}

TEST_CASE("target networks follow the Polyak recursion exactly") {
  SacConfig cfg = small_config();
  Rng init(3);
  SacAgent agent(cfg, init);
  Batch batch = make_batch({{0.1, 0.2}, {-0.3, 0.4}}, {0.2, -0.1}, {1.0, -2.0},
                           {{0.0, 0.1}, {0.2, 0.3}}, {0.0, 0.0});
  Rng up(6);
  for (int it = 0; it < 3; ++it) {
    ParamSet target_before = agent.target_params();
    agent.update(batch, up);
    const ParamSet& critic_after = agent.critic_params();
    for (const auto& [name, tp] : agent.target_params().entries) {
      const Array& before = target_before.at(name);
      const Array& cp = critic_after.at(name);
      for (std::int64_t i = 0; i < tp.size(); ++i)
        CHECK(std::abs(tp[i] - (0.995 * before[i] + 0.005 * cp[i])) < 1e-15);
    }
  }
  CHECK(agent.updates_done() == 3);
}

TEST_CASE("temperature moves against the entropy error") {
  SacConfig cfg = small_config();
  Rng init(4);
  SacAgent agent(cfg, init);
  Batch batch = make_batch({{0.1, 0.2}, {-0.3, 0.4}}, {0.2, -0.1}, {1.0, -2.0},
                           {{0.0, 0.1}, {0.2, 0.3}}, {0.0, 0.0});
  const double la0 = agent.log_alpha();
  Rng up(8);
  auto stats = agent.update(batch, up);
  const double mean_logp = -stats.entropy_estimate;
  const double g = -1.0 * (mean_logp + cfg.resolved_target_entropy());
  const double delta = agent.log_alpha() - la0;
  if (g > 0.0) CHECK(delta < 0.0);
  if (g < 0.0) CHECK(delta > 0.0);
  CHECK(std::abs(delta) <= cfg.lr + 1e-12);
}

TEST_CASE("actions stay inside (-1, 1) and deterministic acting draws nothing") {
  SacConfig cfg = small_config();
  Rng init(5);
  SacAgent agent(cfg, init);
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    Array obs = Array::row({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
    Array a = agent.act(obs, rng, false);
    CHECK(a(0, 0) > -1.0);
    CHECK(a(0, 0) < 1.0);
  }
  Rng r1(9), r2(9);
  Array obs = Array::row({0.3, -0.7});
  agent.act(obs, r1, true);
  CHECK(r1.next() == r2.next());
}

TEST_CASE("training is reproducible for fixed seeds") {
  SacConfig cfg = small_config();
  Rng i1(11), i2(11);
  SacAgent a(cfg, i1), b(cfg, i2);
  Rng u1(12), u2(12);
  Batch batch = make_batch({{0.1, 0.2}, {-0.3, 0.4}, {0.5, -0.6}},
                           {0.2, -0.1, 0.9}, {1.0, -2.0, 0.5},
                           {{0.0, 0.1}, {0.2, 0.3}, {-0.4, 0.5}},
                           {0.0, 0.0, 1.0});
  for (int it = 0; it < 10; ++it) {
    auto sa = a.update(batch, u1);
    auto sb = b.update(batch, u2);
    CHECK(sa.critic_loss == sb.critic_loss);
    CHECK(sa.actor_loss == sb.actor_loss);
  }
  ParamSet pa = a.snapshot(), pb = b.snapshot();
  for (const auto& [k, v] : pa.entries) CHECK(v.data == pb.at(k).data);
}

TEST_CASE("reset restores a freshly initialized agent") {
  SacConfig cfg = small_config();
  Rng i1(21);
  SacAgent agent(cfg, i1);
  ParamSet fresh = agent.snapshot();
  Batch batch = make_batch({{0.1, 0.2}}, {0.2}, {1.0}, {{0.0, 0.1}}, {0.0});
  Rng up(22);
  agent.update(batch, up);
  Rng i2(21);
  agent.reset(i2);
  ParamSet back = agent.snapshot();
  for (const auto& [k, v] : fresh.entries) CHECK(v.data == back.at(k).data);
  CHECK(agent.updates_done() == 0);
}

TEST_CASE("critic layernorm trains finitely and bounds critic magnitudes") {
  SacConfig cfg = small_config();
  cfg.critic_layernorm = true;
  Rng init(41);
  SacAgent agent(cfg, init);
  Batch batch = make_batch({{0.1, 0.2}, {-0.3, 0.4}, {0.5, -0.6}},
                           {0.2, -0.1, 0.9}, {1.0, -2.0, 0.5},
                           {{0.0, 0.1}, {0.2, 0.3}, {-0.4, 0.5}},
                           {0.0, 0.0, 1.0});
  Rng up(42);
  for (int it = 0; it < 20; ++it) {
    auto stats = agent.update(batch, up);
    CHECK(std::isfinite(stats.critic_loss));
    CHECK(std::isfinite(stats.actor_loss));
  }
  // Far out-of-distribution inputs still give finite critic-driven losses.
  Batch far = make_batch({{1e6, -1e6}}, {0.5}, {0.0}, {{-1e6, 1e6}}, {0.0});
  Rng up2(43);
  auto stats = agent.update(far, up2);
  CHECK(std::isfinite(stats.mean_q));
  CHECK(std::isfinite(stats.critic_loss));
}

TEST_CASE("policy evaluation is deterministic and uses fresh episode seeds") {
  SacConfig cfg;
  cfg.obs_dim = 4;
  cfg.act_dim = 2;
  cfg.hidden = {8};
  Rng init(31);
  SacAgent agent(cfg, init);
  Environment e1("pointmass/dmc"), e2("pointmass/dmc");
  auto a = evaluate_policy(agent, e1, 3, 99);
  auto b = evaluate_policy(agent, e2, 3, 99);
  CHECK(a.returns == b.returns);
  CHECK(a.returns.size() == 3);
  // Distinct episode seeds should give distinct starts, hence returns.
  CHECK((a.returns[0] != a.returns[1] || a.returns[1] != a.returns[2]));
  CHECK(a.std_return >= 0.0);
}
