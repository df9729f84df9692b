#include "dynalab/worldmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynalab/distributions.hpp"
#include "dynalab/tape.hpp"

namespace dynalab {

namespace {

std::vector<double> row_vector(const Array& a, std::int64_t r) {
  const auto c = a.cols();
  std::vector<double> out(static_cast<std::size_t>(c));
  for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(j)] = a(r, j);
  return out;
}

}  // namespace

std::vector<std::int64_t> select_elites(const std::vector<double>& val_nll,
                                        std::int64_t n_elites) {
  std::vector<std::int64_t> order(val_nll.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) {
                     return val_nll[static_cast<std::size_t>(a)] <
                            val_nll[static_cast<std::size_t>(b)];
                   });
  order.resize(static_cast<std::size_t>(
      std::min<std::int64_t>(n_elites, static_cast<std::int64_t>(order.size()))));
  return order;
}

Ensemble::Ensemble(EnsembleConfig cfg, Rng& init_rng) : cfg_(std::move(cfg)) {
  if (cfg_.obs_dim <= 0 || cfg_.act_dim <= 0)
    throw DimensionError("Ensemble: obs_dim and act_dim must be positive");
  if (cfg_.elites > cfg_.members || cfg_.elites <= 0)
    throw DimensionError("Ensemble: elite count must be in [1, members]");
  specs_.reserve(static_cast<std::size_t>(cfg_.members));
  for (std::int64_t m = 0; m < cfg_.members; ++m) {
    MlpSpec s;
    s.in = cfg_.in_dim();
    s.hidden = cfg_.hidden;
    s.out = 2 * cfg_.target_dim();
    s.activation = Activation::swish;
    s.prefix = "model.m" + std::to_string(m) + ".";
    specs_.push_back(std::move(s));
  }
  init_members(init_rng);
}

void Ensemble::init_members(Rng& rng) {
  params_.clear();
  opt_.clear();
  for (std::int64_t m = 0; m < cfg_.members; ++m) {
    params_.push_back(init_mlp(specs_[static_cast<std::size_t>(m)], rng));
    AdamState a;
    a.lr = cfg_.lr;
    a.eps = cfg_.adam_eps;
    opt_.push_back(std::move(a));
  }
  in_mean_.assign(static_cast<std::size_t>(cfg_.in_dim()), 0.0);
  in_std_.assign(static_cast<std::size_t>(cfg_.in_dim()), 1.0);
  t_mean_.assign(static_cast<std::size_t>(cfg_.target_dim()), 0.0);
  t_std_.assign(static_cast<std::size_t>(cfg_.target_dim()), 1.0);
  // Until the first retrain every member counts as an elite so the model is
  // usable (if poor) immediately.
  elites_.resize(static_cast<std::size_t>(cfg_.elites));
  std::iota(elites_.begin(), elites_.end(), 0);
  trained_ = false;
}

void Ensemble::reset(Rng& rng) { init_members(rng); }

EnsembleTrainStats Ensemble::train(const ReplayBuffer& real, Rng& rng) {
  const std::int64_t n = real.size();
  if (n < 2)
    throw SamplingError("Ensemble: need at least 2 transitions to train");
  const std::int64_t in_dim = cfg_.in_dim();
  const std::int64_t t_dim = cfg_.target_dim();

  // Assemble the raw dataset: inputs [obs, act], targets [next - obs, r].
  Array x = Array::zeros({n, in_dim});
  Array y = Array::zeros({n, t_dim});
  for (std::int64_t i = 0; i < n; ++i) {
    Array o = real.obs_at(i);
    Array a = real.act_at(i);
    Array no = real.next_obs_at(i);
    for (std::int64_t j = 0; j < cfg_.obs_dim; ++j) {
      x(i, j) = o[j];
      y(i, j) = no[j] - o[j];
    }
    for (std::int64_t j = 0; j < cfg_.act_dim; ++j) x(i, cfg_.obs_dim + j) = a[j];
    y(i, t_dim - 1) = real.reward_at(i);
  }

  // Shared validation split from a Fisher-Yates shuffle.
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (std::int64_t i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.below(i + 1))]);
  std::int64_t n_val = static_cast<std::int64_t>(
      std::nearbyint(cfg_.validation_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::int64_t>(n_val, 1, n - 1);
  const std::int64_t n_train = n - n_val;
  std::vector<std::int64_t> val_idx(perm.begin(),
                                    perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::int64_t> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_val),
                                      perm.end());

  // Standardization statistics from the training rows only, with a floored
  // population standard deviation.
  auto fit_scaler = [&](const Array& d, std::vector<double>& mean,
                        std::vector<double>& stdv) {
    const std::int64_t c = d.cols();
    mean.assign(static_cast<std::size_t>(c), 0.0);
    stdv.assign(static_cast<std::size_t>(c), 0.0);
    for (auto i : train_idx)
      for (std::int64_t j = 0; j < c; ++j)
        mean[static_cast<std::size_t>(j)] += d(i, j);
    for (auto& v : mean) v /= static_cast<double>(n_train);
    for (auto i : train_idx)
      for (std::int64_t j = 0; j < c; ++j) {
        double e = d(i, j) - mean[static_cast<std::size_t>(j)];
        stdv[static_cast<std::size_t>(j)] += e * e;
      }
    for (auto& v : stdv)
      v = std::max(std::sqrt(v / static_cast<double>(n_train)), cfg_.std_floor);
  };
  fit_scaler(x, in_mean_, in_std_);
  fit_scaler(y, t_mean_, t_std_);

  auto standardized_rows = [&](const std::vector<std::int64_t>& rows) {
    const auto b = static_cast<std::int64_t>(rows.size());
    Array xs = Array::zeros({b, in_dim});
    Array ys = Array::zeros({b, t_dim});
    for (std::int64_t k = 0; k < b; ++k) {
      std::int64_t i = rows[static_cast<std::size_t>(k)];
      for (std::int64_t j = 0; j < in_dim; ++j)
        xs(k, j) = (x(i, j) - in_mean_[static_cast<std::size_t>(j)]) /
                   in_std_[static_cast<std::size_t>(j)];
      for (std::int64_t j = 0; j < t_dim; ++j)
        ys(k, j) = (y(i, j) - t_mean_[static_cast<std::size_t>(j)]) /
                   t_std_[static_cast<std::size_t>(j)];
    }
    return std::pair<Array, Array>(std::move(xs), std::move(ys));
  };

  // Per-member bootstrap resample of the training rows.
  std::vector<std::vector<std::int64_t>> boot(
      static_cast<std::size_t>(cfg_.members));
  for (auto& b : boot) {
    b.resize(static_cast<std::size_t>(n_train));
    for (auto& i : b)
      i = train_idx[static_cast<std::size_t>(rng.below(n_train))];
  }

  const std::int64_t batch = std::min(cfg_.batch, n_train);
  std::vector<double> last_loss(static_cast<std::size_t>(cfg_.members), 0.0);
  std::vector<std::int64_t> rows(static_cast<std::size_t>(batch));
  for (std::int64_t step = 0; step < cfg_.train_steps; ++step) {
    for (std::int64_t m = 0; m < cfg_.members; ++m) {
      const auto& b = boot[static_cast<std::size_t>(m)];
      for (auto& r : rows) r = b[static_cast<std::size_t>(rng.below(n_train))];
      auto [xs, ys] = standardized_rows(rows);
      Tape t;
      auto pv = stage_mlp(t, specs_[static_cast<std::size_t>(m)],
                          params_[static_cast<std::size_t>(m)], true);
      Var out = forward_mlp(t, specs_[static_cast<std::size_t>(m)], pv,
                            t.constant(std::move(xs)));
      Var mean = t.slice_cols(out, 0, t_dim);
      Var logvar = smooth_clamp(t, t.slice_cols(out, t_dim, t_dim),
                                cfg_.logvar_lo, cfg_.logvar_hi);
      Var loss = gaussian_nll(t, mean, logvar, t.constant(std::move(ys)));
      t.backward(loss);
      ParamSet grads = t.param_grads();
      adam_step(opt_[static_cast<std::size_t>(m)],
                params_[static_cast<std::size_t>(m)], grads);
      const double loss_val = t.val(loss)[0];
      if (!std::isfinite(loss_val))
        throw ContractError("Ensemble: non-finite training loss for member " +
                            std::to_string(m) + " at step " +
                            std::to_string(step));
      last_loss[static_cast<std::size_t>(m)] = loss_val;
    }
  }

  // Shared validation NLL per member (standardized space, clamped logvar).
  auto [xv, yv] = standardized_rows(val_idx);
  EnsembleTrainStats stats;
  stats.validation_nll.resize(static_cast<std::size_t>(cfg_.members));
  for (std::int64_t m = 0; m < cfg_.members; ++m) {
    Array out = eval_mlp(specs_[static_cast<std::size_t>(m)],
                         params_[static_cast<std::size_t>(m)], xv);
    double total = 0.0;
    for (std::int64_t r = 0; r < n_val; ++r)
      for (std::int64_t j = 0; j < t_dim; ++j) {
        double mu = out(r, j);
        double lv = smooth_clamp_value(out(r, t_dim + j), cfg_.logvar_lo,
                                       cfg_.logvar_hi);
        double d = yv(r, j) - mu;
        total += 0.5 * (d * d * std::exp(-lv) + lv + kLog2Pi);
      }
    stats.validation_nll[static_cast<std::size_t>(m)] =
        total / static_cast<double>(n_val);
  }
  elites_ = select_elites(stats.validation_nll, cfg_.elites);
  stats.elites = elites_;
  stats.train_nll_last =
      std::accumulate(last_loss.begin(), last_loss.end(), 0.0) /
      static_cast<double>(cfg_.members);
  stats.dataset_rows = n;
  stats.validation_rows = n_val;
  trained_ = true;
  return stats;
}

void Ensemble::predict(std::int64_t member, const Array& obs, const Array& act,
                       Array& mean, Array& var) const {
  const std::int64_t b = obs.rows();
  const std::int64_t t_dim = cfg_.target_dim();
  if (obs.cols() != cfg_.obs_dim || act.cols() != cfg_.act_dim ||
      act.rows() != b)
    throw DimensionError("Ensemble::predict: input shape mismatch");
  Array xs = Array::zeros({b, cfg_.in_dim()});
  for (std::int64_t r = 0; r < b; ++r) {
    for (std::int64_t j = 0; j < cfg_.obs_dim; ++j)
      xs(r, j) = (obs(r, j) - in_mean_[static_cast<std::size_t>(j)]) /
                 in_std_[static_cast<std::size_t>(j)];
    for (std::int64_t j = 0; j < cfg_.act_dim; ++j)
      xs(r, cfg_.obs_dim + j) =
          (act(r, j) - in_mean_[static_cast<std::size_t>(cfg_.obs_dim + j)]) /
          in_std_[static_cast<std::size_t>(cfg_.obs_dim + j)];
  }
  Array out = eval_mlp(specs_[static_cast<std::size_t>(member)],
                       params_[static_cast<std::size_t>(member)], xs);
  mean = Array::zeros({b, t_dim});
  var = Array::zeros({b, t_dim});
  for (std::int64_t r = 0; r < b; ++r)
    for (std::int64_t j = 0; j < t_dim; ++j) {
      double sd = t_std_[static_cast<std::size_t>(j)];
      mean(r, j) = out(r, j) * sd + t_mean_[static_cast<std::size_t>(j)];
      double lv = smooth_clamp_value(out(r, t_dim + j), cfg_.logvar_lo,
                                     cfg_.logvar_hi);
      var(r, j) = std::exp(lv) * sd * sd;
    }
}

Array Ensemble::elite_mean_prediction(const Array& obs, const Array& act) const {
  Array acc = Array::zeros({obs.rows(), cfg_.target_dim()});
  Array mean, var;
  for (auto m : elites_) {
    predict(m, obs, act, mean, var);
    for (std::int64_t i = 0; i < acc.size(); ++i) acc[i] += mean[i];
  }
  const double inv = 1.0 / static_cast<double>(elites_.size());
  for (std::int64_t i = 0; i < acc.size(); ++i) acc[i] *= inv;
  return acc;
}

double Ensemble::percent_model_error(const ReplayBuffer& real,
                                     std::int64_t max_rows,
                                     std::int64_t* excluded) const {
  const std::int64_t n = std::min(real.size(), max_rows);
  if (n == 0)
    throw SamplingError("Ensemble: percent model error on an empty batch");
  const std::int64_t start = real.size() - n;
  const std::int64_t t_dim = cfg_.target_dim();
  Array obs = Array::zeros({n, cfg_.obs_dim});
  Array act = Array::zeros({n, cfg_.act_dim});
  Array y = Array::zeros({n, t_dim});
  for (std::int64_t k = 0; k < n; ++k) {
    Array o = real.obs_at(start + k);
    Array a = real.act_at(start + k);
    Array no = real.next_obs_at(start + k);
    for (std::int64_t j = 0; j < cfg_.obs_dim; ++j) {
      obs(k, j) = o[j];
      y(k, j) = no[j] - o[j];
    }
    for (std::int64_t j = 0; j < cfg_.act_dim; ++j) act(k, j) = a[j];
    y(k, t_dim - 1) = real.reward_at(start + k);
  }
  Array yhat = elite_mean_prediction(obs, act);
  double total = 0.0;
  std::int64_t used = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    double ny = 0.0, nd = 0.0;
    for (std::int64_t j = 0; j < t_dim; ++j) {
      ny += y(k, j) * y(k, j);
      double d = yhat(k, j) - y(k, j);
      nd += d * d;
    }
    ny = std::sqrt(ny);
    if (ny < 1e-8) continue;
    total += std::sqrt(nd) / ny;
    ++used;
  }
  if (excluded) *excluded = n - used;
  if (used == 0)
    throw SamplingError(
        "Ensemble: percent model error degenerate, every target below 1e-8");
  return 100.0 * total / static_cast<double>(used);
}

RolloutStats Ensemble::generate_rollouts(const ReplayBuffer& real,
                                         ReplayBuffer& synthetic,
                                         std::int64_t count,
                                         std::int64_t horizon,
                                         const RolloutPolicy& policy,
                                         const TerminationPredicate& terminated,
                                         Rng& rng) {
  RolloutStats stats;
  if (count <= 0 || horizon <= 0) return stats;
  if (real.size() == 0)
    throw SamplingError("ReplayBuffer " + real.name() +
                        ": sample from empty buffer");
  const std::int64_t t_dim = cfg_.target_dim();
  Array obs = Array::zeros({count, cfg_.obs_dim});
  for (std::int64_t k = 0; k < count; ++k) {
    Array o = real.obs_at(rng.below(real.size()));
    for (std::int64_t j = 0; j < cfg_.obs_dim; ++j) obs(k, j) = o[j];
  }
  std::vector<std::int64_t> active(static_cast<std::size_t>(count));
  std::iota(active.begin(), active.end(), 0);

  for (std::int64_t depth = 0; depth < horizon && !active.empty(); ++depth) {
    const auto na = static_cast<std::int64_t>(active.size());
    Array cur = Array::zeros({na, cfg_.obs_dim});
    for (std::int64_t r = 0; r < na; ++r)
      for (std::int64_t j = 0; j < cfg_.obs_dim; ++j)
        cur(r, j) = obs(active[static_cast<std::size_t>(r)], j);
    Array act = policy(cur, rng);
    if (act.rows() != na || act.cols() != cfg_.act_dim)
      throw DimensionError("Ensemble: policy returned wrong action shape");

    // One elite choice per chain, then member-batched forward passes.
    std::vector<std::int64_t> member(static_cast<std::size_t>(na));
    for (auto& m : member)
      m = elites_[static_cast<std::size_t>(
          rng.below(static_cast<std::int64_t>(elites_.size())))];
    Array next = Array::zeros({na, cfg_.obs_dim});
    Array rew = Array::zeros({na, 1});
    std::vector<char> finite_row(static_cast<std::size_t>(na), 1);
    for (auto m : elites_) {
      std::vector<std::int64_t> rows;
      for (std::int64_t r = 0; r < na; ++r)
        if (member[static_cast<std::size_t>(r)] == m) rows.push_back(r);
      if (rows.empty()) continue;
      const auto b = static_cast<std::int64_t>(rows.size());
      Array ob = Array::zeros({b, cfg_.obs_dim});
      Array ab = Array::zeros({b, cfg_.act_dim});
      for (std::int64_t r = 0; r < b; ++r) {
        std::int64_t k = rows[static_cast<std::size_t>(r)];
        for (std::int64_t j = 0; j < cfg_.obs_dim; ++j) ob(r, j) = cur(k, j);
        for (std::int64_t j = 0; j < cfg_.act_dim; ++j) ab(r, j) = act(k, j);
      }
      Array mean, var;
      predict(m, ob, ab, mean, var);
      for (std::int64_t r = 0; r < b; ++r) {
        std::int64_t k = rows[static_cast<std::size_t>(r)];
        bool ok = true;
        for (std::int64_t j = 0; j < t_dim; ++j) {
          double s = mean(r, j) + std::sqrt(var(r, j)) * rng.normal();
          if (!std::isfinite(s)) ok = false;
          if (j < cfg_.obs_dim)
            next(k, j) = cur(k, j) + s;
          else
            rew(k, 0) = s;
        }
        if (!ok) finite_row[static_cast<std::size_t>(k)] = 0;
      }
    }

    std::vector<std::int64_t> still_active;
    for (std::int64_t r = 0; r < na; ++r) {
      const std::int64_t k = active[static_cast<std::size_t>(r)];
      if (!finite_row[static_cast<std::size_t>(r)]) {
        ++stats.dropped;
        continue;
      }
      Array o = Array::row(row_vector(cur, r));
      Array a = Array::row(row_vector(act, r));
      Array no = Array::row(row_vector(next, r));
      bool term = terminated && terminated(no);
      if (term) ++stats.terminated;
      synthetic.push(o, a, rew(r, 0), no, term);
      ++stats.generated;
      if (!term) {
        for (std::int64_t j = 0; j < cfg_.obs_dim; ++j) obs(k, j) = no[j];
        still_active.push_back(k);
      }
    }
    active = std::move(still_active);
  }
  return stats;
}

PerfectModel::PerfectModel(const std::string& env_id) : env_(env_id) {}

StepResult PerfectModel::step(const Array& obs, const Array& act_normalized) {
  EnvState s = env_.task().state_from_observation(obs);
  env_.reset_to_state(s);
  const auto& bound = env_.task().spec().action_bound;
  Array u = act_normalized;
  for (std::int64_t j = 0; j < u.size(); ++j) u[j] *= bound[static_cast<std::size_t>(j)];
  return env_.step(u);
}

RolloutStats PerfectModel::generate_rollouts(const ReplayBuffer& real,
                                             ReplayBuffer& synthetic,
                                             std::int64_t count,
                                             std::int64_t horizon,
                                             const RolloutPolicy& policy,
                                             Rng& rng) {
  RolloutStats stats;
  if (count <= 0 || horizon <= 0) return stats;
  if (real.size() == 0)
    throw SamplingError("ReplayBuffer " + real.name() +
                        ": sample from empty buffer");
  const std::int64_t obs_dim = real.obs_dim();
  Array obs = Array::zeros({count, obs_dim});
  for (std::int64_t k = 0; k < count; ++k) {
    Array o = real.obs_at(rng.below(real.size()));
    for (std::int64_t j = 0; j < obs_dim; ++j) obs(k, j) = o[j];
  }
  std::vector<std::int64_t> active(static_cast<std::size_t>(count));
  std::iota(active.begin(), active.end(), 0);
  for (std::int64_t depth = 0; depth < horizon && !active.empty(); ++depth) {
    const auto na = static_cast<std::int64_t>(active.size());
    Array cur = Array::zeros({na, obs_dim});
    for (std::int64_t r = 0; r < na; ++r)
      for (std::int64_t j = 0; j < obs_dim; ++j)
        cur(r, j) = obs(active[static_cast<std::size_t>(r)], j);
    Array act = policy(cur, rng);
    std::vector<std::int64_t> still_active;
    for (std::int64_t r = 0; r < na; ++r) {
      const std::int64_t k = active[static_cast<std::size_t>(r)];
      Array o = Array::row(row_vector(cur, r));
      Array a = Array::row(row_vector(act, r));
      StepResult res = step(o, a);
      synthetic.push(o, a, res.reward, res.obs, res.terminated);
      if (res.terminated) ++stats.terminated;
      ++stats.generated;
      if (!res.terminated) {
        for (std::int64_t j = 0; j < obs_dim; ++j) obs(k, j) = res.obs[j];
        still_active.push_back(k);
      }
    }
    active = std::move(still_active);
  }
  return stats;
}

}  // namespace dynalab
