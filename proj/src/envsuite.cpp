#include "dynalab/envsuite.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace dynalab {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double theta) {
  // Into (-pi, pi].
  double w = std::fmod(theta + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

std::string describe(const EnvState& s) {
  std::ostringstream os;
  os << "q=[";
  for (std::size_t i = 0; i < s.q.size(); ++i) os << (i ? "," : "") << s.q[i];
  os << "] v=[";
  for (std::size_t i = 0; i < s.v.size(); ++i) os << (i ? "," : "") << s.v[i];
  os << "] step=" << s.step_count;
  return os.str();
}

}  // namespace

bool EnvState::finite() const {
  auto ok = [](const std::vector<double>& xs) {
    return std::all_of(xs.begin(), xs.end(),
                       [](double x) { return std::isfinite(x); });
  };
  return ok(q) && ok(v);
}

double tolerance(double x, double lo, double hi, double margin,
                 double value_at_margin) {
  if (x >= lo && x <= hi) return 1.0;
  const double d = (x < lo ? lo - x : x - hi) / margin;
  const double scale = std::sqrt(-2.0 * std::log(value_at_margin));
  return std::exp(-0.5 * d * scale * d * scale);
}

EnvVariant make_variant(VariantStyle style) {
  EnvVariant v;
  v.style = style;
  if (style == VariantStyle::gym) {
    v.reward_style = RewardStyle::unnormalized;
    v.termination = TerminationMode::early_termination;
    v.integrator = Integrator::rk4;
    v.dt = 0.008;
  } else {
    v.reward_style = RewardStyle::normalized_unit;
    v.termination = TerminationMode::fixed_horizon;
    v.integrator = Integrator::semi_implicit_euler;
    v.dt = 0.01;
  }
  v.horizon = 1000;
  return v;
}

EnvVariant make_variant(const std::string& style) {
  if (style == "gym") return make_variant(VariantStyle::gym);
  if (style == "dmc") return make_variant(VariantStyle::dmc);
  throw std::invalid_argument("make_variant: unknown style '" + style + "'");
}

// ---------------------------------------------------------------------------
// Pendulum swing-up. theta = 0 is upright; dynamics follow the classic
// torque-limited pendulum with g = 10, m = l = 1, torque bound 2, so the
// motor cannot lift the pole directly and must swing.
// ---------------------------------------------------------------------------
class PendulumTask final : public Task {
 public:
  PendulumTask() {
    spec_.task = "pendulum";
    spec_.obs_dim = 3;
    spec_.act_dim = 1;
    spec_.action_bound = {2.0};
  }

  void accel(const std::vector<double>& q, const std::vector<double>& v,
             const std::vector<double>& u, std::vector<double>& out) const override {
    out.resize(1);
    out[0] = 1.5 * kG * std::sin(q[0]) + 3.0 * u[0] - kDamping * v[0];
  }

  double reward(const EnvState& prev, const std::vector<double>& u,
                const EnvState& next, RewardStyle style) const override {
    if (style == RewardStyle::unnormalized) {
      const double th = wrap_angle(prev.q[0]);
      return -(th * th + 0.1 * prev.v[0] * prev.v[0] + 0.001 * u[0] * u[0]);
    }
    // Upright band times a slow-velocity band. The velocity factor matters
    // because the rod is undamped: random torque pumps it into circulation,
    // and a circulating pole sweeps slowly past the top. Requiring low
    // angular velocity keeps those free passes near zero while a balanced
    // pole (theta_dot ~ 0) still scores 1 per step.
    return tolerance(std::cos(next.q[0]), 0.95, 1.0, 0.3) *
           tolerance(next.v[0], -1.0, 1.0, 1.0);
  }

  bool early_terminated(const EnvState& s) const override {
    return std::abs(s.v[0]) > 8.0;
  }

  EnvState initial_state(VariantStyle, Rng& rng) const override {
    EnvState s;
    s.q = {kPi - 2.0 * kPi * rng.uniform()};  // uniform in (-pi, pi]
    s.v = {rng.uniform(-1.0, 1.0)};
    return s;
  }

  Array observe(const EnvState& s) const override {
    return Array::row({std::cos(s.q[0]), std::sin(s.q[0]), s.v[0]});
  }

  EnvState state_from_observation(const Array& obs) const override {
    EnvState s;
    s.q = {std::atan2(obs[1], obs[0])};
    s.v = {obs[2]};
    return s;
  }

  bool in_bounds(const EnvState& s) const override {
    // Velocity bound is deliberately loose: the fixed-horizon variant has no
    // termination, so it must cover anything a 1000-step episode can reach.
    return std::abs(wrap_angle(s.q[0])) <= kPi && std::abs(s.v[0]) <= 300.0;
  }

  void canonicalize(EnvState& s) const override { s.q[0] = wrap_angle(s.q[0]); }

 private:
  static constexpr double kG = 10.0;
  static constexpr double kDamping = 0.0;
};

// ---------------------------------------------------------------------------
// Cart-pole. theta = 0 upright. The Gym-style variant is the classic
// balance task (near-upright starts, tip-over termination); the DMC-style
// variant is swing-up (hanging starts, no termination).
// ---------------------------------------------------------------------------
class CartpoleTask final : public Task {
 public:
  CartpoleTask() {
    spec_.task = "cartpole";
    spec_.obs_dim = 5;
    spec_.act_dim = 1;
    spec_.action_bound = {10.0};
  }

  void accel(const std::vector<double>& q, const std::vector<double>& v,
             const std::vector<double>& u, std::vector<double>& out) const override {
    const double sin_t = std::sin(q[1]), cos_t = std::cos(q[1]);
    const double total = kMassCart + kMassPole;
    const double temp = (u[0] + kMassPole * kLen * v[1] * v[1] * sin_t) / total;
    const double theta_acc =
        (kG * sin_t - cos_t * temp) /
        (kLen * (4.0 / 3.0 - kMassPole * cos_t * cos_t / total));
    const double x_acc = temp - kMassPole * kLen * theta_acc * cos_t / total;
    out.resize(2);
    out[0] = x_acc;
    out[1] = theta_acc;
  }

  double reward(const EnvState& prev, const std::vector<double>& u,
                const EnvState& next, RewardStyle style) const override {
    if (style == RewardStyle::unnormalized) {
      return 1.0;  // alive bonus per step
    }
    const double upright = 0.5 * (1.0 + std::cos(next.q[1]));
    return upright * tolerance(next.q[0], -0.25, 0.25, 2.0);
  }

  bool early_terminated(const EnvState& s) const override {
    return std::abs(s.q[0]) > 2.4 || std::abs(wrap_angle(s.q[1])) > 0.2095;
  }

  EnvState initial_state(VariantStyle style, Rng& rng) const override {
    EnvState s;
    if (style == VariantStyle::gym) {
      s.q = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
      s.v = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    } else {
      s.q = {rng.uniform(-0.1, 0.1), wrap_angle(kPi + rng.uniform(-0.1, 0.1))};
      s.v = {0.0, 0.0};
    }
    return s;
  }

  Array observe(const EnvState& s) const override {
    return Array::row(
        {s.q[0], s.v[0], std::cos(s.q[1]), std::sin(s.q[1]), s.v[1]});
  }

  EnvState state_from_observation(const Array& obs) const override {
    EnvState s;
    s.q = {obs[0], std::atan2(obs[3], obs[2])};
    s.v = {obs[1], obs[4]};
    return s;
  }

  bool in_bounds(const EnvState& s) const override {
    // The swing-up variant has no walls and no termination, so the cart can
    // drift a long way over a 1000-step episode; the bounds only reject
    // states no episode could reach.
    return std::abs(s.q[0]) <= 3000.0 && std::abs(wrap_angle(s.q[1])) <= kPi &&
           std::abs(s.v[0]) <= 300.0 && std::abs(s.v[1]) <= 300.0;
  }

  void canonicalize(EnvState& s) const override { s.q[1] = wrap_angle(s.q[1]); }

 private:
  static constexpr double kG = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kLen = 0.5;  // pole half-length
};

// ---------------------------------------------------------------------------
// Point-mass reach: damped 2-D double integrator, goal at the origin.
// ---------------------------------------------------------------------------
class PointMassTask final : public Task {
 public:
  PointMassTask() {
    spec_.task = "pointmass";
    spec_.obs_dim = 4;
    spec_.act_dim = 2;
    spec_.action_bound = {1.0, 1.0};
  }

  void accel(const std::vector<double>& q, const std::vector<double>& v,
             const std::vector<double>& u, std::vector<double>& out) const override {
    out.resize(2);
    out[0] = u[0] - kDamping * v[0];
    out[1] = u[1] - kDamping * v[1];
  }

  double reward(const EnvState& prev, const std::vector<double>& u,
                const EnvState& next, RewardStyle style) const override {
    const double d = std::hypot(next.q[0], next.q[1]);
    if (style == RewardStyle::unnormalized) {
      return -d - 0.01 * (u[0] * u[0] + u[1] * u[1]);
    }
    return tolerance(d, 0.0, 0.05, 0.2);
  }

  bool early_terminated(const EnvState& s) const override {
    return std::abs(s.q[0]) > 1.5 || std::abs(s.q[1]) > 1.5;
  }

  EnvState initial_state(VariantStyle, Rng& rng) const override {
    EnvState s;
    s.q = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
    s.v = {0.0, 0.0};
    return s;
  }

  Array observe(const EnvState& s) const override {
    return Array::row({s.q[0], s.q[1], s.v[0], s.v[1]});
  }

  EnvState state_from_observation(const Array& obs) const override {
    EnvState s;
    s.q = {obs[0], obs[1]};
    s.v = {obs[2], obs[3]};
    return s;
  }

  bool in_bounds(const EnvState& s) const override {
    // Damping caps the terminal velocity, but a full-length episode can
    // still wander well outside the unit workspace.
    return std::abs(s.q[0]) <= 100.0 && std::abs(s.q[1]) <= 100.0 &&
           std::abs(s.v[0]) <= 50.0 && std::abs(s.v[1]) <= 50.0;
  }

 private:
  static constexpr double kDamping = 0.5;
};

std::shared_ptr<const Task> make_task(const std::string& id) {
  if (id == "pendulum") return std::make_shared<PendulumTask>();
  if (id == "cartpole") return std::make_shared<CartpoleTask>();
  if (id == "pointmass") return std::make_shared<PointMassTask>();
  throw std::invalid_argument("make_task: unknown task '" + id + "'");
}

std::pair<std::shared_ptr<const Task>, EnvVariant> make_env(const std::string& id) {
  auto slash = id.find('/');
  if (slash == std::string::npos)
    throw std::invalid_argument("make_env: expected 'task/style', got '" + id + "'");
  return {make_task(id.substr(0, slash)), make_variant(id.substr(slash + 1))};
}

void integrate(const Task& task, EnvState& state, const std::vector<double>& u,
               double dt, Integrator method) {
  const std::size_t nq = state.q.size();
  std::vector<double> a(nq);
  if (method == Integrator::semi_implicit_euler) {
    task.accel(state.q, state.v, u, a);
    for (std::size_t i = 0; i < nq; ++i) state.v[i] += dt * a[i];
    for (std::size_t i = 0; i < nq; ++i) state.q[i] += dt * state.v[i];
  } else {
    // Classical RK4 on the full state y = (q, v).
    auto deriv = [&](const std::vector<double>& q, const std::vector<double>& v,
                     std::vector<double>& dq, std::vector<double>& dv) {
      dq = v;
      task.accel(q, v, u, dv);
    };
    std::vector<double> k1q, k1v, k2q, k2v, k3q, k3v, k4q, k4v, tq(nq), tv(nq);
    deriv(state.q, state.v, k1q, k1v);
    for (std::size_t i = 0; i < nq; ++i) {
      tq[i] = state.q[i] + 0.5 * dt * k1q[i];
      tv[i] = state.v[i] + 0.5 * dt * k1v[i];
    }
    deriv(tq, tv, k2q, k2v);
    for (std::size_t i = 0; i < nq; ++i) {
      tq[i] = state.q[i] + 0.5 * dt * k2q[i];
      tv[i] = state.v[i] + 0.5 * dt * k2v[i];
    }
    deriv(tq, tv, k3q, k3v);
    for (std::size_t i = 0; i < nq; ++i) {
      tq[i] = state.q[i] + dt * k3q[i];
      tv[i] = state.v[i] + dt * k3v[i];
    }
    deriv(tq, tv, k4q, k4v);
    for (std::size_t i = 0; i < nq; ++i) {
      state.q[i] += dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
      state.v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
    }
  }
  task.canonicalize(state);
  if (!state.finite())
    throw SimulationBlowup("integrate: non-finite state after step: " +
                           describe(state));
}

Environment::Environment(std::shared_ptr<const Task> task, EnvVariant variant)
    : task_(std::move(task)), variant_(variant) {}

Environment::Environment(const std::string& id) {
  auto [task, variant] = make_env(id);
  task_ = std::move(task);
  variant_ = variant;
}

Array Environment::reset(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "env.reset"));
  state_ = task_->initial_state(variant_.style, rng);
  state_.step_count = 0;
  return task_->observe(state_);
}

Array Environment::reset_to_state(const EnvState& state) {
  if (!state.finite())
    throw StateBoundsError("reset_to_state: non-finite state: " + describe(state));
  if (!task_->in_bounds(state))
    throw StateBoundsError("reset_to_state: state outside documented bounds: " +
                           describe(state));
  if (state.step_count < 0 || state.step_count > variant_.horizon)
    throw StateBoundsError("reset_to_state: step counter outside horizon");
  state_ = state;
  task_->canonicalize(state_);
  return task_->observe(state_);
}

StepResult Environment::step(const Array& action) {
  const EnvSpec& spec = task_->spec();
  if (action.size() != spec.act_dim)
    throw DimensionError("Environment::step: action has " +
                         std::to_string(action.size()) + " dims, expected " +
                         std::to_string(spec.act_dim));
  std::vector<double> u(static_cast<std::size_t>(spec.act_dim));
  bool clipped = false;
  for (std::int64_t i = 0; i < spec.act_dim; ++i) {
    const double bound = spec.action_bound[static_cast<std::size_t>(i)];
    double a = action[i];
    if (a > bound || a < -bound) {
      clipped = true;
      a = std::clamp(a, -bound, bound);
    }
    u[static_cast<std::size_t>(i)] = a;
  }
  if (clipped) ++clip_events_;

  const EnvState prev = state_;
  integrate(*task_, state_, u, variant_.dt, variant_.integrator);
  state_.step_count = prev.step_count + 1;

  StepResult r;
  r.reward = task_->reward(prev, u, state_, variant_.reward_style);
  r.terminated = variant_.termination == TerminationMode::early_termination &&
                 task_->early_terminated(state_);
  r.truncated = state_.step_count >= variant_.horizon;
  r.state = state_;
  r.obs = task_->observe(state_);
  return r;
}

ParamSet env_state_to_params(const EnvState& s) {
  ParamSet p;
  p.insert("q", Array::row(s.q));
  p.insert("v", Array::row(s.v));
  p.insert("step_count", Array::scalar(static_cast<double>(s.step_count)));
  return p;
}

EnvState env_state_from_params(const ParamSet& p) {
  EnvState s;
  s.q = p.at("q").data;
  s.v = p.at("v").data;
  s.step_count = static_cast<std::int64_t>(p.at("step_count")[0]);
  return s;
}

}  // namespace dynalab
