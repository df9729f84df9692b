#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dynalab/array.hpp"
#include "dynalab/params.hpp"
#include "dynalab/rng.hpp"

namespace dynalab {

class SimulationBlowup : public std::runtime_error {
 public:
  explicit SimulationBlowup(const std::string& msg) : std::runtime_error(msg) {}
};

class StateBoundsError : public std::runtime_error {
 public:
  explicit StateBoundsError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class RewardStyle { unnormalized, normalized_unit };
enum class TerminationMode { early_termination, fixed_horizon };
enum class Integrator { rk4, semi_implicit_euler };
enum class VariantStyle { gym, dmc };

// Benchmark-convention axis of a task: how it rewards, when it ends, and
// how it integrates. The two factory presets mirror the Gym-vs-DMC split:
//   gym: unnormalized shaped rewards, early termination, RK4 at dt=0.008
//   dmc: rewards in [0,1], fixed 1000-step horizon, semi-implicit Euler at dt=0.01
struct EnvVariant {
  VariantStyle style = VariantStyle::dmc;
  RewardStyle reward_style = RewardStyle::normalized_unit;
  TerminationMode termination = TerminationMode::fixed_horizon;
  std::int64_t horizon = 1000;
  Integrator integrator = Integrator::semi_implicit_euler;
  double dt = 0.01;
};

EnvVariant make_variant(VariantStyle style);
EnvVariant make_variant(const std::string& style);  // "gym" | "dmc"

struct EnvSpec {
  std::string task;
  std::int64_t obs_dim = 0;
  std::int64_t act_dim = 0;
  std::vector<double> action_bound;  // symmetric, per dimension
};

// Full physical state: generalized positions and velocities plus the step
// counter. The observation is a pure function of this.
struct EnvState {
  std::vector<double> q, v;
  std::int64_t step_count = 0;

  bool finite() const;
};

// An analytic task: dynamics, rewards, termination predicate, observation
// map and its inverse, documented state bounds. Stateless and shareable.
class Task {
 public:
  virtual ~Task() = default;
  const EnvSpec& spec() const { return spec_; }

  // Accelerations dv/dt as a function of (q, v, control). Control is in
  // environment units (already clipped).
  virtual void accel(const std::vector<double>& q, const std::vector<double>& v,
                     const std::vector<double>& u,
                     std::vector<double>& out) const = 0;
  virtual double reward(const EnvState& prev, const std::vector<double>& u,
                        const EnvState& next, RewardStyle style) const = 0;
  virtual bool early_terminated(const EnvState& s) const = 0;
  virtual EnvState initial_state(VariantStyle style, Rng& rng) const = 0;
  virtual Array observe(const EnvState& s) const = 0;
  virtual EnvState state_from_observation(const Array& obs) const = 0;
  virtual bool in_bounds(const EnvState& s) const = 0;
  // Normalize redundant coordinates (angle wrap); exact symmetry of the
  // dynamics and rewards.
  virtual void canonicalize(EnvState& s) const {}

 protected:
  EnvSpec spec_;
};

// Tasks: "pendulum" (swing-up), "cartpole" (Gym-style balance / DMC-style
// swing-up), "pointmass" (2-D reach).
std::shared_ptr<const Task> make_task(const std::string& id);

// Parse "task/style", e.g. "pendulum/dmc".
std::pair<std::shared_ptr<const Task>, EnvVariant> make_env(const std::string& id);

// One integrator step of the task dynamics; throws SimulationBlowup if the
// state leaves the finite range. Does not touch step_count.
void integrate(const Task& task, EnvState& state, const std::vector<double>& u,
               double dt, Integrator method);

struct StepResult {
  EnvState state;
  Array obs;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

// Smooth [0,1] shaping: 1 inside [lo, hi], Gaussian falloff reaching
// `value_at_margin` at distance `margin` outside the interval.
double tolerance(double x, double lo, double hi, double margin,
                 double value_at_margin = 0.1);

// A task bound to a variant with a current state. Pure state machine: any
// number of instances may run concurrently.
class Environment {
 public:
  Environment(std::shared_ptr<const Task> task, EnvVariant variant);
  explicit Environment(const std::string& id);  // "task/style"

  Array reset(std::uint64_t seed);
  // Adopt an arbitrary in-bounds state, as if organically reached.
  Array reset_to_state(const EnvState& state);
  // Action in environment units; out-of-bounds coordinates are clipped and
  // counted.
  StepResult step(const Array& action);

  const EnvState& state() const { return state_; }
  const Task& task() const { return *task_; }
  const EnvVariant& variant() const { return variant_; }
  std::int64_t clip_events() const { return clip_events_; }

 private:
  std::shared_ptr<const Task> task_;
  EnvVariant variant_;
  EnvState state_;
  std::int64_t clip_events_ = 0;
};

// EnvState round-trip through the flat binary ParamSet format, for
// trajectory dumps.
ParamSet env_state_to_params(const EnvState& s);
EnvState env_state_from_params(const ParamSet& p);

}  // namespace dynalab
