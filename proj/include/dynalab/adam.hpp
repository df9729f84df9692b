#pragma once

#include <cmath>
#include <cstdint>

#include "dynalab/params.hpp"

namespace dynalab {

// Adam with bias correction. Moments are allocated lazily on the first step
// so a state can be constructed before the parameter shapes are known.
struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1.5e-4;
  std::int64_t step = 0;
  ParamSet m, v;
};

inline void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads) {
  if (state.step == 0) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params.entries) {
    const Array& g = grads.at(name);
    if (!g.same_shape(p))
      throw DimensionError("adam_step: gradient shape mismatch for " + name);
    Array& m = state.m.at(name);
    Array& v = state.v.at(name);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace dynalab
