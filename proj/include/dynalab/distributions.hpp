#pragma once

#include <cmath>
#include <numbers>

#include "dynalab/tape.hpp"

namespace dynalab {

inline constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)

// Scalar twins of the tape's softplus and smooth_clamp, for prediction and
// action paths that skip the tape. Must stay in lockstep with tape.cpp.
inline double stable_softplus_value(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double smooth_clamp_value(double x, double lo, double hi) {
  double upper = hi - stable_softplus_value(hi - x);
  return lo + stable_softplus_value(upper - lo);
}

// Mean over the batch of the diagonal-Gaussian negative log likelihood,
// summed over output dimensions:
//   0.5 * [ (target - mean)^2 * exp(-logvar) + logvar + ln(2*pi) ]
inline Var gaussian_nll(Tape& t, Var mean, Var logvar, Var target) {
  require_same_shape(t.val(mean), t.val(logvar), "gaussian_nll");
  require_same_shape(t.val(mean), t.val(target), "gaussian_nll");
  Var diff = t.sub(target, mean);
  Var inv_var = t.exp(t.neg(logvar));
  Var quad = t.mul(t.square(diff), inv_var);
  Var per_elem = t.scale(t.shift(t.add(quad, logvar), kLog2Pi), 0.5);
  Var per_row = t.row_sum(per_elem);
  return t.mean_all(per_row);
}

// Smooth two-sided clamp into (lo, hi) built from softplus:
//   x -> hi - softplus(hi - x), then lo + softplus(x - lo).
// Differentiable everywhere, approaches identity well inside the bounds.
inline Var smooth_clamp(Tape& t, Var x, double lo, double hi) {
  Var upper = t.sub(t.constant(Array::full(t.val(x).shape, hi)),
                    t.softplus(t.shift(t.neg(x), hi)));
  return t.add(t.constant(Array::full(t.val(x).shape, lo)),
               t.softplus(t.shift(upper, -lo)));
}

struct SquashedSample {
  Var action;   // tanh(mean + exp(logstd) * noise), in (-1, 1)
  Var logprob;  // [B, 1], includes the tanh change-of-variables correction
};

// Reparameterized squashed-Gaussian sample. Noise is supplied by the caller
// and enters the tape as a constant, which yields the standard pathwise
// gradient estimator. The correction uses
//   log(1 - tanh(u)^2) = 2 * (ln 2 - u - softplus(-2u))
// which stays finite for large |u|.
inline SquashedSample squashed_gaussian_sample(Tape& t, Var mean, Var logstd,
                                               const Array& noise) {
  require_same_shape(t.val(mean), noise, "squashed_gaussian_sample");
  Var eps = t.constant(noise);
  Var u = t.add(mean, t.mul(t.exp(logstd), eps));
  Var action = t.tanh(u);

  // log N(u; mean, std) with u = mean + std*eps reduces to
  // -logstd - 0.5*ln(2*pi) - 0.5*eps^2 elementwise.
  Var gauss = t.sub(t.scale(t.square(eps), -0.5),
                    t.shift(logstd, 0.5 * kLog2Pi));
  // -log(1 - tanh(u)^2), elementwise.
  Var neg_log_jacobian =
      t.scale(t.shift(t.add(u, t.softplus(t.scale(u, -2.0))),
                      -std::numbers::ln2),
              2.0);
  Var logprob = t.row_sum(t.add(gauss, neg_log_jacobian));
  return {action, logprob};
}

}  // namespace dynalab
