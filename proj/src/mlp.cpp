#include "dynalab/mlp.hpp"

#include <cmath>

namespace dynalab {

ParamSet init_mlp(const MlpSpec& spec, Rng& rng) {
  ParamSet p;
  auto w = spec.widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const std::int64_t fan_in = w[l], fan_out = w[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Array weight = Array::zeros({fan_in, fan_out});
    for (auto& v : weight.data) v = rng.uniform(-bound, bound);
    Array bias = Array::zeros({1, fan_out});
    for (auto& v : bias.data) v = rng.uniform(-bound, bound);
    p.insert(spec.pname(l, "w"), std::move(weight));
    p.insert(spec.pname(l, "b"), std::move(bias));
    const bool is_hidden = l + 2 < w.size();
    if (spec.layernorm && is_hidden) {
      p.insert(spec.pname(l, "ln.g"), Array::full({1, fan_out}, 1.0));
      p.insert(spec.pname(l, "ln.b"), Array::zeros({1, fan_out}));
    }
  }
  return p;
}

std::vector<Var> stage_mlp(Tape& tape, const MlpSpec& spec,
                           const ParamSet& params, bool trainable) {
  std::vector<Var> vars;
  auto w = spec.widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    for (const char* part : {"w", "b"}) {
      const auto name = spec.pname(l, part);
      vars.push_back(trainable ? tape.param(name, params.at(name))
                               : tape.constant(params.at(name)));
    }
    const bool is_hidden = l + 2 < w.size();
    if (spec.layernorm && is_hidden) {
      for (const char* part : {"ln.g", "ln.b"}) {
        const auto name = spec.pname(l, part);
        vars.push_back(trainable ? tape.param(name, params.at(name))
                                 : tape.constant(params.at(name)));
      }
    }
  }
  return vars;
}

Var forward_mlp(Tape& tape, const MlpSpec& spec,
                const std::vector<Var>& param_vars, Var input) {
  auto w = spec.widths();
  if (tape.val(input).cols() != spec.in)
    throw DimensionError("forward_mlp: input width " +
                         std::to_string(tape.val(input).cols()) +
                         " does not match layer 0 input width " +
                         std::to_string(spec.in));
  std::size_t vi = 0;
  Var x = input;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    Var weight = param_vars.at(vi++);
    Var bias = param_vars.at(vi++);
    Var z = tape.add_row(tape.matmul(x, weight), bias);
    const bool is_hidden = l + 2 < w.size();
    if (!is_hidden) return z;  // linear output layer
    if (spec.layernorm) {
      Var g = param_vars.at(vi++);
      Var b = param_vars.at(vi++);
      z = tape.layernorm(z, g, b);
    }
    switch (spec.activation) {
      case Activation::relu: x = tape.relu(z); break;
      case Activation::swish: x = tape.swish(z); break;
      case Activation::tanh: x = tape.tanh(z); break;
    }
  }
  return x;  // zero-layer degenerate case: identity
}

Array eval_mlp(const MlpSpec& spec, const ParamSet& params, const Array& input) {
  Tape tape;
  Var in = tape.constant(input);
  auto vars = stage_mlp(tape, spec, params, false);
  return tape.val(forward_mlp(tape, spec, vars, in));
}

}  // namespace dynalab
