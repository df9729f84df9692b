#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynalab/params.hpp"
#include "dynalab/rng.hpp"
#include "dynalab/tape.hpp"

namespace dynalab {

enum class Activation { relu, swish, tanh };

// Static description of an MLP: widths, activation, optional layer
// normalization on each hidden pre-activation. Parameter names are
// "<prefix>l<i>.w" / ".b" (+ ".ln.g" / ".ln.b" when layernorm is on).
struct MlpSpec {
  std::int64_t in = 0;
  std::vector<std::int64_t> hidden;
  std::int64_t out = 0;
  Activation activation = Activation::relu;
  bool layernorm = false;
  std::string prefix;

  std::vector<std::int64_t> widths() const {
    std::vector<std::int64_t> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
  }
  std::string pname(std::size_t layer, const char* part) const {
    return prefix + "l" + std::to_string(layer) + "." + part;
  }
};

// Fan-in-scaled uniform init: w, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in));
// layernorm gain 1, bias 0.
ParamSet init_mlp(const MlpSpec& spec, Rng& rng);

// Records the forward pass on the tape. `params` may be registered as
// trainable (via Tape::param upstream) or passed here as frozen constants.
Var forward_mlp(Tape& tape, const MlpSpec& spec,
                const std::vector<Var>& param_vars, Var input);

// Convenience: registers every parameter of `params` on the tape (trainable
// iff `trainable`), in the order forward_mlp expects.
std::vector<Var> stage_mlp(Tape& tape, const MlpSpec& spec,
                           const ParamSet& params, bool trainable);

// Forward pass without a caller-managed tape; returns the output array.
Array eval_mlp(const MlpSpec& spec, const ParamSet& params, const Array& input);

}  // namespace dynalab
