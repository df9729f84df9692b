#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynalab/array.hpp"
#include "dynalab/params.hpp"

namespace dynalab {

class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Handle into a Tape's node list.
struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over 2-D arrays. One tape records one computation; the
// backward pass visits each recorded node exactly once, in reverse order of
// creation. Gradients only flow into nodes marked as needing them, so
// e.g. frozen critic parameters in an actor step cost no backward matmuls.
class Tape {
 public:
  enum class Op : std::uint8_t {
    leaf, matmul, add, sub, mul, min, add_row, scale, shift, relu, tanh_op,
    swish, softplus, exp_op, log_op, square, concat_cols, slice_cols,
    layernorm, sum_all, mean_all, row_sum
  };

  // Leaves.
  Var constant(Array v) { return leaf(std::move(v), false); }
  Var leaf(Array v, bool needs_grad);
  // Tracked leaf: its gradient is reported by param_grads() under `name`.
  Var param(const std::string& name, const Array& v);

  // Ops.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var min(Var a, Var b);
  Var add_row(Var x, Var row);  // [B,N] + [1,N] broadcast over rows
  Var scale(Var x, double k);
  Var shift(Var x, double k);
  Var neg(Var x) { return scale(x, -1.0); }
  Var relu(Var x);
  Var tanh(Var x);
  Var swish(Var x);
  Var softplus(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var square(Var x);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var x, std::int64_t start, std::int64_t len);
  Var layernorm(Var x, Var gain, Var bias);  // per-row mean 0 / var 1, then scale/shift
  Var sum_all(Var x);   // -> [1,1]
  Var mean_all(Var x);  // -> [1,1]
  Var row_sum(Var x);   // [B,N] -> [B,1]

  const Array& val(Var v) const { return nodes_[v.i].val; }
  const Array& grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.i].needs_grad; }

  // Backward from a scalar loss. Gradients accumulate; may be called once
  // per tape.
  void backward(Var loss);

  // Gradients of all param() leaves, exactly zero where the loss never
  // touched the parameter.
  ParamSet param_grads() const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    double k = 0.0;
    std::int64_t i0 = 0, i1 = 0;
    Array val;
    Array grad;
    Array aux;  // op-specific cache (layernorm keeps normalized rows + inv-std)
    bool needs_grad = false;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }
  Node& at(Var v) { return nodes_[v.i]; }
  Var unary(Op op, Var x, double k = 0.0);
  Var binary(Op op, Var a, Var b);
  void ensure_grad(int i);
  void backward_node(int i);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> params_;
  bool ran_backward_ = false;
};

}  // namespace dynalab
