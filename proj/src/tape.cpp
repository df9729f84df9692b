#include "dynalab/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <new>
#include <utility>

// Bit-exact reproducibility requires that vectorized kernels (Eigen's and
// the compiler's) make the same peeling decisions for every buffer, and
// those decisions depend on pointer alignment. Pinning every heap
// allocation to one packet-friendly alignment removes the last source of
// run-to-run and object-to-object variation.
namespace {

constexpr std::size_t kHeapAlign = 64;

void* aligned_new(std::size_t n) {
  if (n == 0) n = 1;
  const std::size_t rounded = (n + kHeapAlign - 1) / kHeapAlign * kHeapAlign;
  void* p = std::aligned_alloc(kHeapAlign, rounded);
  if (!p) throw std::bad_alloc();
  return p;
}

}  // namespace

void* operator new(std::size_t n) { return aligned_new(n); }
void* operator new[](std::size_t n) { return aligned_new(n); }
void* operator new(std::size_t n, const std::nothrow_t&) noexcept {
  try { return aligned_new(n); } catch (...) { return nullptr; }
}
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept {
  try { return aligned_new(n); } catch (...) { return nullptr; }
}
void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { std::free(p); }

namespace dynalab {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap as_mat(const Array& a) { return CMap(a.data.data(), a.rows(), a.cols()); }
Map as_mat(Array& a) { return Map(a.data.data(), a.rows(), a.cols()); }

double stable_softplus(double x) {
  // log(1 + e^x) without overflow.
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

}  // namespace

Var Tape::leaf(Array v, bool needs_grad) {
  Node n;
  n.op = Op::leaf;
  n.val = std::move(v);
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

Var Tape::param(const std::string& name, const Array& v) {
  Var h = leaf(v, true);
  params_.emplace_back(name, h.i);
  return h;
}

Var Tape::unary(Op op, Var x, double k) {
  Node n;
  n.op = op;
  n.a = x.i;
  n.k = k;
  n.needs_grad = nodes_[x.i].needs_grad;
  const Array& in = nodes_[x.i].val;
  n.val = Array::zeros(in.shape);
  const std::int64_t m = in.size();
  const double* src = in.data.data();
  double* dst = n.val.data.data();
  switch (op) {
    case Op::scale:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = k * src[i];
      break;
    case Op::shift:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = src[i] + k;
      break;
    case Op::relu:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
      break;
    case Op::tanh_op:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = std::tanh(src[i]);
      break;
    case Op::swish:
      for (std::int64_t i = 0; i < m; ++i) {
        double s = 1.0 / (1.0 + std::exp(-src[i]));
        dst[i] = src[i] * s;
      }
      break;
    case Op::softplus:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = stable_softplus(src[i]);
      break;
    case Op::exp_op:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = std::exp(src[i]);
      break;
    case Op::log_op:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = std::log(src[i]);
      break;
    case Op::square:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = src[i] * src[i];
      break;
    default:
      throw ContractError("Tape: bad unary op");
  }
  return push(std::move(n));
}

Var Tape::scale(Var x, double k) { return unary(Op::scale, x, k); }
Var Tape::shift(Var x, double k) { return unary(Op::shift, x, k); }
Var Tape::relu(Var x) { return unary(Op::relu, x); }
Var Tape::tanh(Var x) { return unary(Op::tanh_op, x); }
Var Tape::swish(Var x) { return unary(Op::swish, x); }
Var Tape::softplus(Var x) { return unary(Op::softplus, x); }
Var Tape::exp(Var x) { return unary(Op::exp_op, x); }
Var Tape::log(Var x) { return unary(Op::log_op, x); }
Var Tape::square(Var x) { return unary(Op::square, x); }

Var Tape::binary(Op op, Var a, Var b) {
  const Array& va = nodes_[a.i].val;
  const Array& vb = nodes_[b.i].val;
  require_same_shape(va, vb, "Tape binary op");
  Node n;
  n.op = op;
  n.a = a.i;
  n.b = b.i;
  n.needs_grad = nodes_[a.i].needs_grad || nodes_[b.i].needs_grad;
  n.val = Array::zeros(va.shape);
  const std::int64_t m = va.size();
  const double* x = va.data.data();
  const double* y = vb.data.data();
  double* dst = n.val.data.data();
  switch (op) {
    case Op::add:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = x[i] + y[i];
      break;
    case Op::sub:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = x[i] - y[i];
      break;
    case Op::mul:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = x[i] * y[i];
      break;
    case Op::min:
      for (std::int64_t i = 0; i < m; ++i) dst[i] = x[i] <= y[i] ? x[i] : y[i];
      break;
    default:
      throw ContractError("Tape: bad binary op");
  }
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) { return binary(Op::add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::mul, a, b); }
Var Tape::min(Var a, Var b) { return binary(Op::min, a, b); }

Var Tape::matmul(Var a, Var b) {
  const Array& va = nodes_[a.i].val;
  const Array& vb = nodes_[b.i].val;
  if (va.cols() != vb.rows())
    throw DimensionError("matmul: inner dimensions disagree (" +
                         std::to_string(va.cols()) + " vs " +
                         std::to_string(vb.rows()) + ")");
  Node n;
  n.op = Op::matmul;
  n.a = a.i;
  n.b = b.i;
  n.needs_grad = nodes_[a.i].needs_grad || nodes_[b.i].needs_grad;
  n.val = Array::zeros({va.rows(), vb.cols()});
  as_mat(n.val).noalias() = as_mat(va) * as_mat(vb);
  return push(std::move(n));
}

Var Tape::add_row(Var x, Var row) {
  const Array& vx = nodes_[x.i].val;
  const Array& vr = nodes_[row.i].val;
  if (vr.rows() != 1 || vr.cols() != vx.cols())
    throw DimensionError("add_row: bias row must be [1, " +
                         std::to_string(vx.cols()) + "]");
  Node n;
  n.op = Op::add_row;
  n.a = x.i;
  n.b = row.i;
  n.needs_grad = nodes_[x.i].needs_grad || nodes_[row.i].needs_grad;
  n.val = Array::zeros(vx.shape);
  as_mat(n.val) = as_mat(vx).rowwise() + as_mat(vr).row(0);
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  const Array& va = nodes_[a.i].val;
  const Array& vb = nodes_[b.i].val;
  if (va.rows() != vb.rows())
    throw DimensionError("concat_cols: row counts disagree");
  Node n;
  n.op = Op::concat_cols;
  n.a = a.i;
  n.b = b.i;
  n.i0 = va.cols();
  n.needs_grad = nodes_[a.i].needs_grad || nodes_[b.i].needs_grad;
  n.val = Array::zeros({va.rows(), va.cols() + vb.cols()});
  as_mat(n.val).leftCols(va.cols()) = as_mat(va);
  as_mat(n.val).rightCols(vb.cols()) = as_mat(vb);
  return push(std::move(n));
}

Var Tape::slice_cols(Var x, std::int64_t start, std::int64_t len) {
  const Array& vx = nodes_[x.i].val;
  if (start < 0 || len < 0 || start + len > vx.cols())
    throw DimensionError("slice_cols: range out of bounds");
  Node n;
  n.op = Op::slice_cols;
  n.a = x.i;
  n.i0 = start;
  n.i1 = len;
  n.needs_grad = nodes_[x.i].needs_grad;
  n.val = Array::zeros({vx.rows(), len});
  as_mat(n.val) = as_mat(vx).middleCols(start, len);
  return push(std::move(n));
}

Var Tape::layernorm(Var x, Var gain, Var bias) {
  const Array& vx = nodes_[x.i].val;
  const Array& vg = nodes_[gain.i].val;
  const Array& vb = nodes_[bias.i].val;
  const std::int64_t B = vx.rows(), N = vx.cols();
  if (vg.cols() != N || vb.cols() != N || vg.rows() != 1 || vb.rows() != 1)
    throw DimensionError("layernorm: gain/bias must be [1, N]");
  constexpr double kEps = 1e-8;
  Node n;
  n.op = Op::layernorm;
  n.a = x.i;
  n.b = gain.i;
  n.c = bias.i;
  n.needs_grad = nodes_[x.i].needs_grad || nodes_[gain.i].needs_grad ||
                 nodes_[bias.i].needs_grad;
  n.val = Array::zeros(vx.shape);
  // aux holds [B, N+1]: normalized rows, then per-row inverse std.
  n.aux = Array::zeros({B, N + 1});
  for (std::int64_t r = 0; r < B; ++r) {
    double mean = 0.0;
    for (std::int64_t c = 0; c < N; ++c) mean += vx(r, c);
    mean /= static_cast<double>(N);
    double var = 0.0;
    for (std::int64_t c = 0; c < N; ++c) {
      double d = vx(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(N);
    double inv_std = 1.0 / std::sqrt(var + kEps);
    n.aux(r, N) = inv_std;
    for (std::int64_t c = 0; c < N; ++c) {
      double xhat = (vx(r, c) - mean) * inv_std;
      n.aux(r, c) = xhat;
      n.val(r, c) = xhat * vg(0, c) + vb(0, c);
    }
  }
  return push(std::move(n));
}

Var Tape::sum_all(Var x) {
  Node n;
  n.op = Op::sum_all;
  n.a = x.i;
  n.needs_grad = nodes_[x.i].needs_grad;
  double s = 0.0;
  for (double v : nodes_[x.i].val.data) s += v;
  n.val = Array::scalar(s);
  return push(std::move(n));
}

Var Tape::mean_all(Var x) {
  Node n;
  n.op = Op::mean_all;
  n.a = x.i;
  n.needs_grad = nodes_[x.i].needs_grad;
  double s = 0.0;
  for (double v : nodes_[x.i].val.data) s += v;
  n.val = Array::scalar(s / static_cast<double>(nodes_[x.i].val.size()));
  return push(std::move(n));
}

Var Tape::row_sum(Var x) {
  const Array& vx = nodes_[x.i].val;
  Node n;
  n.op = Op::row_sum;
  n.a = x.i;
  n.needs_grad = nodes_[x.i].needs_grad;
  n.val = Array::zeros({vx.rows(), 1});
  for (std::int64_t r = 0; r < vx.rows(); ++r) {
    double s = 0.0;
    for (std::int64_t c = 0; c < vx.cols(); ++c) s += vx(r, c);
    n.val(r, 0) = s;
  }
  return push(std::move(n));
}

const Array& Tape::grad(Var v) const {
  const Node& n = nodes_[v.i];
  if (n.grad.data.empty())
    throw ContractError("Tape::grad: no gradient recorded for this node");
  return n.grad;
}

void Tape::ensure_grad(int i) {
  Node& n = nodes_[i];
  if (n.grad.data.empty()) n.grad = Array::zeros(n.val.shape);
}

void Tape::backward(Var loss) {
  if (ran_backward_) throw ContractError("Tape::backward: already run");
  ran_backward_ = true;
  Node& ln = nodes_[loss.i];
  if (ln.val.size() != 1)
    throw ContractError("Tape::backward: loss must be a scalar");
  ensure_grad(loss.i);
  ln.grad.data[0] = 1.0;
  for (int i = loss.i; i >= 0; --i) {
    if (!nodes_[i].needs_grad || nodes_[i].grad.data.empty()) continue;
    backward_node(i);
  }
  // Parameters never reached by the loss still report exact zeros.
  for (auto& [name, idx] : params_) ensure_grad(idx);
}

void Tape::backward_node(int i) {
  Node& n = nodes_[i];
  const double* g = n.grad.data.data();
  const std::int64_t m = n.val.size();

  auto in_grad = [&](int idx) -> double* {
    ensure_grad(idx);
    return nodes_[idx].grad.data.data();
  };
  auto wants = [&](int idx) { return idx >= 0 && nodes_[idx].needs_grad; };

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::scale: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      for (std::int64_t j = 0; j < m; ++j) da[j] += n.k * g[j];
      break;
    }
    case Op::shift: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      for (std::int64_t j = 0; j < m; ++j) da[j] += g[j];
      break;
    }
    case Op::relu: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const double* x = nodes_[n.a].val.data.data();
      for (std::int64_t j = 0; j < m; ++j)
        if (x[j] > 0.0) da[j] += g[j];
      break;
    }
    case Op::tanh_op: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const double* y = n.val.data.data();
      for (std::int64_t j = 0; j < m; ++j) da[j] += (1.0 - y[j] * y[j]) * g[j];
      break;
    }
    case Op::swish: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const double* x = nodes_[n.a].val.data.data();
      for (std::int64_t j = 0; j < m; ++j) {
        double s = 1.0 / (1.0 + std::exp(-x[j]));
        da[j] += s * (1.0 + x[j] * (1.0 - s)) * g[j];
      }
      break;
    }
    case Op::softplus: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const double* x = nodes_[n.a].val.data.data();
      for (std::int64_t j = 0; j < m; ++j)
        da[j] += g[j] / (1.0 + std::exp(-x[j]));
      break;
    }
    case Op::exp_op: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const double* y = n.val.data.data();
      for (std::int64_t j = 0; j < m; ++j) da[j] += y[j] * g[j];
      break;
    }
    case Op::log_op: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const double* x = nodes_[n.a].val.data.data();
      for (std::int64_t j = 0; j < m; ++j) da[j] += g[j] / x[j];
      break;
    }
    case Op::square: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const double* x = nodes_[n.a].val.data.data();
      for (std::int64_t j = 0; j < m; ++j) da[j] += 2.0 * x[j] * g[j];
      break;
    }
    case Op::add: {
      if (wants(n.a)) {
        double* da = in_grad(n.a);
        for (std::int64_t j = 0; j < m; ++j) da[j] += g[j];
      }
      if (wants(n.b)) {
        double* db = in_grad(n.b);
        for (std::int64_t j = 0; j < m; ++j) db[j] += g[j];
      }
      break;
    }
    case Op::sub: {
      if (wants(n.a)) {
        double* da = in_grad(n.a);
        for (std::int64_t j = 0; j < m; ++j) da[j] += g[j];
      }
      if (wants(n.b)) {
        double* db = in_grad(n.b);
        for (std::int64_t j = 0; j < m; ++j) db[j] -= g[j];
      }
      break;
    }
    case Op::mul: {
      const double* x = nodes_[n.a].val.data.data();
      const double* y = nodes_[n.b].val.data.data();
      if (wants(n.a)) {
        double* da = in_grad(n.a);
        for (std::int64_t j = 0; j < m; ++j) da[j] += y[j] * g[j];
      }
      if (wants(n.b)) {
        double* db = in_grad(n.b);
        for (std::int64_t j = 0; j < m; ++j) db[j] += x[j] * g[j];
      }
      break;
    }
    case Op::min: {
      // Ties route to the first operand.
      const double* x = nodes_[n.a].val.data.data();
      const double* y = nodes_[n.b].val.data.data();
      if (wants(n.a)) {
        double* da = in_grad(n.a);
        for (std::int64_t j = 0; j < m; ++j)
          if (x[j] <= y[j]) da[j] += g[j];
      }
      if (wants(n.b)) {
        double* db = in_grad(n.b);
        for (std::int64_t j = 0; j < m; ++j)
          if (x[j] > y[j]) db[j] += g[j];
      }
      break;
    }
    case Op::matmul: {
      CMap A = as_mat(std::as_const(nodes_[n.a].val));
      CMap B = as_mat(std::as_const(nodes_[n.b].val));
      CMap G = as_mat(std::as_const(n.grad));
      if (wants(n.a)) {
        ensure_grad(n.a);
        as_mat(nodes_[n.a].grad).noalias() += G * B.transpose();
      }
      if (wants(n.b)) {
        ensure_grad(n.b);
        as_mat(nodes_[n.b].grad).noalias() += A.transpose() * G;
      }
      break;
    }
    case Op::add_row: {
      CMap G = as_mat(std::as_const(n.grad));
      if (wants(n.a)) {
        ensure_grad(n.a);
        as_mat(nodes_[n.a].grad) += G;
      }
      if (wants(n.b)) {
        ensure_grad(n.b);
        // Explicit loop: Eigen's colwise().sum() associates additions
        // differently depending on buffer alignment, which breaks bit-exact
        // reproducibility across otherwise identical runs.
        Array& gb = nodes_[n.b].grad;
        for (std::int64_t r = 0; r < n.grad.rows(); ++r)
          for (std::int64_t c = 0; c < n.grad.cols(); ++c)
            gb[c] += n.grad(r, c);
      }
      break;
    }
    case Op::concat_cols: {
      CMap G = as_mat(std::as_const(n.grad));
      const std::int64_t na = n.i0;
      if (wants(n.a)) {
        ensure_grad(n.a);
        as_mat(nodes_[n.a].grad) += G.leftCols(na);
      }
      if (wants(n.b)) {
        ensure_grad(n.b);
        as_mat(nodes_[n.b].grad) += G.rightCols(G.cols() - na);
      }
      break;
    }
    case Op::slice_cols: {
      if (!wants(n.a)) break;
      ensure_grad(n.a);
      as_mat(nodes_[n.a].grad).middleCols(n.i0, n.i1) += as_mat(n.grad);
      break;
    }
    case Op::layernorm: {
      const std::int64_t B = n.val.rows(), N = n.val.cols();
      const Array& vg = nodes_[n.b].val;
      if (wants(n.b)) {
        double* dg = in_grad(n.b);
        for (std::int64_t r = 0; r < B; ++r)
          for (std::int64_t c = 0; c < N; ++c)
            dg[c] += n.grad(r, c) * n.aux(r, c);
      }
      if (wants(n.c)) {
        double* db = in_grad(n.c);
        for (std::int64_t r = 0; r < B; ++r)
          for (std::int64_t c = 0; c < N; ++c) db[c] += n.grad(r, c);
      }
      if (wants(n.a)) {
        ensure_grad(n.a);
        Array& dx = nodes_[n.a].grad;
        for (std::int64_t r = 0; r < B; ++r) {
          double inv_std = n.aux(r, N);
          double sum_gd = 0.0, sum_gdx = 0.0;
          for (std::int64_t c = 0; c < N; ++c) {
            double gd = n.grad(r, c) * vg(0, c);
            sum_gd += gd;
            sum_gdx += gd * n.aux(r, c);
          }
          double inv_n = 1.0 / static_cast<double>(N);
          for (std::int64_t c = 0; c < N; ++c) {
            double gd = n.grad(r, c) * vg(0, c);
            dx(r, c) += inv_std * (gd - inv_n * sum_gd -
                                   n.aux(r, c) * inv_n * sum_gdx);
          }
        }
      }
      break;
    }
    case Op::sum_all: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const std::int64_t ma = nodes_[n.a].val.size();
      for (std::int64_t j = 0; j < ma; ++j) da[j] += g[0];
      break;
    }
    case Op::mean_all: {
      if (!wants(n.a)) break;
      double* da = in_grad(n.a);
      const std::int64_t ma = nodes_[n.a].val.size();
      double s = g[0] / static_cast<double>(ma);
      for (std::int64_t j = 0; j < ma; ++j) da[j] += s;
      break;
    }
    case Op::row_sum: {
      if (!wants(n.a)) break;
      ensure_grad(n.a);
      Array& da = nodes_[n.a].grad;
      for (std::int64_t r = 0; r < da.rows(); ++r)
        for (std::int64_t c = 0; c < da.cols(); ++c) da(r, c) += n.grad(r, 0);
      break;
    }
  }
}

ParamSet Tape::param_grads() const {
  ParamSet out;
  for (const auto& [name, idx] : params_) {
    const Node& n = nodes_[idx];
    out.insert(name, n.grad.data.empty() ? Array::zeros(n.val.shape) : n.grad);
  }
  return out;
}

}  // namespace dynalab
