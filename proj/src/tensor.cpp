#include "yoto/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>
#include <utility>

YOTO_BEGIN_NAMESPACE

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

void accumulate(Node& node, std::size_t i, real v) { node.grad[i] += v; }

void ensure_grad(Node& node) {
  if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), real(0));
}

}  // namespace

struct TensorAccess {
  static const NodePtr& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }

  // Creates the result node. Graph links are only recorded when grad mode is
  // on and at least one input requires grad.
  static std::pair<Tensor, Node*> make(const char* op, Shape shape, std::vector<real> value,
                                       std::initializer_list<const Tensor*> inputs) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    if (g_grad_enabled) {
      for (const Tensor* in : inputs) {
        if (in->node_->requires_grad) n->requires_grad = true;
      }
      if (n->requires_grad) {
        for (const Tensor* in : inputs) n->inputs.push_back(in->node_);
      }
    }
    Node* raw = n.get();
    return {Tensor(std::move(n)), raw};
  }

  static std::pair<Tensor, Node*> make_many(const char* op, Shape shape, std::vector<real> value,
                                            std::span<const Tensor> inputs) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    if (g_grad_enabled) {
      for (const Tensor& in : inputs) {
        if (in.node_->requires_grad) n->requires_grad = true;
      }
      if (n->requires_grad) {
        for (const Tensor& in : inputs) n->inputs.push_back(in.node_);
      }
    }
    Node* raw = n.get();
    return {Tensor(std::move(n)), raw};
  }
};

namespace {

// Input `i` of `self` if it wants gradient, else nullptr.
Node* grad_input(const Node& self, std::size_t i) {
  Node* in = self.inputs[i].get();
  if (!in->requires_grad) return nullptr;
  ensure_grad(*in);
  return in;
}

const Node& N(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return *TensorAccess::node(t);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
  check_shape(shape);
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " needs " + std::to_string(shape_size(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), real(0), requires_grad); }

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  check_shape(shape);
  const auto n = shape_size(shape);
  return from(std::move(shape), std::vector<real>(n, value), requires_grad);
}

Tensor Tensor::scalar(real value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return N(*this).shape; }
std::size_t Tensor::size() const { return N(*this).value.size(); }

std::size_t Tensor::dim(int axis) const { return shape()[normalize_axis(axis, rank(), "dim")]; }

std::span<const real> Tensor::data() const { return N(*this).value; }

real Tensor::item() const {
  if (size() != 1) throw ContractError("item() needs a single-element tensor, shape is " + shape_str(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return N(*this).requires_grad; }
bool Tensor::is_leaf() const { return N(*this).inputs.empty() && !N(*this).backward; }

std::span<real> Tensor::mutable_data() {
  if (!is_leaf()) throw ContractError("mutable_data() is only available on leaf tensors");
  return node_->value;
}

bool Tensor::has_grad() const { return !N(*this).grad.empty(); }

std::vector<real> Tensor::grad() const {
  const Node& n = N(*this);
  if (n.grad.empty()) return std::vector<real>(n.value.size(), real(0));
  return n.grad;
}

void Tensor::zero_grad() {
  if (defined()) node_->grad.clear();
}

Tensor Tensor::detach(bool requires_grad) const { return from(shape(), N(*this).value, requires_grad); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// GEMM kernels: row-major, accumulate into c.

namespace {

// c[M,N] += a[M,K] b[K,N]
void gemm_nn(const real* a, const real* b, real* c, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    real* ci = c + i * N;
    const real* ai = a + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const real aik = ai[k];
      const real* bk = b + k * N;
      for (std::size_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[M,K] += g[M,N] b[K,N]^T
void gemm_nt(const real* g, const real* b, real* c, std::size_t M, std::size_t N, std::size_t K) {
  for (std::size_t i = 0; i < M; ++i) {
    const real* gi = g + i * N;
    real* ci = c + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const real* bk = b + k * N;
      real acc = 0;
      for (std::size_t j = 0; j < N; ++j) acc += gi[j] * bk[j];
      ci[k] += acc;
    }
  }
}

// c[K,N] += a[M,K]^T g[M,N]
void gemm_tn(const real* a, const real* g, real* c, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    const real* ai = a + i * K;
    const real* gi = g + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const real aik = ai[k];
      real* ck = c + k * N;
      for (std::size_t j = 0; j < N; ++j) ck[j] += aik * gi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::size_t M = sa[sa.size() - 2], K = sa.back();
  const std::size_t Kb = sb[sb.size() - 2], Nc = sb.back();
  if (K != Kb) throw mismatch();
  const bool shared_b = sb.size() == 2;
  if (!shared_b && !std::equal(sa.begin(), sa.end() - 2, sb.begin(), sb.end() - 2)) throw mismatch();

  const std::size_t batch = shape_size(Shape(sa.begin(), sa.end() - 2));
  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(M);
  out_shape.push_back(Nc);

  std::vector<real> out(batch * M * Nc, real(0));
  const real* pa = a.data().data();
  const real* pb = b.data().data();
  if (shared_b) {
    gemm_nn(pa, pb, out.data(), batch * M, K, Nc);
  } else {
    for (std::size_t t = 0; t < batch; ++t) {
      gemm_nn(pa + t * M * K, pb + t * K * Nc, out.data() + t * M * Nc, M, K, Nc);
    }
  }

  auto [result, node] = TensorAccess::make("matmul", std::move(out_shape), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward = [batch, M, K, Nc, shared_b](const Node& self) {
      const real* g = self.grad.data();
      const Node& na = *self.inputs[0];
      const Node& nb = *self.inputs[1];
      if (Node* ga = grad_input(self, 0)) {
        if (shared_b) {
          gemm_nt(g, nb.value.data(), ga->grad.data(), batch * M, Nc, K);
        } else {
          for (std::size_t t = 0; t < batch; ++t) {
            gemm_nt(g + t * M * Nc, nb.value.data() + t * K * Nc, ga->grad.data() + t * M * K, M, Nc, K);
          }
        }
      }
      if (Node* gb = grad_input(self, 1)) {
        if (shared_b) {
          gemm_tn(na.value.data(), g, gb->grad.data(), batch * M, K, Nc);
        } else {
          for (std::size_t t = 0; t < batch; ++t) {
            gemm_tn(na.value.data() + t * M * K, g + t * M * Nc, gb->grad.data() + t * K * Nc, M, K, Nc);
          }
        }
      }
    };
  }
  return result;
}

Tensor transpose(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("transpose: needs rank >= 2, got " + shape_str(s));
  const std::size_t R = s[s.size() - 2], C = s.back();
  const std::size_t batch = x.size() / (R * C);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  std::vector<real> out(x.size());
  const real* in = x.data().data();
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) out[t * R * C + c * R + r] = in[t * R * C + r * C + c];
    }
  }
  auto [result, node] = TensorAccess::make("transpose", std::move(out_shape), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward = [batch, R, C](const Node& self) {
      if (Node* gx = grad_input(self, 0)) {
        for (std::size_t t = 0; t < batch; ++t) {
          for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t c = 0; c < C; ++c) gx->grad[t * R * C + r * C + c] += self.grad[t * R * C + c * R + r];
          }
        }
      }
    };
  }
  return result;
}

Tensor softmax_rows(const Tensor& x, real divisor) {
  if (!(divisor > 0)) throw ContractError("softmax_rows: divisor must be positive");
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("softmax_rows: needs rank >= 1");
  const std::size_t n = s.back();
  const std::size_t rows = x.size() / n;
  const real inv = real(1) / divisor;
  std::vector<real> out(x.size());
  const real* in = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const real* xr = in + r * n;
    real* yr = out.data() + r * n;
    real mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp((xr[j] - mx) * inv);
      total += yr[j];
    }
    const real norm = real(1) / total;
    for (std::size_t j = 0; j < n; ++j) yr[j] *= norm;
  }
  auto [result, node] = TensorAccess::make("softmax_rows", s, std::move(out), {&x});
  if (node->requires_grad) {
    node->backward = [rows, n, inv](const Node& self) {
      if (Node* gx = grad_input(self, 0)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const real* y = self.value.data() + r * n;
          const real* g = self.grad.data() + r * n;
          real dot = 0;
          for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
          for (std::size_t j = 0; j < n; ++j) gx->grad[r * n + j] += y[j] * (g[j] - dot) * inv;
        }
      }
    };
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  const Shape& sb = b.shape();
  if (sx.empty() || sw.size() != 2 || sb.size() != 1 || sx.back() != sw[0] || sb[0] != sw[1]) {
    throw DimensionError("linear: incompatible shapes x" + shape_str(sx) + " w" + shape_str(sw) + " b" +
                         shape_str(sb));
  }
  const std::size_t cin = sw[0], cout = sw[1];
  const std::size_t rows = x.size() / cin;
  std::vector<real> out(rows * cout);
  const real* pb = b.data().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy(pb, pb + cout, out.begin() + static_cast<std::ptrdiff_t>(r * cout));
  gemm_nn(x.data().data(), w.data().data(), out.data(), rows, cin, cout);
  Shape out_shape = sx;
  out_shape.back() = cout;
  auto [result, node] = TensorAccess::make("linear", std::move(out_shape), std::move(out), {&x, &w, &b});
  if (node->requires_grad) {
    node->backward = [rows, cin, cout](const Node& self) {
      const real* g = self.grad.data();
      if (Node* gx = grad_input(self, 0)) gemm_nt(g, self.inputs[1]->value.data(), gx->grad.data(), rows, cout, cin);
      if (Node* gw = grad_input(self, 1)) gemm_tn(self.inputs[0]->value.data(), g, gw->grad.data(), rows, cin, cout);
      if (Node* gb = grad_input(self, 2)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cout; ++j) gb->grad[j] += g[r * cout + j];
        }
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Unary elementwise.

namespace {

template <class Fwd, class Bwd>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Bwd bwd) {
  std::vector<real> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  auto [result, node] = TensorAccess::make(op, x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward = [bwd](const Node& self) {
      if (Node* gx = grad_input(self, 0)) {
        const auto& xin = self.inputs[0]->value;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          accumulate(*gx, i, self.grad[i] * bwd(xin[i], self.value[i]));
        }
      }
    };
  }
  return result;
}

constexpr real kGeluC = real(0.044715);
const real kGeluK = static_cast<real>(std::sqrt(2.0 / std::numbers::pi));

}  // namespace

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](real v) { return v > 0 ? v : real(0); }, [](real v, real) { return v > 0 ? real(1) : real(0); });
}

Tensor gelu(const Tensor& x) {
  return unary(
      "gelu", x,
      [](real v) { return real(0.5) * v * (real(1) + std::tanh(kGeluK * (v + kGeluC * v * v * v))); },
      [](real v, real) {
        const real t = std::tanh(kGeluK * (v + kGeluC * v * v * v));
        return real(0.5) * (real(1) + t) +
               real(0.5) * v * (real(1) - t * t) * kGeluK * (real(1) + real(3) * kGeluC * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](real v) {
        if (v >= 0) return real(1) / (real(1) + std::exp(-v));
        const real e = std::exp(v);
        return e / (real(1) + e);
      },
      [](real, real y) { return y * (real(1) - y); });
}

Tensor scale(const Tensor& x, real factor) {
  return unary(
      "scale", x, [factor](real v) { return v * factor; }, [factor](real, real) { return factor; });
}

Tensor add_scalar(const Tensor& x, real value) {
  return unary(
      "add_scalar", x, [value](real v) { return v + value; }, [](real, real) { return real(1); });
}

// ---------------------------------------------------------------------------
// Binary elementwise with broadcasting.

namespace {

enum class BinaryKind { add, sub, mul, div };

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` laid over `out`, zero where `s` broadcasts.
std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const std::size_t src = s.size() - 1 - k;
    const std::size_t dst = out.size() - 1 - k;
    strides[dst] = s[src] == 1 ? 0 : stride;
    stride *= s[src];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every output element in order.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f) {
  const std::size_t total = shape_size(out);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t d = out.size(); d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

const char* binary_name(BinaryKind k) {
  switch (k) {
    case BinaryKind::add:
      return "add";
    case BinaryKind::sub:
      return "sub";
    case BinaryKind::mul:
      return "mul";
    case BinaryKind::div:
      return "div";
  }
  return "?";
}

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b, bool strict) {
  const char* op = binary_name(kind);
  if (strict && a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), op);
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<real> out(shape_size(out_shape));
  const auto va = a.data();
  const auto vb = b.data();
  for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinaryKind::add:
        out[o] = va[ia] + vb[ib];
        break;
      case BinaryKind::sub:
        out[o] = va[ia] - vb[ib];
        break;
      case BinaryKind::mul:
        out[o] = va[ia] * vb[ib];
        break;
      case BinaryKind::div:
        out[o] = va[ia] / vb[ib];
        break;
    }
  });
  Shape shape_copy = out_shape;
  auto [result, node] = TensorAccess::make(op, std::move(shape_copy), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward = [kind, out_shape, sa, sb](const Node& self) {
      Node* ga = grad_input(self, 0);
      Node* gb = grad_input(self, 1);
      const auto& va = self.inputs[0]->value;
      const auto& vb = self.inputs[1]->value;
      for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        const real g = self.grad[o];
        switch (kind) {
          case BinaryKind::add:
            if (ga) ga->grad[ia] += g;
            if (gb) gb->grad[ib] += g;
            break;
          case BinaryKind::sub:
            if (ga) ga->grad[ia] += g;
            if (gb) gb->grad[ib] -= g;
            break;
          case BinaryKind::mul:
            if (ga) ga->grad[ia] += g * vb[ib];
            if (gb) gb->grad[ib] += g * va[ia];
            break;
          case BinaryKind::div:
            if (ga) ga->grad[ia] += g / vb[ib];
            if (gb) gb->grad[ib] -= g * va[ia] / (vb[ib] * vb[ib]);
            break;
        }
      });
    };
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b, true); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, a, b, true); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b, true); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(BinaryKind::div, a, b, true); }
Tensor broadcast_add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b, false); }
Tensor broadcast_mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b, false); }

// ---------------------------------------------------------------------------
// Reductions and shape ops.

Tensor sum(const Tensor& x) {
  real total = 0;
  for (real v : x.data()) total += v;
  auto [result, node] = TensorAccess::make("sum", {}, {total}, {&x});
  if (node->requires_grad) {
    node->backward = [](const Node& self) {
      if (Node* gx = grad_input(self, 0)) {
        for (auto& g : gx->grad) g += self.grad[0];
      }
    };
  }
  return result;
}

Tensor mean(const Tensor& x) { return scale(sum(x), real(1) / static_cast<real>(x.size())); }

Tensor sum_axis(const Tensor& x, int axis, bool keepdim) {
  const Shape& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), "sum_axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[ax];
  std::vector<real> out(outer * inner, real(0));
  const auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      const real* src = in.data() + (o * len + k) * inner;
      real* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  Shape out_shape = s;
  if (keepdim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  auto [result, node] = TensorAccess::make("sum_axis", std::move(out_shape), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward = [outer, len, inner](const Node& self) {
      if (Node* gx = grad_input(self, 0)) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t k = 0; k < len; ++k) {
            for (std::size_t i = 0; i < inner; ++i) gx->grad[(o * len + k) * inner + i] += self.grad[o * inner + i];
          }
        }
      }
    };
  }
  return result;
}

Tensor mean_axis(const Tensor& x, int axis, bool keepdim) {
  const std::size_t len = x.dim(axis);
  return scale(sum_axis(x, axis, keepdim), real(1) / static_cast<real>(len));
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<real> out(x.data().begin(), x.data().end());
  auto [result, node] = TensorAccess::make("reshape", std::move(shape), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward = [](const Node& self) {
      if (Node* gx = grad_input(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx->grad[i] += self.grad[i];
      }
    };
  }
  return result;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("gather_rows: needs rank >= 2, got " + shape_str(s));
  const std::size_t rows = s[s.size() - 2], width = s.back();
  for (auto i : indices) {
    if (i >= rows) throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range for " + shape_str(s));
  }
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t outer = x.size() / (rows * width);
  const std::size_t picked = indices.size();
  std::vector<real> out(outer * picked * width);
  const auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t r = 0; r < picked; ++r) {
      const real* src = in.data() + (o * rows + indices[r]) * width;
      std::copy(src, src + width, out.begin() + static_cast<std::ptrdiff_t>((o * picked + r) * width));
    }
  }
  Shape out_shape = s;
  out_shape[s.size() - 2] = picked;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  auto [result, node] = TensorAccess::make("gather_rows", std::move(out_shape), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward = [idx = std::move(idx), outer, rows, width](const Node& self) {
      if (Node* gx = grad_input(self, 0)) {
        const std::size_t picked = idx.size();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t r = 0; r < picked; ++r) {
            const real* g = self.grad.data() + (o * picked + r) * width;
            real* dst = gx->grad.data() + (o * rows + idx[r]) * width;
            for (std::size_t c = 0; c < width; ++c) dst[c] += g[c];
          }
        }
      }
    };
  }
  return result;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts[0].shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= first[i];
  for (std::size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> lens;
  std::size_t total_len = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != ax && s[i] != first[i]) ok = false;
    }
    if (!ok) throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first));
    lens.push_back(s[ax]);
    total_len += s[ax];
  }
  std::vector<real> out(outer * total_len * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto in = parts[p].data();
    const std::size_t chunk = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(in.begin() + static_cast<std::ptrdiff_t>(o * chunk), in.begin() + static_cast<std::ptrdiff_t>((o + 1) * chunk),
                out.begin() + static_cast<std::ptrdiff_t>(o * total_len * inner + offset));
    }
    offset += chunk;
  }
  Shape out_shape = first;
  out_shape[ax] = total_len;
  auto [result, node] = TensorAccess::make_many("concat", std::move(out_shape), std::move(out), parts);
  if (node->requires_grad) {
    node->backward = [lens, outer, inner, total_len](const Node& self) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < lens.size(); ++p) {
        const std::size_t chunk = lens[p] * inner;
        if (Node* gp = grad_input(self, p)) {
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < chunk; ++i) gp->grad[o * chunk + i] += self.grad[o * total_len * inner + off + i];
          }
        }
        off += chunk;
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reverse mode.

ComputationTape record_tape(const Tensor& loss) {
  ComputationTape tape;
  const NodePtr& root = TensorAccess::node(loss);
  if (!root) throw ContractError("record_tape: undefined loss");
  std::unordered_map<const Node*, std::size_t> position;
  // Iterative post-order DFS so deep graphs do not overflow the stack.
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  std::unordered_map<const Node*, bool> visited;
  if (root->requires_grad) stack.emplace_back(root, 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next == 0 && visited[node.get()]) {
      stack.pop_back();
      continue;
    }
    visited[node.get()] = true;
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++];
      if (child->requires_grad && !visited[child.get()]) stack.emplace_back(child, 0);
      continue;
    }
    TapeEntry entry;
    entry.op = node->op;
    entry.output = tape.nodes_.size();
    for (const auto& in : node->inputs) {
      if (in->requires_grad) entry.inputs.push_back(position.at(in.get()));
    }
    position[node.get()] = entry.output;
    tape.entries_.push_back(std::move(entry));
    tape.nodes_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

void backward(const Tensor& loss, const ComputationTape& tape) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, shape is " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (tape.nodes_.empty()) return;
  if (tape.nodes_.back() != TensorAccess::node(loss)) throw ContractError("backward: tape was not recorded from this loss");
  // Interior gradients are scratch space for this pass; leaves accumulate.
  for (const auto& node : tape.nodes_) {
    if (!node->inputs.empty()) node->grad.assign(node->value.size(), real(0));
  }
  Node& root = *tape.nodes_.back();
  ensure_grad(root);
  root.grad[0] += real(1);
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    Node& node = **it;
    if (node.backward) node.backward(node);
  }
  for (const auto& node : tape.nodes_) {
    if (!node->inputs.empty()) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, shape is " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  backward(loss, record_tape(loss));
}

YOTO_END_NAMESPACE
