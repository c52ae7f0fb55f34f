#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "yoto/config.hpp"
#include "yoto/errors.hpp"

YOTO_BEGIN_NAMESPACE

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads `self.grad` and accumulates into the inputs that require grad.
  std::function<void(const Node& self)> backward;
};

}  // namespace detail

/// Dense row-major tensor with optional reverse-mode gradient tracking.
///
/// A Tensor is a handle: copies share storage. Operation results are never
/// mutated after creation; only leaves (parameters) expose mutable data, which
/// is how optimizers update them in place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Size of axis `axis`; negative values count from the back.
  std::size_t dim(int axis) const;

  std::span<const real> data() const;
  real item() const;
  real at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  bool is_leaf() const;
  /// Mutable storage. Only valid on leaves.
  std::span<real> mutable_data();

  bool has_grad() const;
  /// Accumulated gradient; all zeros when nothing has been accumulated yet.
  std::vector<real> grad() const;
  void zero_grad();

  /// Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach(bool requires_grad = false) const;

  const detail::Node* node() const { return node_.get(); }

 private:
  friend struct TensorAccess;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Operations. All are pure: inputs are never modified.

/// Batched matrix product. `a` is [..,M,K]; `b` is [..,K,N] with equal leading
/// dims, or a plain [K,N] matrix shared by every batch entry.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the two trailing axes.
Tensor transpose(const Tensor& x);
/// Row-wise softmax over the trailing axis of x / divisor, max-subtracted.
Tensor softmax_rows(const Tensor& x, real divisor = 1);
/// x[..,Cin] * w[Cin,Cout] + b[Cout].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
/// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor scale(const Tensor& x, real factor);
Tensor add_scalar(const Tensor& x, real value);

// Strict binary ops: shapes must be equal.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Broadcasting binary ops (trailing-aligned; each axis equal or 1).
Tensor broadcast_add(const Tensor& a, const Tensor& b);
Tensor broadcast_mul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, int axis, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
/// Selects rows along axis -2: out[.., i, :] = x[.., indices[i], :].
/// Duplicated indices are allowed; their gradients add up.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor concat(std::span<const Tensor> parts, int axis);

// ---------------------------------------------------------------------------
// Reverse mode.

struct TapeEntry {
  std::string op;
  std::vector<std::size_t> inputs;  // tape positions of graph inputs
  std::size_t output = 0;           // tape position of this node
};

/// Topologically ordered record of every node that contributes gradient to
/// `loss` (inputs first, loss last).
class ComputationTape {
 public:
  const std::vector<TapeEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  friend ComputationTape record_tape(const Tensor& loss);
  friend void backward(const Tensor& loss, const ComputationTape& tape);
  std::vector<TapeEntry> entries_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

ComputationTape record_tape(const Tensor& loss);
/// Adds d loss / d t into the grad of every requires-grad leaf t. Gradients
/// accumulate across calls until zero_grad().
void backward(const Tensor& loss, const ComputationTape& tape);
void backward(const Tensor& loss);

YOTO_END_NAMESPACE
