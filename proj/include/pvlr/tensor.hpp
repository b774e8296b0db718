#pragma once

// Dense row-major float64 tensors with a record-on-execute reverse-mode tape.
//
// A Tensor is a cheap shared handle. Operations on tensors that require
// gradients record their parents and a vector-Jacobian closure; backward()
// walks the recorded graph in reverse topological order, visiting each node
// once and accumulating gradients additively where a tensor fans out.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pvlr {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

/// Vector-Jacobian closure of one recorded operation. Receives the upstream
/// gradient and the operation's own output values.
using VjpFn = std::function<void(std::span<const double> out_grad, std::span<const double> out_values)>;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  /// Row count of a 2-D tensor.
  std::size_t rows() const;
  /// Column count of a 2-D tensor.
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Writable view of a leaf tensor's values (optimizers, checkpoint loading).
  /// Throws ContractError on tensors produced by an operation.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and propagates to every reachable tensor that
  /// requires gradients. Leaf gradients accumulate across calls until
  /// zero_grad(); intermediate gradients are recomputed on every call.
  void backward() const;

  /// Copy of the values with no graph history.
  Tensor detach() const;

  const void* id() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>, VjpFn);
  friend class GradSink;
};

/// Accumulation target handed to backward closures: adds into a parent's
/// gradient buffer, allocating it on first use.
class GradSink {
 public:
  static bool wants(const Tensor& t);
  static std::span<double> buffer(const Tensor& t);
};

/// Build the result of a differentiable operation. `vjp` must accumulate into
/// the parents via GradSink. When gradients are disabled or no parent
/// requires them, nothing is recorded.
Tensor make_op_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents, VjpFn vjp);

/// While alive on a thread, operations on that thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Ordered, name-unique collection of trainable tensors.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor tensor);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;
  void zero_grad();
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_numel() const;
  std::vector<Parameter>& items() noexcept { return params_; }
  const std::vector<Parameter>& items() const noexcept { return params_; }

 private:
  std::vector<Parameter> params_;
};

// ---------------------------------------------------------------------------
// Operations. Shapes are checked eagerly; mismatches throw DimensionError.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ for a[n×k], b[m×k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x[n×a] · W[a×b] (+ bias[b] broadcast over rows).
Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias = std::nullopt);
/// A[n×d] · x[d] -> [n].
Tensor matvec(const Tensor& a, const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product of equal shapes.
Tensor mul(const Tensor& a, const Tensor& b);
/// scale · x + shift, elementwise with constants.
Tensor affine(const Tensor& x, double scale, double shift = 0.0);
/// x scaled by a differentiable scalar tensor s.
Tensor scale_by(const Tensor& x, const Tensor& s);

Tensor softmax_rows(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
/// log(max(x, floor)); gradient is zero where the floor is active.
Tensor log_clamped(const Tensor& x, double floor);
/// x^exponent for x >= 0. exponent == 0 yields constant ones.
Tensor pow_scalar(const Tensor& x, double exponent);

Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Stacks 1-D tensors of equal length, or 2-D tensors of equal width, row-wise.
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor row(const Tensor& x, std::size_t index);
Tensor reshape(const Tensor& x, Shape shape);

/// Column means of x[n×d] -> [d].
Tensor row_mean(const Tensor& x);
/// Rowwise inner products of a[n×d], b[n×d] -> [n].
Tensor rowwise_dot(const Tensor& a, const Tensor& b);
/// Rowwise cosine similarity of a[n×d], b[n×d] -> [n].
Tensor cosine_rows(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace pvlr
