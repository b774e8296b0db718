#include "pvlr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "pvlr/errors.hpp"

namespace pvlr {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::vector<Tensor> parents;
  VjpFn vjp;
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const std::string& op, const std::string& detail) {
  if (!ok) throw DimensionError(op + ": " + detail);
}

void require_rank(const Tensor& t, std::size_t rank, const std::string& op) {
  require(t.defined(), op, "undefined tensor");
  if (t.rank() != rank) {
    throw DimensionError(op + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(op + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// C[n×m] += A[n×k] · B[k×m]
void gemm_nn(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[n×m] += A[n×k] · B[m×k]ᵀ
void gemm_nt(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc[4] = {0.0, 0.0, 0.0, 0.0};
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        acc[0] += ai[p] * bj[p];
        acc[1] += ai[p + 1] * bj[p + 1];
        acc[2] += ai[p + 2] * bj[p + 2];
        acc[3] += ai[p + 3] * bj[p + 3];
      }
      for (; p < k; ++p) acc[0] += ai[p] * bj[p];
      ci[j] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
    }
  }
}

// C[n×m] += A[k×n]ᵀ · B[k×m]
void gemm_tn(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t k, std::size_t n,
             std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * n;
    const double* bp = b + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
    }
  }
}

template <typename F>
Tensor unary_elementwise(const Tensor& x, F&& forward, std::function<double(double, double)> dydx) {
  std::vector<double> out(x.numel());
  const auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_op_result(x.shape(), std::move(out), {x},
                        [x, dydx = std::move(dydx)](std::span<const double> g,
                                                    std::span<const double> y) {
                          if (!GradSink::wants(x)) return;
                          auto gx = GradSink::buffer(x);
                          const auto xv = x.values();
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xv[i], y[i]);
                        });
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return Tensor({values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw DimensionError("Tensor::matrix: ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({n, m}, std::move(v), requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("Tensor: access to undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("Tensor::dim: axis out of range for " + shape_to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return node_->shape[1];
}

std::span<const double> Tensor::values() const {
  if (!node_) throw ContractError("Tensor: access to undefined tensor");
  return node_->values;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw ContractError("Tensor: access to undefined tensor");
  if (!node_->leaf) throw ContractError("Tensor: values of an operation result are immutable");
  return node_->values;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("Tensor::item: tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  return node_->values[0];
}

double Tensor::at(std::size_t i) const {
  const auto v = values();
  if (i >= v.size()) throw DimensionError("Tensor::at: index out of range");
  return v[i];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  require_rank(*this, 2, "at");
  if (i >= node_->shape[0] || j >= node_->shape[1]) throw DimensionError("Tensor::at: index out of range");
  return node_->values[i * node_->shape[1] + j];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && node_->leaf; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("Tensor::grad: no gradient has been accumulated");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

void Tensor::backward() const {
  if (!node_) throw ContractError("backward: undefined tensor");
  if (numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(shape()));
  }
  if (!node_->requires_grad) throw ContractError("backward: loss has no gradient history");

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].node_.get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->leaf) n->grad.assign(n->values.size(), 0.0);
  }
  if (node_->grad.empty()) node_->grad.assign(1, 0.0);
  node_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->leaf || !n->vjp) continue;
    n->vjp(n->grad, n->values);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

Tensor Tensor::detach() const { return Tensor(shape(), std::vector<double>(values().begin(), values().end())); }

bool GradSink::wants(const Tensor& t) { return t.node_ && t.node_->requires_grad; }

std::span<double> GradSink::buffer(const Tensor& t) {
  auto& g = t.node_->grad;
  if (g.empty()) g.assign(t.node_->values.size(), 0.0);
  return g;
}

Tensor make_op_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents, VjpFn vjp) {
  Tensor out(std::move(shape), std::move(values));
  out.node_->leaf = false;
  const bool record = g_grad_enabled &&
                      std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
  if (record) {
    out.node_->requires_grad = true;
    out.node_->parents = std::move(parents);
    out.node_->vjp = std::move(vjp);
  }
  return out;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// ParameterSet

Tensor& ParameterSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw ContractError("ParameterSet: duplicate parameter name '" + name + "'");
  if (!tensor.requires_grad() || !tensor.is_leaf()) {
    throw ContractError("ParameterSet: parameter '" + name + "' must be a leaf tensor requiring grad");
  }
  params_.push_back({std::move(name), std::move(tensor)});
  return params_.back().tensor;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("ParameterSet: unknown parameter '" + name + "'");
}

Tensor& ParameterSet::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParameterSet&>(*this).get(name));
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t ParameterSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), n, k, m);
  return make_op_result({n, m}, std::move(out), {a, b}, [a, b, n, k, m](std::span<const double> g, auto) {
    if (GradSink::wants(a)) gemm_nt(g.data(), b.values().data(), GradSink::buffer(a).data(), n, m, k);
    if (GradSink::wants(b)) gemm_tn(a.values().data(), g.data(), GradSink::buffer(b).data(), n, k, m);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: feature dimensions differ for " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  gemm_nt(a.values().data(), b.values().data(), out.data(), n, k, m);
  return make_op_result({n, m}, std::move(out), {a, b}, [a, b, n, k, m](std::span<const double> g, auto) {
    if (GradSink::wants(a)) gemm_nn(g.data(), b.values().data(), GradSink::buffer(a).data(), n, m, k);
    if (GradSink::wants(b)) gemm_tn(g.data(), a.values().data(), GradSink::buffer(b).data(), n, m, k);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t n = x.rows(), k = x.cols(), m = weight.cols();
  if (weight.rows() != k) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + " does not fit weight " +
                         shape_to_string(weight.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != m)) {
    throw DimensionError("linear: bias " + shape_to_string(bias->shape()) + " does not fit weight " +
                         shape_to_string(weight.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  if (bias) {
    const auto bv = bias->values();
    for (std::size_t i = 0; i < n; ++i) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  gemm_nn(x.values().data(), weight.values().data(), out.data(), n, k, m);
  std::vector<Tensor> parents{x, weight};
  if (bias) parents.push_back(*bias);
  Tensor b = bias ? *bias : Tensor();
  return make_op_result({n, m}, std::move(out), std::move(parents),
                        [x, weight, b, n, k, m](std::span<const double> g, auto) {
                          if (GradSink::wants(x)) gemm_nt(g.data(), weight.values().data(), GradSink::buffer(x).data(), n, m, k);
                          if (GradSink::wants(weight)) gemm_tn(x.values().data(), g.data(), GradSink::buffer(weight).data(), n, k, m);
                          if (b.defined() && GradSink::wants(b)) {
                            auto gb = GradSink::buffer(b);
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
                          }
                        });
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_rank(a, 2, "matvec");
  require_rank(x, 1, "matvec");
  const std::size_t n = a.rows(), d = a.cols();
  if (x.dim(0) != d) {
    throw DimensionError("matvec: matrix " + shape_to_string(a.shape()) + " does not fit vector " +
                         shape_to_string(x.shape()));
  }
  std::vector<double> out(n, 0.0);
  gemm_nt(a.values().data(), x.values().data(), out.data(), n, d, 1);
  return make_op_result({n}, std::move(out), {a, x}, [a, x, n, d](std::span<const double> g, auto) {
    if (GradSink::wants(a)) gemm_nn(g.data(), x.values().data(), GradSink::buffer(a).data(), n, 1, d);
    if (GradSink::wants(x)) gemm_tn(g.data(), a.values().data(), GradSink::buffer(x).data(), n, 1, d);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g, auto) {
    for (const Tensor* t : {&a, &b}) {
      if (!GradSink::wants(*t)) continue;
      auto gt = GradSink::buffer(*t);
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g, auto) {
    if (GradSink::wants(a)) {
      auto ga = GradSink::buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (GradSink::wants(b)) {
      auto gb = GradSink::buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g, auto) {
    if (GradSink::wants(a)) {
      auto ga = GradSink::buffer(a);
      const auto bv = b.values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (GradSink::wants(b)) {
      auto gb = GradSink::buffer(b);
      const auto av = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary_elementwise(
      x, [scale, shift](double v) { return scale * v + shift; }, [scale](double, double) { return scale; });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: scale must be a scalar, got " + shape_to_string(s.shape()));
  const double sv = s.values()[0];
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * xv[i];
  return make_op_result(x.shape(), std::move(out), {x, s}, [x, s, sv](std::span<const double> g, auto) {
    if (GradSink::wants(x)) {
      auto gx = GradSink::buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
    }
    if (GradSink::wants(s)) {
      const auto xv = x.values();
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      GradSink::buffer(s)[0] += acc;
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.rows(), m = x.cols();
  if (m == 0) throw EmptyInputError("softmax_rows: rows must have at least one entry");
  std::vector<double> out(n * m);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = xv.data() + i * m;
    double* yi = out.data() + i * m;
    const double mx = *std::max_element(xi, xi + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      total += yi[j];
    }
    for (std::size_t j = 0; j < m; ++j) yi[j] /= total;
  }
  return make_op_result(x.shape(), std::move(out), {x}, [x, n, m](std::span<const double> g, std::span<const double> y) {
    if (!GradSink::wants(x)) return;
    auto gx = GradSink::buffer(x);
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = g.data() + i * m;
      const double* yi = y.data() + i * m;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += gi[j] * yi[j];
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += yi[j] * (gi[j] - dot);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log_clamped(const Tensor& x, double floor) {
  if (!(floor > 0.0)) throw ContractError("log_clamped: floor must be positive");
  return unary_elementwise(
      x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor pow_scalar(const Tensor& x, double exponent) {
  if (exponent == 0.0) return Tensor::full(x.shape(), 1.0);
  for (double v : x.values()) {
    if (v < 0.0) throw ContractError("pow_scalar: negative base");
  }
  return unary_elementwise(
      x, [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double v, double) {
        if (v > 0.0) return exponent * std::pow(v, exponent - 1.0);
        return exponent == 1.0 ? 1.0 : 0.0;
      });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row counts differ for " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> out(n * (p + q));
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(bv.data() + i * q, q, out.data() + i * (p + q) + p);
  }
  return make_op_result({n, p + q}, std::move(out), {a, b}, [a, b, n, p, q](std::span<const double> g, auto) {
    if (GradSink::wants(a)) {
      auto ga = GradSink::buffer(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
    }
    if (GradSink::wants(b)) {
      auto gb = GradSink::buffer(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw EmptyInputError("concat_rows: no inputs");
  const bool vectors = parts.front().rank() == 1;
  const std::size_t width = vectors ? parts.front().dim(0) : parts.front().cols();
  std::size_t total_rows = 0;
  for (const auto& p : parts) {
    if (vectors) {
      require_rank(p, 1, "concat_rows");
      if (p.dim(0) != width) throw DimensionError("concat_rows: vector lengths differ");
      total_rows += 1;
    } else {
      require_rank(p, 2, "concat_rows");
      if (p.cols() != width) throw DimensionError("concat_rows: column counts differ");
      total_rows += p.rows();
    }
  }
  std::vector<double> out;
  out.reserve(total_rows * width);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_op_result({total_rows, width}, std::move(out), parts, [parts](std::span<const double> g, auto) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.numel();
      if (GradSink::wants(p)) {
        auto gp = GradSink::buffer(p);
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  if (begin > end || end > x.cols()) throw DimensionError("slice_cols: range out of bounds for " + shape_to_string(x.shape()));
  const std::size_t n = x.rows(), m = x.cols(), w = end - begin;
  std::vector<double> out(n * w);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) std::copy_n(xv.data() + i * m + begin, w, out.data() + i * w);
  return make_op_result({n, w}, std::move(out), {x}, [x, n, m, w, begin](std::span<const double> g, auto) {
    if (!GradSink::wants(x)) return;
    auto gx = GradSink::buffer(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * m + begin + j] += g[i * w + j];
  });
}

Tensor row(const Tensor& x, std::size_t index) {
  require_rank(x, 2, "row");
  if (index >= x.rows()) throw DimensionError("row: index out of range for " + shape_to_string(x.shape()));
  const std::size_t m = x.cols();
  const auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(index * m),
                          xv.begin() + static_cast<std::ptrdiff_t>((index + 1) * m));
  return make_op_result({m}, std::move(out), {x}, [x, index, m](std::span<const double> g, auto) {
    if (!GradSink::wants(x)) return;
    auto gx = GradSink::buffer(x);
    for (std::size_t j = 0; j < m; ++j) gx[index * m + j] += g[j];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_op_result(std::move(shape), std::move(out), {x}, [x](std::span<const double> g, auto) {
    if (!GradSink::wants(x)) return;
    auto gx = GradSink::buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor row_mean(const Tensor& x) {
  require_rank(x, 2, "row_mean");
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw EmptyInputError("row_mean: no rows to average");
  std::vector<double> out(d, 0.0);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= inv;
  return make_op_result({d}, std::move(out), {x}, [x, n, d, inv](std::span<const double> g, auto) {
    if (!GradSink::wants(x)) return;
    auto gx = GradSink::buffer(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j] * inv;
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "rowwise_dot");
  require_same_shape(a, b, "rowwise_dot");
  const std::size_t n = a.rows(), d = a.cols();
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += av[i * d + j] * bv[i * d + j];
  return make_op_result({n}, std::move(out), {a, b}, [a, b, n, d](std::span<const double> g, auto) {
    if (GradSink::wants(a)) {
      auto ga = GradSink::buffer(a);
      const auto bv = b.values();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[i] * bv[i * d + j];
    }
    if (GradSink::wants(b)) {
      auto gb = GradSink::buffer(b);
      const auto av = a.values();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[i * d + j] += g[i] * av[i * d + j];
    }
  });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "cosine_rows");
  require_same_shape(a, b, "cosine_rows");
  const std::size_t n = a.rows(), d = a.cols();
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(n), na(n), nb(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += av[i * d + j] * bv[i * d + j];
      aa += av[i * d + j] * av[i * d + j];
      bb += bv[i * d + j] * bv[i * d + j];
    }
    na[i] = std::sqrt(aa);
    nb[i] = std::sqrt(bb);
    if (na[i] < 1e-12 || nb[i] < 1e-12) {
      throw DegenerateInputError("cosine_rows: row " + std::to_string(i) + " has near-zero norm");
    }
    out[i] = std::clamp(dot / (na[i] * nb[i]), -1.0, 1.0);
  }
  return make_op_result({n}, std::move(out), {a, b},
                        [a, b, n, d, na = std::move(na), nb = std::move(nb)](std::span<const double> g,
                                                                             std::span<const double> cosv) {
                          const auto av = a.values(), bv = b.values();
                          const bool want_a = GradSink::wants(a), want_b = GradSink::wants(b);
                          auto ga = want_a ? GradSink::buffer(a) : std::span<double>();
                          auto gb = want_b ? GradSink::buffer(b) : std::span<double>();
                          for (std::size_t i = 0; i < n; ++i) {
                            const double inv = 1.0 / (na[i] * nb[i]);
                            for (std::size_t j = 0; j < d; ++j) {
                              const double aij = av[i * d + j], bij = bv[i * d + j];
                              if (want_a) ga[i * d + j] += g[i] * (bij * inv - cosv[i] * aij / (na[i] * na[i]));
                              if (want_b) gb[i * d + j] += g[i] * (aij * inv - cosv[i] * bij / (nb[i] * nb[i]));
                            }
                          }
                        });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_op_result({}, {total}, {x}, [x](std::span<const double> g, auto) {
    if (!GradSink::wants(x)) return;
    for (auto& v : GradSink::buffer(x)) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw EmptyInputError("mean: empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(n));
}

}  // namespace pvlr
