#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pie {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  div,
  scale,
  add_scalar,
  concat,
  split,
  reshape,
  softmax,
  log_softmax,
  silu,
  softplus,
  sigmoid,
  layer_norm,
  transpose,
  sum,
  mean,
  abs,
  exp,
  log,
  cos,
  gather,
  scatter_add,
  embedding_lookup,
  ssm_scan,
};

const char* op_name(OpKind op);

namespace detail {

struct TensorImpl;

struct GraphNode {
  OpKind op = OpKind::leaf;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads out.grad and accumulates into the inputs that require grad.
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<GraphNode> node;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float64 tensor with an optional reverse-mode graph node.
///
/// A Tensor is a shared handle: copies alias the same storage. Parameters are
/// leaves with requires_grad set; every op result that depends on such a leaf
/// carries a GraphNode until backward() frees the graph.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> data() const;
  // Only leaves may be mutated in place; results of ops are immutable.
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  OpKind op() const;

  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }
  double at(std::size_t row, std::size_t col) const;

  // Deep copy of the values without any graph attachment.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Whether new op results are attached to the graph on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Propagates d(root)/d(x) into every reachable tensor that requires grad.
/// Gradients accumulate into leaves; the graph below root is released after.
void backward(const Tensor& root);

}  // namespace pie
