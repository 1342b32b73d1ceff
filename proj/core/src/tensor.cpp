#include "pie/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace pie {

namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::concat: return "concat";
    case OpKind::split: return "split";
    case OpKind::reshape: return "reshape";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::silu: return "silu";
    case OpKind::softplus: return "softplus";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::transpose: return "transpose";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::abs: return "abs";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::cos: return "cos";
    case OpKind::gather: return "gather";
    case OpKind::scatter_add: return "scatter_add";
    case OpKind::embedding_lookup: return "embedding_lookup";
    case OpKind::ssm_scan: return "ssm_scan";
  }
  return "?";
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " holds " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::size() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
  if (impl_->node) throw std::logic_error("cannot mutate a non-leaf tensor in place");
  return impl_->data;
}

std::span<const double> Tensor::grad() const { return impl_->grad; }

bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size(); }

void Tensor::zero_grad() { impl_->grad.clear(); }

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (impl_->node) throw std::logic_error("requires_grad can only be set on leaves");
  impl_->requires_grad = value;
}

bool Tensor::is_leaf() const { return impl_->node == nullptr; }

OpKind Tensor::op() const { return impl_->node ? impl_->node->op : OpKind::leaf; }

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) needs a matrix, got " + shape_str(shape()));
  return impl_->data[row * impl_->shape[1] + col];
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw ShapeError("backward() needs a scalar root, got " +
                     (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  }
  auto* root_impl = root.impl().get();
  if (!root_impl->requires_grad) return;

  // Iterative post-order DFS gives a topological order without recursion depth
  // limits on long scans.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root_impl, 0);
  visited.insert(root_impl);
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      auto* child = impl->node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  root_impl->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* impl = *it;
    if (impl->node && impl->grad.size() == impl->data.size()) impl->node->backward(*impl);
  }
  for (auto* impl : order) {
    if (impl->node) {
      impl->node.reset();
      // Intermediate results keep requires_grad so they still read as "tracked";
      // their gradient buffers are released with the graph.
      impl->grad.clear();
      impl->grad.shrink_to_fit();
    }
  }
}

}  // namespace pie
