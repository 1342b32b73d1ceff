#pragma once

#include <cstddef>
#include <vector>

#include "pie/tensor.hpp"

// Differentiable primitives.
//
// Broadcasting for the binary element-wise ops (add, sub, mul, div) only
// expands the second operand, in one of three ways:
//   * identical shapes;
//   * b has a single element (scalar expansion);
//   * b's shape equals a trailing suffix of a's shape, e.g. (D) onto (L, D);
//   * a is (R, C) and b is (R, 1): per-row expansion.
// Anything else is a ShapeError naming both shapes.
namespace pie::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& sizes);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);

// Entries equal to -inf receive zero probability. An axis of length zero is
// rejected.
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor cos(const Tensor& a);

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes over the last axis, then applies gain and bias of shape (D).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Flat element gather: result[i] = a.flat[indices[i]], shape (n).
Tensor gather(const Tensor& a, const std::vector<std::size_t>& indices);
// Flat scatter: result (out_size) zeros with result[indices[i]] += src[i].
Tensor scatter_add(const Tensor& src, const std::vector<std::size_t>& indices,
                   std::size_t out_size);
// Row lookup: table (V, D), ids (n) -> (n, D).
Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids);

// Selective scan with a scalar decay per timestep shared across channels:
//   h_t = a_t h_{t-1} + x_t B_t^T,  y_t = h_t C_t
// x (L, Ch), a (L), b (L, N), c (L, N) -> y (L, Ch).
Tensor ssm_scan(const Tensor& x, const Tensor& a, const Tensor& b, const Tensor& c);

}  // namespace pie::ops
