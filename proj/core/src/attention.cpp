#include "pie/attention.hpp"

#include <cmath>
#include <vector>

#include "pie/ops.hpp"

namespace pie::attention {

AttentionParams AttentionParams::create(ParameterStore& store, const std::string& prefix,
                                        std::size_t model_dim, std::size_t n_heads) {
  if (n_heads == 0 || model_dim % n_heads != 0) {
    throw std::invalid_argument("attention: model dim " + std::to_string(model_dim) +
                                " is not divisible by " + std::to_string(n_heads) + " heads");
  }
  AttentionParams p;
  p.n_heads = n_heads;
  p.head_dim = model_dim / n_heads;
  p.query = Linear::create(store, prefix + ".q", model_dim, model_dim);
  p.key = Linear::create(store, prefix + ".k", model_dim, model_dim);
  p.value = Linear::create(store, prefix + ".v", model_dim, model_dim);
  p.output = Linear::create(store, prefix + ".o", model_dim, model_dim);
  return p;
}

Tensor attend(const AttentionParams& params, const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t D = params.model_dim();
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != D || k.dim(1) != D ||
      v.dim(1) != D || k.dim(0) != v.dim(0)) {
    throw ShapeError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                     shape_str(v.shape()) + " incompatible with model dim " + std::to_string(D));
  }
  if (k.dim(0) == 0) throw ShapeError("attention: no keys");

  auto Q = params.query(q);
  auto K = params.key(k);
  auto V = params.value(v);
  const double inv_sqrt = 1.0 / std::sqrt(double(params.head_dim));
  std::vector<std::size_t> widths(params.n_heads, params.head_dim);
  auto qh = ops::split(Q, 1, widths);
  auto kh = ops::split(K, 1, widths);
  auto vh = ops::split(V, 1, widths);
  std::vector<Tensor> heads;
  heads.reserve(params.n_heads);
  for (std::size_t h = 0; h < params.n_heads; ++h) {
    auto scores = ops::scale(ops::matmul(qh[h], ops::transpose(kh[h])), inv_sqrt);
    heads.push_back(ops::matmul(ops::softmax(scores, 1), vh[h]));
  }
  auto merged = params.n_heads == 1 ? heads.front() : ops::concat(heads, 1);
  return params.output(merged);
}

}  // namespace pie::attention
