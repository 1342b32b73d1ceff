#pragma once

#include <cstddef>
#include <string>

#include "pie/params.hpp"

namespace pie::attention {

/// Projections for one multi-head attention with n_heads * head_dim == D.
struct AttentionParams {
  std::size_t n_heads = 1;
  std::size_t head_dim = 0;
  Linear query;
  Linear key;
  Linear value;
  Linear output;

  static AttentionParams create(ParameterStore& store, const std::string& prefix, std::size_t model_dim,
                                std::size_t n_heads);
  std::size_t model_dim() const { return n_heads * head_dim; }
};

/// Scaled dot-product attention: per head softmax(Q K^T / sqrt(head_dim)) V,
/// heads concatenated and output-projected. q (Lq, D), k and v (Lk, D).
Tensor attend(const AttentionParams& params, const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace pie::attention
