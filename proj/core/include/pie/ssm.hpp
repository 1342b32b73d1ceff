#pragma once

#include <cstddef>
#include <string>

#include "pie/params.hpp"
#include "pie/tensor.hpp"

namespace pie::ssm {

/// Per-timestep selective parameters of the recurrence
///   y_t = sum_{s<=t} C_t^T (a_t ... a_{s+1}) B_s x_s
/// with a scalar decay a_t in (0, 1].
struct SequenceParams {
  Tensor decay;  // (L)
  Tensor b;      // (L, N)
  Tensor c;      // (L, N)

  std::size_t seq_len() const { return decay.size(); }
  std::size_t state_dim() const { return b.rank() == 2 ? b.dim(1) : 0; }
  // Throws std::invalid_argument on shape or range violations.
  void validate() const;
};

/// Linear-time recurrent evaluation. x is (L) or (L, channels); the same
/// (a, B, C) drive every channel. Differentiable in x and all parameters.
Tensor scan(const SequenceParams& params, const Tensor& x);

/// The L x L lower-triangular transfer matrix M with y = M x. Not
/// differentiable; used as the correctness oracle for scan().
Tensor materialize(const SequenceParams& params);

/// Materialization with a diagonal state matrix per timestep: decay_diag is
/// (L, N) and M_ji = sum_n C_j[n] (prod_{r=i+1..j} A_r[n]) B_i[n].
Tensor materialize_diagonal(const Tensor& decay_diag, const Tensor& b, const Tensor& c);

/// Parameters of one selective SSM block:
///   in_proj: D -> [x_inner (E) | gate (E) | decay logit (1) | B (N) | C (N)]
///   out_proj: E -> D
/// with E = expand * D. The decay is a_t = exp(-softplus(logit_t + decay_bias)).
struct BlockParams {
  std::size_t model_dim = 0;
  std::size_t state_dim = 0;
  std::size_t inner_dim = 0;
  Linear in_proj;
  Linear out_proj;
  Tensor decay_bias;  // (1)

  static BlockParams create(ParameterStore& store, const std::string& prefix, std::size_t model_dim,
                            std::size_t state_dim, std::size_t expand = 2);
};

/// Selected (a, B, C) for an input sequence x (L, D), exposed for inspection.
SequenceParams select(const BlockParams& block, const Tensor& x);

/// project -> select (a, B, C) -> scan -> SiLU gate -> project -> residual.
/// x (L, D) -> (L, D).
Tensor block_forward(const BlockParams& block, const Tensor& x);

}  // namespace pie::ssm
