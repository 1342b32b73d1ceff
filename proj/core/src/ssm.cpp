#include "pie/ssm.hpp"

#include <cmath>
#include <stdexcept>

#include "pie/ops.hpp"

namespace pie::ssm {

void SequenceParams::validate() const {
  if (!decay.defined() || !b.defined() || !c.defined()) {
    throw std::invalid_argument("ssm parameters are incomplete");
  }
  const std::size_t L = decay.size();
  if (decay.rank() != 1) throw ShapeError("ssm decay must be (L), got " + shape_str(decay.shape()));
  if (b.rank() != 2 || c.rank() != 2 || b.dim(0) != L || c.dim(0) != L || b.dim(1) != c.dim(1)) {
    throw ShapeError("ssm B " + shape_str(b.shape()) + " and C " + shape_str(c.shape()) +
                     " must both be (" + std::to_string(L) + ", N)");
  }
  for (std::size_t t = 0; t < L; ++t) {
    const double a = decay[t];
    if (!(a > 0.0 && a <= 1.0)) {
      throw std::invalid_argument("ssm decay a_" + std::to_string(t) + " = " + std::to_string(a) +
                                  " outside (0, 1]");
    }
  }
}

Tensor scan(const SequenceParams& params, const Tensor& x) {
  params.validate();
  const std::size_t L = params.seq_len();
  if (x.rank() == 1) {
    if (x.dim(0) != L) {
      throw ShapeError("ssm scan: x " + shape_str(x.shape()) + " does not match L = " + std::to_string(L));
    }
    if (L == 0) return Tensor::zeros({0});
    auto y = ops::ssm_scan(ops::reshape(x, {L, 1}), params.decay, params.b, params.c);
    return ops::reshape(y, {L});
  }
  if (L == 0) return Tensor::zeros(x.shape());
  return ops::ssm_scan(x, params.decay, params.b, params.c);
}

Tensor materialize_diagonal(const Tensor& decay_diag, const Tensor& b, const Tensor& c) {
  if (decay_diag.rank() != 2 || decay_diag.shape() != b.shape() || b.shape() != c.shape()) {
    throw ShapeError("materialize: decay " + shape_str(decay_diag.shape()) + ", B " +
                     shape_str(b.shape()) + ", C " + shape_str(c.shape()) + " must all be (L, N)");
  }
  const std::size_t L = b.dim(0), N = b.dim(1);
  std::vector<double> m(L * L, 0.0);
  std::vector<double> prod(N);
  for (std::size_t i = 0; i < L; ++i) {
    std::fill(prod.begin(), prod.end(), 1.0);
    for (std::size_t j = i; j < L; ++j) {
      if (j > i)
        for (std::size_t n = 0; n < N; ++n) prod[n] *= decay_diag.at(j, n);
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n) v += c.at(j, n) * prod[n] * b.at(i, n);
      m[j * L + i] = v;
    }
  }
  return Tensor::matrix(L, L, std::move(m));
}

Tensor materialize(const SequenceParams& params) {
  params.validate();
  const std::size_t L = params.seq_len(), N = params.state_dim();
  std::vector<double> diag(L * N);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t n = 0; n < N; ++n) diag[t * N + n] = params.decay[t];
  return materialize_diagonal(Tensor::matrix(L, N, std::move(diag)), params.b, params.c);
}

BlockParams BlockParams::create(ParameterStore& store, const std::string& prefix,
                                std::size_t model_dim, std::size_t state_dim, std::size_t expand) {
  BlockParams p;
  p.model_dim = model_dim;
  p.state_dim = state_dim;
  p.inner_dim = expand * model_dim;
  p.in_proj = Linear::create(store, prefix + ".in_proj", model_dim, 2 * p.inner_dim + 1 + 2 * state_dim);
  p.out_proj = Linear::create(store, prefix + ".out_proj", p.inner_dim, model_dim);
  // exp(-softplus(-2)) ~ 0.88 at initialization.
  p.decay_bias = store.get_or_create(prefix + ".decay_bias", {1}, Init::constant, 1, -2.0);
  return p;
}

namespace {

struct Projected {
  Tensor inner, gate;
  SequenceParams seq;
};

Projected project(const BlockParams& block, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != block.model_dim) {
    throw ShapeError("ssm block expects (L, " + std::to_string(block.model_dim) + "), got " +
                     shape_str(x.shape()));
  }
  const std::size_t L = x.dim(0);
  auto parts = ops::split(block.in_proj(x), 1,
                          {block.inner_dim, block.inner_dim, 1, block.state_dim, block.state_dim});
  auto logit = ops::add(ops::reshape(parts[2], {L}), block.decay_bias);
  Projected p;
  p.inner = parts[0];
  p.gate = parts[1];
  p.seq.decay = ops::exp(ops::neg(ops::softplus(logit)));
  p.seq.b = parts[3];
  p.seq.c = parts[4];
  return p;
}

}  // namespace

SequenceParams select(const BlockParams& block, const Tensor& x) { return project(block, x).seq; }

Tensor block_forward(const BlockParams& block, const Tensor& x) {
  if (x.rank() == 2 && x.dim(0) == 0) return x;
  auto p = project(block, x);
  auto y = scan(p.seq, p.inner);
  auto gated = ops::mul(y, ops::silu(p.gate));
  return ops::add(x, block.out_proj(gated));
}

}  // namespace pie::ssm
