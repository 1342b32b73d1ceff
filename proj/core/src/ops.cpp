#include "pie/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pie::ops {

using detail::GraphNode;
using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;
using BackwardFn = std::function<void(const TensorImpl&)>;

namespace {

Tensor make_result(Shape shape, std::vector<double> data, OpKind op,
                   std::vector<ImplPtr> inputs, BackwardFn fn) {
  Tensor out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const ImplPtr& p) { return p->requires_grad; });
  if (!needs) return out;
  auto node = std::make_shared<GraphNode>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(fn);
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
  return out;
}

void require_defined(const Tensor& t, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(what) + ": undefined tensor operand");
}

enum class Broadcast { same, scalar, trailing, per_row };

Broadcast classify(const Tensor& a, const Tensor& b, const char* what) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return Broadcast::same;
  if (b.size() == 1) return Broadcast::scalar;
  if (sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    return Broadcast::trailing;
  }
  if (sa.size() == 2 && sb.size() == 2 && sb[0] == sa[0] && sb[1] == 1) return Broadcast::per_row;
  throw ShapeError(std::string(what) + ": cannot broadcast " + shape_str(sb) + " onto " +
                   shape_str(sa));
}

// Index into b for flat index i of a.
inline std::size_t b_index(Broadcast kind, std::size_t i, std::size_t b_size, std::size_t a_cols) {
  switch (kind) {
    case Broadcast::same: return i;
    case Broadcast::scalar: return 0;
    case Broadcast::trailing: return i % b_size;
    case Broadcast::per_row: return i / a_cols;
  }
  return 0;
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, OpKind op, const char* what, Fwd fwd, DA da,
              DB db) {
  require_defined(a, what);
  require_defined(b, what);
  auto kind = classify(a, b, what);
  const std::size_t n = a.size();
  const std::size_t bs = b.size();
  const std::size_t cols = a.rank() == 2 ? a.dim(1) : 1;
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[b_index(kind, i, bs, cols)]);
  auto pa = a.impl();
  auto pb = b.impl();
  return make_result(a.shape(), std::move(out), op, {pa, pb},
                     [pa, pb, kind, bs, cols, da, db](const TensorImpl& o) {
                       const auto& g = o.grad;
                       const auto& x = pa->data;
                       const auto& y = pb->data;
                       if (pa->requires_grad) {
                         auto& ga = pa->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           ga[i] += g[i] * da(x[i], y[b_index(kind, i, bs, cols)], o.data[i]);
                         }
                       }
                       if (pb->requires_grad) {
                         auto& gb = pb->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           auto j = b_index(kind, i, bs, cols);
                           gb[j] += g[i] * db(x[i], y[j], o.data[i]);
                         }
                       }
                     });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, OpKind op, Fwd fwd, Deriv deriv) {
  require_defined(a, op_name(op));
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto pa = a.impl();
  return make_result(a.shape(), std::move(out), op, {pa}, [pa, deriv](const TensorImpl& o) {
    auto& ga = pa->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      ga[i] += o.grad[i] * deriv(pa->data[i], o.data[i]);
    }
  });
}

// (outer, axis length, inner) decomposition around an axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit axis_split(const Shape& shape, std::size_t axis, const char* what) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(what) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// C (M,N) += A (M,K) * B (K,N), row-major.
void gemm_acc(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
              std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    double* crow = C + i * N;
    const double* arow = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = B + k * N;
      for (std::size_t j = 0; j < N; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<double> out(M * N, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), M, K, N);
  auto pa = a.impl();
  auto pb = b.impl();
  return make_result({M, N}, std::move(out), OpKind::matmul, {pa, pb},
                     [pa, pb, M, K, N](const TensorImpl& o) {
                       const double* g = o.grad.data();
                       if (pa->requires_grad) {
                         // dA = G * B^T
                         auto& ga = pa->ensure_grad();
                         const double* B = pb->data.data();
                         for (std::size_t i = 0; i < M; ++i) {
                           for (std::size_t k = 0; k < K; ++k) {
                             double acc = 0.0;
                             const double* grow = g + i * N;
                             const double* brow = B + k * N;
                             for (std::size_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
                             ga[i * K + k] += acc;
                           }
                         }
                       }
                       if (pb->requires_grad) {
                         // dB = A^T * G
                         auto& gb = pb->ensure_grad();
                         const double* A = pa->data.data();
                         for (std::size_t i = 0; i < M; ++i) {
                           for (std::size_t k = 0; k < K; ++k) {
                             const double aik = A[i * K + k];
                             if (aik == 0.0) continue;
                             double* gbrow = gb.data() + k * N;
                             const double* grow = g + i * N;
                             for (std::size_t j = 0; j < N; ++j) gbrow[j] += aik * grow[j];
                           }
                         }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, OpKind::add, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, OpKind::sub, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, OpKind::mul, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, OpKind::div, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, OpKind::scale, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, OpKind::add_scalar, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(ref));
  }
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) {
      throw ShapeError("concat: shape " + shape_str(s) + " does not match " + shape_str(ref) +
                       " outside axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  auto geo = axis_split(out_shape, axis, "concat");
  std::vector<double> out(numel(out_shape));
  std::vector<ImplPtr> inputs;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(axis);
    const std::size_t block = len * geo.inner;
    auto src = p.data();
    for (std::size_t o = 0; o < geo.outer; ++o) {
      std::copy_n(src.data() + o * block, block,
                  out.data() + o * geo.len * geo.inner + offset * geo.inner);
    }
    inputs.push_back(p.impl());
    offsets.push_back(offset);
    offset += len;
  }
  auto ins = inputs;
  return make_result(std::move(out_shape), std::move(out), OpKind::concat, std::move(inputs),
                     [ins, offsets, geo, axis](const TensorImpl& o) {
                       for (std::size_t k = 0; k < ins.size(); ++k) {
                         auto& p = ins[k];
                         if (!p->requires_grad) continue;
                         auto& gp = p->ensure_grad();
                         const std::size_t block = p->shape[axis] * geo.inner;
                         for (std::size_t r = 0; r < geo.outer; ++r) {
                           const double* src =
                               o.grad.data() + r * geo.len * geo.inner + offsets[k] * geo.inner;
                           double* dst = gp.data() + r * block;
                           for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

std::vector<Tensor> split(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& sizes) {
  require_defined(a, "split");
  auto geo = axis_split(a.shape(), axis, "split");
  std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != geo.len) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) + " but axis " +
                     std::to_string(axis) + " of " + shape_str(a.shape()) + " has length " +
                     std::to_string(geo.len));
  }
  std::vector<Tensor> result;
  std::size_t offset = 0;
  auto pa = a.impl();
  auto src = a.data();
  for (auto len : sizes) {
    Shape s = a.shape();
    s[axis] = len;
    const std::size_t block = len * geo.inner;
    std::vector<double> out(geo.outer * block);
    for (std::size_t o = 0; o < geo.outer; ++o) {
      std::copy_n(src.data() + o * geo.len * geo.inner + offset * geo.inner, block,
                  out.data() + o * block);
    }
    result.push_back(make_result(std::move(s), std::move(out), OpKind::split, {pa},
                                 [pa, geo, offset, block](const TensorImpl& o) {
                                   auto& ga = pa->ensure_grad();
                                   for (std::size_t r = 0; r < geo.outer; ++r) {
                                     double* dst =
                                         ga.data() + r * geo.len * geo.inner + offset * geo.inner;
                                     const double* g = o.grad.data() + r * block;
                                     for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
                                   }
                                 }));
    offset += len;
  }
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto pa = a.impl();
  return make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()),
                     OpKind::reshape, {pa}, [pa](const TensorImpl& o) {
                       auto& ga = pa->ensure_grad();
                       for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
                     });
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_str(a.shape()));
  const std::size_t R = a.dim(0), C = a.dim(1);
  auto src = a.data();
  std::vector<double> out(R * C);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = src[r * C + c];
  auto pa = a.impl();
  return make_result({C, R}, std::move(out), OpKind::transpose, {pa},
                     [pa, R, C](const TensorImpl& o) {
                       auto& ga = pa->ensure_grad();
                       for (std::size_t r = 0; r < R; ++r)
                         for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += o.grad[c * R + r];
                     });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  require_defined(a, "softmax");
  auto geo = axis_split(a.shape(), axis, "softmax");
  if (geo.len == 0) throw ShapeError("softmax: empty axis in shape " + shape_str(a.shape()));
  auto src = a.data();
  std::vector<double> out(src.size());
  for (std::size_t o = 0; o < geo.outer; ++o) {
    for (std::size_t in = 0; in < geo.inner; ++in) {
      const std::size_t base = o * geo.len * geo.inner + in;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < geo.len; ++k) m = std::max(m, src[base + k * geo.inner]);
      if (!std::isfinite(m)) throw std::domain_error("softmax: no finite entry along axis");
      double z = 0.0;
      for (std::size_t k = 0; k < geo.len; ++k) {
        double e = std::exp(src[base + k * geo.inner] - m);
        out[base + k * geo.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < geo.len; ++k) out[base + k * geo.inner] /= z;
    }
  }
  auto pa = a.impl();
  return make_result(a.shape(), std::move(out), OpKind::softmax, {pa},
                     [pa, geo](const TensorImpl& o) {
                       auto& ga = pa->ensure_grad();
                       for (std::size_t r = 0; r < geo.outer; ++r) {
                         for (std::size_t in = 0; in < geo.inner; ++in) {
                           const std::size_t base = r * geo.len * geo.inner + in;
                           double dot = 0.0;
                           for (std::size_t k = 0; k < geo.len; ++k) {
                             auto i = base + k * geo.inner;
                             dot += o.grad[i] * o.data[i];
                           }
                           for (std::size_t k = 0; k < geo.len; ++k) {
                             auto i = base + k * geo.inner;
                             ga[i] += o.data[i] * (o.grad[i] - dot);
                           }
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  require_defined(a, "log_softmax");
  auto geo = axis_split(a.shape(), axis, "log_softmax");
  if (geo.len == 0) throw ShapeError("log_softmax: empty axis in shape " + shape_str(a.shape()));
  auto src = a.data();
  std::vector<double> out(src.size());
  for (std::size_t o = 0; o < geo.outer; ++o) {
    for (std::size_t in = 0; in < geo.inner; ++in) {
      const std::size_t base = o * geo.len * geo.inner + in;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < geo.len; ++k) m = std::max(m, src[base + k * geo.inner]);
      if (!std::isfinite(m)) throw std::domain_error("log_softmax: no finite entry along axis");
      double z = 0.0;
      for (std::size_t k = 0; k < geo.len; ++k) z += std::exp(src[base + k * geo.inner] - m);
      const double lz = m + std::log(z);
      for (std::size_t k = 0; k < geo.len; ++k) {
        out[base + k * geo.inner] = src[base + k * geo.inner] - lz;
      }
    }
  }
  auto pa = a.impl();
  return make_result(a.shape(), std::move(out), OpKind::log_softmax, {pa},
                     [pa, geo](const TensorImpl& o) {
                       auto& ga = pa->ensure_grad();
                       for (std::size_t r = 0; r < geo.outer; ++r) {
                         for (std::size_t in = 0; in < geo.inner; ++in) {
                           const std::size_t base = r * geo.len * geo.inner + in;
                           double gsum = 0.0;
                           for (std::size_t k = 0; k < geo.len; ++k) {
                             gsum += o.grad[base + k * geo.inner];
                           }
                           for (std::size_t k = 0; k < geo.len; ++k) {
                             auto i = base + k * geo.inner;
                             ga[i] += o.grad[i] - std::exp(o.data[i]) * gsum;
                           }
                         }
                       }
                     });
}

namespace {
double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
double softplus_scalar(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
}  // namespace

Tensor silu(const Tensor& a) {
  return unary(
      a, OpKind::silu, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        double s = sigmoid_scalar(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor softplus(const Tensor& a) {
  return unary(a, OpKind::softplus, softplus_scalar,
               [](double x, double) { return sigmoid_scalar(x); });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, OpKind::sigmoid, sigmoid_scalar,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, OpKind::abs, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, OpKind::exp, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, OpKind::log, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor cos(const Tensor& a) {
  return unary(
      a, OpKind::cos, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_defined(x, "layer_norm");
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t D = x.shape().back();
  if (gain.shape() != Shape{D} || bias.shape() != Shape{D}) {
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match feature size of " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / D;
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * D;
    double mu = 0.0;
    for (std::size_t j = 0; j < D; ++j) mu += row[j];
    mu /= double(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= double(D);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < D; ++j) {
      double h = (row[j] - mu) * is;
      xhat[r * D + j] = h;
      out[r * D + j] = h * gv[j] + bv[j];
    }
  }
  auto px = x.impl();
  auto pg = gain.impl();
  auto pb = bias.impl();
  return make_result(
      x.shape(), std::move(out), OpKind::layer_norm, {px, pg, pb},
      [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), D,
       rows](const TensorImpl& o) {
        const auto& g = o.grad;
        if (pg->requires_grad || pb->requires_grad) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < D; ++j) {
              if (pg->requires_grad) pg->ensure_grad()[j] += g[r * D + j] * xhat[r * D + j];
              if (pb->requires_grad) pb->ensure_grad()[j] += g[r * D + j];
            }
          }
        }
        if (px->requires_grad) {
          auto& gx = px->ensure_grad();
          const auto& gam = pg->data;
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < D; ++j) {
              double dh = g[r * D + j] * gam[j];
              s1 += dh;
              s2 += dh * xhat[r * D + j];
            }
            for (std::size_t j = 0; j < D; ++j) {
              double dh = g[r * D + j] * gam[j];
              gx[r * D + j] += inv_std[r] / double(D) *
                               (double(D) * dh - s1 - xhat[r * D + j] * s2);
            }
          }
        }
      });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto pa = a.impl();
  return make_result({}, {s}, OpKind::sum, {pa}, [pa](const TensorImpl& o) {
    auto& ga = pa->ensure_grad();
    for (auto& v : ga) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.size() == 0) throw ShapeError("mean: empty tensor " + shape_str(a.shape()));
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double n = double(a.size());
  auto pa = a.impl();
  return make_result({}, {s / n}, OpKind::mean, {pa}, [pa, n](const TensorImpl& o) {
    auto& ga = pa->ensure_grad();
    for (auto& v : ga) v += o.grad[0] / n;
  });
}

Tensor gather(const Tensor& a, const std::vector<std::size_t>& indices) {
  require_defined(a, "gather");
  auto src = a.data();
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= src.size()) {
      throw ShapeError("gather: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_str(a.shape()));
    }
    out[i] = src[indices[i]];
  }
  auto pa = a.impl();
  return make_result({indices.size()}, std::move(out), OpKind::gather, {pa},
                     [pa, indices](const TensorImpl& o) {
                       auto& ga = pa->ensure_grad();
                       for (std::size_t i = 0; i < indices.size(); ++i) ga[indices[i]] += o.grad[i];
                     });
}

Tensor scatter_add(const Tensor& src, const std::vector<std::size_t>& indices,
                   std::size_t out_size) {
  require_defined(src, "scatter_add");
  if (src.size() != indices.size()) {
    throw ShapeError("scatter_add: " + std::to_string(indices.size()) + " indices for source " +
                     shape_str(src.shape()));
  }
  std::vector<double> out(out_size, 0.0);
  auto sv = src.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= out_size) {
      throw ShapeError("scatter_add: index " + std::to_string(indices[i]) +
                       " out of range for output size " + std::to_string(out_size));
    }
    out[indices[i]] += sv[i];
  }
  auto ps = src.impl();
  return make_result({out_size}, std::move(out), OpKind::scatter_add, {ps},
                     [ps, indices](const TensorImpl& o) {
                       auto& gs = ps->ensure_grad();
                       for (std::size_t i = 0; i < indices.size(); ++i) gs[i] += o.grad[indices[i]];
                     });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids) {
  require_defined(table, "embedding_lookup");
  if (table.rank() != 2) {
    throw ShapeError("embedding_lookup: table must be a matrix, got " + shape_str(table.shape()));
  }
  const std::size_t V = table.dim(0), D = table.dim(1);
  auto tv = table.data();
  std::vector<double> out(ids.size() * D);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= V) {
      throw ShapeError("embedding_lookup: id " + std::to_string(ids[i]) + " out of range for " +
                       shape_str(table.shape()));
    }
    std::copy_n(tv.data() + ids[i] * D, D, out.data() + i * D);
  }
  auto pt = table.impl();
  return make_result({ids.size(), D}, std::move(out), OpKind::embedding_lookup, {pt},
                     [pt, ids, D](const TensorImpl& o) {
                       auto& gt = pt->ensure_grad();
                       for (std::size_t i = 0; i < ids.size(); ++i)
                         for (std::size_t j = 0; j < D; ++j) gt[ids[i] * D + j] += o.grad[i * D + j];
                     });
}

Tensor ssm_scan(const Tensor& x, const Tensor& a, const Tensor& b, const Tensor& c) {
  require_defined(x, "ssm_scan");
  if (x.rank() != 2) throw ShapeError("ssm_scan: x must be (L, channels), got " + shape_str(x.shape()));
  const std::size_t L = x.dim(0), Ch = x.dim(1);
  if (a.shape() != Shape{L}) {
    throw ShapeError("ssm_scan: decay " + shape_str(a.shape()) + " does not match x " +
                     shape_str(x.shape()));
  }
  if (b.rank() != 2 || c.rank() != 2 || b.dim(0) != L || c.dim(0) != L || b.dim(1) != c.dim(1)) {
    throw ShapeError("ssm_scan: B " + shape_str(b.shape()) + " / C " + shape_str(c.shape()) +
                     " do not match x " + shape_str(x.shape()));
  }
  const std::size_t N = b.dim(1);
  for (double v : x.data())
    if (std::isnan(v)) throw std::domain_error("ssm_scan: NaN in input sequence");
  for (double v : a.data())
    if (std::isnan(v)) throw std::domain_error("ssm_scan: NaN in decay");

  auto xv = x.data();
  auto av = a.data();
  auto bv = b.data();
  auto cv = c.data();
  // states[t] holds h_t (Ch x N); kept for the reverse recurrence.
  std::vector<double> states(L * Ch * N, 0.0);
  std::vector<double> y(L * Ch, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    double* h = states.data() + t * Ch * N;
    const double* hp = t ? states.data() + (t - 1) * Ch * N : nullptr;
    const double at = av[t];
    const double* bt = bv.data() + t * N;
    const double* ct = cv.data() + t * N;
    for (std::size_t ch = 0; ch < Ch; ++ch) {
      const double xt = xv[t * Ch + ch];
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        double hv = (hp ? at * hp[ch * N + n] : 0.0) + xt * bt[n];
        h[ch * N + n] = hv;
        acc += hv * ct[n];
      }
      y[t * Ch + ch] = acc;
    }
  }

  auto px = x.impl();
  auto pa = a.impl();
  auto pb = b.impl();
  auto pc = c.impl();
  return make_result(
      {L, Ch}, std::move(y), OpKind::ssm_scan, {px, pa, pb, pc},
      [px, pa, pb, pc, states = std::move(states), L, Ch, N](const TensorImpl& o) {
        const auto& gy = o.grad;
        const auto& xv = px->data;
        const auto& av = pa->data;
        const auto& bv = pb->data;
        const auto& cv = pc->data;
        std::vector<double>* gx = px->requires_grad ? &px->ensure_grad() : nullptr;
        std::vector<double>* ga = pa->requires_grad ? &pa->ensure_grad() : nullptr;
        std::vector<double>* gb = pb->requires_grad ? &pb->ensure_grad() : nullptr;
        std::vector<double>* gc = pc->requires_grad ? &pc->ensure_grad() : nullptr;
        // g holds dLoss/dh_t, carried backwards through h_{t+1} = a_{t+1} h_t + ...
        std::vector<double> g(Ch * N, 0.0);
        for (std::size_t step = L; step-- > 0;) {
          const double* h = states.data() + step * Ch * N;
          const double* ct = cv.data() + step * N;
          const double* bt = bv.data() + step * N;
          if (step + 1 < L) {
            const double an = av[step + 1];
            for (auto& v : g) v *= an;
          }
          for (std::size_t ch = 0; ch < Ch; ++ch) {
            const double gyt = gy[step * Ch + ch];
            for (std::size_t n = 0; n < N; ++n) {
              g[ch * N + n] += gyt * ct[n];
              if (gc) (*gc)[step * N + n] += gyt * h[ch * N + n];
            }
          }
          for (std::size_t ch = 0; ch < Ch; ++ch) {
            const double xt = xv[step * Ch + ch];
            double dx = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
              const double gv = g[ch * N + n];
              dx += gv * bt[n];
              if (gb) (*gb)[step * N + n] += gv * xt;
            }
            if (gx) (*gx)[step * Ch + ch] += dx;
          }
          if (ga && step > 0) {
            const double* hp = states.data() + (step - 1) * Ch * N;
            double da = 0.0;
            for (std::size_t i = 0; i < Ch * N; ++i) da += g[i] * hp[i];
            (*ga)[step] += da;
          }
        }
      });
}

}  // namespace pie::ops
