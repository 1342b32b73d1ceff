#include "pie/moe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pie/ops.hpp"

namespace pie::moe {

ExpertParams ExpertParams::create(ParameterStore& store, const std::string& prefix,
                                  std::size_t n_experts, std::size_t model_dim, std::size_t hidden) {
  ExpertParams p;
  for (std::size_t i = 0; i < n_experts; ++i) {
    const std::string name = prefix + ".expert" + std::to_string(i);
    p.up.push_back(Linear::create(store, name + ".w_in", model_dim, hidden));
    p.down.push_back(Linear::create(store, name + ".w_out", hidden, model_dim));
  }
  return p;
}

Tensor ExpertParams::expert(std::size_t i, const Tensor& x) const {
  return down.at(i)(ops::silu(up.at(i)(x)));
}

double GateDecision::weight_of(std::size_t expert) const {
  for (std::size_t i = 0; i < experts.size(); ++i)
    if (experts[i] == expert) return weights[i];
  return 0.0;
}

double GateDecision::weight_sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

void GateDecision::refresh_weights() {
  experts.clear();
  weights.clear();
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < ranked.size(); ++j)
    if (destination[j] >= 0) m = std::max(m, logits[j]);
  if (!std::isfinite(m)) return;
  double z = 0.0;
  for (std::size_t j = 0; j < ranked.size(); ++j)
    if (destination[j] >= 0) z += std::exp(logits[j] - m);
  // Group by destination, keeping the rank order of first appearance.
  for (std::size_t j = 0; j < ranked.size(); ++j) {
    if (destination[j] < 0) continue;
    const auto e = static_cast<std::size_t>(destination[j]);
    const double w = std::exp(logits[j] - m) / z;
    auto it = std::find(experts.begin(), experts.end(), e);
    if (it == experts.end()) {
      experts.push_back(e);
      weights.push_back(w);
    } else {
      weights[static_cast<std::size_t>(it - experts.begin())] += w;
    }
  }
}

std::vector<double> top_k_mask(std::span<const double> v, std::size_t k) {
  if (k < 1 || k > v.size()) {
    throw std::invalid_argument("top-k: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(v.size()) + "]");
  }
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  std::vector<double> out(v.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < k; ++i) out[idx[i]] = v[idx[i]];
  return out;
}

GateDecision gate_logits(std::size_t token, std::span<const double> logits, std::size_t k, Rng* rng,
                         double p_drop) {
  auto masked = top_k_mask(logits, k);
  GateDecision d;
  d.token = token;
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  for (std::size_t j = 0; j < k; ++j) {
    d.ranked.push_back(idx[j]);
    d.logits.push_back(masked[idx[j]]);
    d.destination.push_back(static_cast<int>(idx[j]));
  }
  d.refresh_weights();
  if (rng && p_drop > 0.0) {
    bool any = false;
    for (std::size_t j = 1; j < k; ++j) {
      if (rng->bernoulli(p_drop)) {
        d.dropped.emplace_back(d.ranked[j], d.weight_of(d.ranked[j]));
        d.destination[j] = -1;
        any = true;
      }
    }
    if (any) d.refresh_weights();
  }
  return d;
}

GateDecision gate(std::span<const double> x, const Tensor& w_gate, std::size_t k, bool training,
                  Rng* rng, double p_drop) {
  if (w_gate.rank() != 2 || w_gate.dim(0) != x.size()) {
    throw ShapeError("gate: token of size " + std::to_string(x.size()) +
                     " does not match gate weights " + shape_str(w_gate.shape()));
  }
  const std::size_t D = w_gate.dim(0), n = w_gate.dim(1);
  std::vector<double> logits(n, 0.0);
  auto w = w_gate.data();
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t e = 0; e < n; ++e) logits[e] += x[i] * w[i * n + e];
  return gate_logits(0, logits, k, training ? rng : nullptr, p_drop);
}

std::size_t default_capacity(std::size_t batch_tokens, std::size_t n_experts, double factor) {
  if (n_experts == 0) throw std::invalid_argument("capacity: no experts");
  auto cap = static_cast<std::size_t>(std::ceil(factor * double(batch_tokens) / double(n_experts)));
  return std::max<std::size_t>(cap, 1);
}

void apply_capacity(std::vector<GateDecision>& decisions, std::size_t n_experts, std::size_t capacity) {
  if (capacity < 1) throw std::invalid_argument("capacity must be at least 1");
  std::vector<std::size_t> load(n_experts, 0);
  for (auto& d : decisions) {
    std::vector<bool> admitted(n_experts, false);
    const std::size_t k = d.ranked.size();
    for (std::size_t j = 0; j < k; ++j) {
      if (d.destination[j] < 0) continue;
      const std::size_t e = d.ranked[j];
      // Mass parked at e: this entry plus anything already forwarded to it.
      bool holds_mass = false;
      for (std::size_t i = 0; i < k; ++i) holds_mass |= d.destination[i] == static_cast<int>(e);
      if (!holds_mass || admitted[e]) continue;
      if (load.at(e) < capacity) {
        ++load[e];
        admitted[e] = true;
        continue;
      }
      std::size_t next = k;
      for (std::size_t i = j + 1; i < k; ++i) {
        if (d.destination[i] >= 0) {
          next = i;
          break;
        }
      }
      const double mass = d.weight_of(e);
      const int target = next < k ? static_cast<int>(d.ranked[next]) : -1;
      for (std::size_t i = 0; i < k; ++i)
        if (d.destination[i] == static_cast<int>(e)) d.destination[i] = target;
      if (target >= 0) {
        d.redistributed.push_back({e, static_cast<std::size_t>(target), mass});
      } else {
        d.shed.push_back({e, mass});
      }
      d.refresh_weights();
    }
  }
}

MoeParams MoeParams::create(ParameterStore& store, const std::string& prefix, std::size_t n_experts,
                            std::size_t model_dim, std::size_t hidden) {
  MoeParams p;
  p.experts = ExpertParams::create(store, prefix, n_experts, model_dim, hidden);
  p.w_gate = store.get_or_create(prefix + ".w_gate", {model_dim, n_experts}, Init::uniform_fan_in, model_dim);
  return p;
}

MoeOutput forward(const MoeParams& params, const Tensor& x, const GateConfig& config, Rng* rng) {
  const std::size_t n = params.experts.count();
  if (x.rank() != 2 || x.dim(1) != params.w_gate.dim(0)) {
    throw ShapeError("moe: input " + shape_str(x.shape()) + " does not match gate weights " +
                     shape_str(params.w_gate.shape()));
  }
  if (config.k < 1 || config.k > n) {
    throw std::invalid_argument("moe: k = " + std::to_string(config.k) + " with " +
                                std::to_string(n) + " experts");
  }
  const std::size_t L = x.dim(0);
  auto logits = ops::matmul(x, params.w_gate);  // (L, n)
  auto lv = logits.data();

  MoeOutput out;
  for (std::size_t t = 0; t < L; ++t) {
    out.decisions.push_back(
        gate_logits(t, lv.subspan(t * n, n), config.k, rng, rng ? config.p_drop : 0.0));
  }
  if (config.use_capacity) {
    apply_capacity(out.decisions, n, config.capacity.value_or(default_capacity(L, n, config.capacity_factor)));
  }

  // Per-token weights as a differentiable function of the surviving logits:
  // softmax over survivors, then summed into their destination experts.
  std::vector<Tensor> rows;
  rows.reserve(L);
  for (const auto& d : out.decisions) {
    std::vector<std::size_t> src, dst;
    for (std::size_t j = 0; j < d.ranked.size(); ++j) {
      if (d.destination[j] < 0) continue;
      src.push_back(d.token * n + d.ranked[j]);
      dst.push_back(static_cast<std::size_t>(d.destination[j]));
    }
    if (src.empty()) {
      rows.push_back(Tensor::zeros({1, n}));
      continue;
    }
    auto w = ops::softmax(ops::gather(logits, src), 0);
    rows.push_back(ops::reshape(ops::scatter_add(w, dst, n), {1, n}));
  }
  auto weights = ops::concat(rows, 0);  // (L, n)
  auto columns = ops::split(weights, 1, std::vector<std::size_t>(n, 1));

  Tensor y;
  for (std::size_t e = 0; e < n; ++e) {
    bool used = std::any_of(out.decisions.begin(), out.decisions.end(),
                            [e](const GateDecision& d) { return d.weight_of(e) > 0.0; });
    if (!used) continue;
    auto term = ops::mul(params.experts.expert(e, x), columns[e]);
    y = y.defined() ? ops::add(y, term) : term;
  }
  out.y = y.defined() ? y : Tensor::zeros({L, x.dim(1)});
  return out;
}

}  // namespace pie::moe
