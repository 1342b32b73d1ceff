#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pie/params.hpp"
#include "pie/rng.hpp"

namespace pie::moe {

/// n two-layer SiLU feed-forward experts, D -> hidden -> D.
struct ExpertParams {
  std::vector<Linear> up;
  std::vector<Linear> down;

  static ExpertParams create(ParameterStore& store, const std::string& prefix, std::size_t n_experts,
                             std::size_t model_dim, std::size_t hidden);
  std::size_t count() const { return up.size(); }
  Tensor expert(std::size_t i, const Tensor& x) const;
};

struct Transfer {
  std::size_t from = 0;
  std::size_t to = 0;
  double mass = 0.0;
};

struct Shed {
  std::size_t expert = 0;
  double mass = 0.0;
};

/// Routing outcome for one token.
///
/// `ranked` is the top-k expert list in rank order; `destination[j]` is the
/// expert that finally carries ranked[j]'s softmax mass, or -1 if that mass was
/// dropped. Final weights are the surviving masses renormalized to 1.
struct GateDecision {
  std::size_t token = 0;
  std::vector<std::size_t> ranked;
  std::vector<double> logits;  // logits of `ranked`, same order
  std::vector<int> destination;
  std::vector<std::size_t> experts;  // experts with non-zero final weight, rank order
  std::vector<double> weights;       // aligned with `experts`
  std::vector<std::pair<std::size_t, double>> dropped;  // secondary dropout
  std::vector<Transfer> redistributed;                 // capacity overflow moves
  std::vector<Shed> shed;  // overflow with no lower-ranked expert left

  double weight_of(std::size_t expert) const;
  double weight_sum() const;
  // Recomputes `experts`/`weights` from `logits` and `destination`.
  void refresh_weights();
};

/// Keeps the k largest entries and replaces the rest with -inf. Ties go to the
/// lower index. Throws std::invalid_argument unless 1 <= k <= v.size().
std::vector<double> top_k_mask(std::span<const double> v, std::size_t k);

/// Top-k selection + softmax over the survivors; when `rng` is given, every
/// selected expert except the arg-max is dropped with probability p_drop and
/// the remaining weights are renormalized.
GateDecision gate_logits(std::size_t token, std::span<const double> logits, std::size_t k,
                         Rng* rng = nullptr, double p_drop = 0.0);

/// gate_logits(x . W_g). x has D entries, w_gate is (D, n).
GateDecision gate(std::span<const double> x, const Tensor& w_gate, std::size_t k, bool training,
                  Rng* rng, double p_drop);

/// Admits tokens in batch order; an expert already holding `capacity` tokens
/// passes the overflowing token's mass to that token's next-ranked surviving
/// expert, or sheds it when none is left.
void apply_capacity(std::vector<GateDecision>& decisions, std::size_t n_experts, std::size_t capacity);

std::size_t default_capacity(std::size_t batch_tokens, std::size_t n_experts, double factor = 1.25);

struct GateConfig {
  std::size_t k = 2;
  double p_drop = 0.1;
  double capacity_factor = 1.25;
  std::optional<std::size_t> capacity;  // overrides capacity_factor when set
  bool use_capacity = true;
};

struct MoeParams {
  ExpertParams experts;
  Tensor w_gate;  // (D, n)

  static MoeParams create(ParameterStore& store, const std::string& prefix, std::size_t n_experts,
                          std::size_t model_dim, std::size_t hidden);
};

struct MoeOutput {
  Tensor y;  // (L, D)
  std::vector<GateDecision> decisions;
};

/// y_t = sum_e G(x_t)_e E_e(x_t). The routing pattern is a fixed selection;
/// gradients reach W_g through the softmax over the surviving logits. When
/// `rng` is null the layer runs in inference mode (no dropout).
MoeOutput forward(const MoeParams& params, const Tensor& x, const GateConfig& config, Rng* rng = nullptr);

}  // namespace pie::moe
