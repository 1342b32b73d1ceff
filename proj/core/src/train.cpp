#include "pie/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "pie/ops.hpp"

namespace pie::train {

AdamW::AdamW(ParameterStore& store, AdamWConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr >= 0.0) || !(cfg.weight_decay >= 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
      !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.eps > 0.0)) {
    throw std::invalid_argument("AdamW: invalid hyperparameters");
  }
  for (const auto& name : store.names()) {
    params_.push_back(store.get(name));
    m_.emplace_back(params_.back().size(), 0.0);
    v_.emplace_back(params_.back().size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& param = params_[p];
    if (!param.has_grad()) continue;
    auto g = param.grad();
    auto w = param.mutable_data();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& name : store.names()) {
      auto t = store.get(name);
      if (!t.has_grad()) continue;
      for (auto& g : t.impl()->grad) g *= s;
    }
  }
  return norm;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["parts"] = {{"planning", r.planning}, {"velocity", r.velocity}, {"action", r.action}};
  j["val_pdms"] = r.val_pdms ? nlohmann::ordered_json(*r.val_pdms) : nlohmann::ordered_json(nullptr);
  j["wall_time"] = r.wall_time;
  return j.dump();
}

double mean_pdms(const model::PieModel& model, const anchors::AnchorBank& bank, std::span<const world::Scenario> set,
                 const pdm::ScorerConfig& scorer) {
  if (set.empty()) return 0.0;
  double s = 0.0;
  for (const auto& sc : set) s += pdm::pdms(pdm::score_trajectory(model.plan(sc, bank), sc, scorer));
  return s / double(set.size());
}

loss::LossParts evaluate_loss(const model::PieModel& model, const anchors::AnchorBank& bank, const world::Scenario& sc,
                              double match_threshold) {
  auto out = model.forward(sc, bank, nullptr, loss::teacher_anchor(bank, sc));
  return loss::compute_parts(out, sc, match_threshold);
}

std::vector<EpochRecord> train(model::PieModel& model, const anchors::AnchorBank& bank,
                               std::span<const world::Scenario> train_set, std::span<const world::Scenario> val_set,
                               const TrainConfig& cfg, const TrainHooks& hooks) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (cfg.batch_size == 0 || cfg.epochs == 0) throw std::invalid_argument("train: epochs and batch size must be positive");
  auto& store = model.params();
  AdamW opt(store, cfg.optimizer);
  Rng shuffle_rng = Rng(cfg.seed).fork(1);
  Rng dropout_rng = Rng(cfg.seed).fork(2);
  const auto start = std::chrono::steady_clock::now();

  std::vector<model::AnchorChoice> teachers;
  teachers.reserve(train_set.size());
  for (const auto& sc : train_set) teachers.push_back(loss::teacher_anchor(bank, sc));

  std::vector<EpochRecord> log;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double inv = 1.0 / double(end - b);
      store.zero_grad();
      for (std::size_t i = b; i < end; ++i) {
        const auto& sc = train_set[order[i]];
        auto out = model.forward(sc, bank, &dropout_rng, teachers[order[i]]);
        auto parts = loss::compute_parts(out, sc, cfg.match_threshold);
        Tensor total;
        try {
          total = loss::total_loss(parts, cfg.weights);
        } catch (const std::domain_error& e) {
          throw TrainingAborted("epoch " + std::to_string(epoch) + ", scenario '" + sc.id + "': " + e.what());
        }
        rec.train_loss += total.item();
        rec.planning += parts.planning.item();
        rec.velocity += parts.velocity.item();
        rec.action += parts.action.item();
        backward(ops::scale(total, inv));
      }
      if (!std::isfinite(store.grad_norm())) {
        throw TrainingAborted("epoch " + std::to_string(epoch) + ": non-finite gradient");
      }
      clip_grad_norm(store, cfg.grad_clip);
      opt.step();
    }
    const double n = double(train_set.size());
    rec.train_loss /= n;
    rec.planning /= n;
    rec.velocity /= n;
    rec.action /= n;
    const bool validate = !val_set.empty() &&
                          ((cfg.val_every && epoch % cfg.val_every == 0) || epoch == cfg.epochs);
    if (validate) rec.val_pdms = mean_pdms(model, bank, val_set, cfg.scorer);
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!hooks.checkpoint.empty()) save_checkpoint(hooks.checkpoint, snapshot(store, model.config().hash()));
    log.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return log;
}

}  // namespace pie::train
