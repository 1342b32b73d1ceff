#include "pie/grad_suite.hpp"

#include <functional>
#include <map>

#include "pie/fusion.hpp"
#include "pie/generator.hpp"
#include "pie/grad_check.hpp"
#include "pie/interaction.hpp"
#include "pie/losses.hpp"
#include "pie/model.hpp"
#include "pie/moe.hpp"
#include "pie/ops.hpp"
#include "pie/red.hpp"
#include "pie/ssm.hpp"

namespace pie {

namespace {

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Tensor rand(const Shape& s, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel(s));
    for (auto& x : v) x = rng_.uniform(lo, hi);
    return Tensor(s, std::move(v), true);
  }

  // Values bounded away from zero, for kinks and poles.
  Tensor rand_away(const Shape& s, double lo, double hi) {
    std::vector<double> v(numel(s));
    for (auto& x : v) x = (rng_.uniform() < 0.5 ? -1.0 : 1.0) * rng_.uniform(lo, hi);
    return Tensor(s, std::move(v), true);
  }

  // sum(out * w) with fixed random w, so symmetric outputs keep informative gradients.
  Tensor project(const Tensor& out) {
    auto& w = weights_[out.size()];
    if (w.empty()) {
      w.resize(out.size());
      for (auto& x : w) x = rng_.uniform(-1.0, 1.0);
    }
    return ops::sum(ops::mul(ops::reshape(out, {out.size()}), Tensor::vector(w)));
  }

  void check(const std::string& name, bool primitive, const std::function<Tensor()>& f,
             std::vector<Tensor> inputs) {
    GradCase c;
    c.name = name;
    c.primitive = primitive;
    c.tolerance = primitive ? kPrimitiveTolerance : kCompositeTolerance;
    for (auto& x : inputs) {
      auto r = grad_check([&] { return project(f()); }, x);
      c.finite = c.finite && r.finite;
      c.max_rel_error = std::max(c.max_rel_error, r.max_rel_error);
      c.checked += x.size();
    }
    cases_.push_back(c);
  }

  void push(GradCase c) { cases_.push_back(std::move(c)); }
  std::vector<GradCase> take() { return std::move(cases_); }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
  std::map<std::size_t, std::vector<double>> weights_;
  std::vector<GradCase> cases_;
};

void primitives(Suite& s) {
  using namespace ops;
  {
    auto a = s.rand({3, 4}), b = s.rand({4, 2});
    s.check("matmul", true, [=] { return matmul(a, b); }, {a, b});
  }
  {
    auto a = s.rand({3, 4}), b = s.rand({4});
    s.check("add (broadcast)", true, [=] { return add(a, b); }, {a, b});
    s.check("sub (broadcast)", true, [=] { return sub(a, b); }, {a, b});
    s.check("mul (broadcast)", true, [=] { return mul(a, b); }, {a, b});
  }
  {
    auto a = s.rand({3, 4}), b = s.rand_away({3, 4}, 0.5, 2.0);
    s.check("div", true, [=] { return div(a, b); }, {a, b});
    s.check("scale", true, [=] { return scale(a, -1.7); }, {a});
    s.check("add_scalar", true, [=] { return add_scalar(a, 0.3); }, {a});
    s.check("neg", true, [=] { return neg(a); }, {a});
    s.check("transpose", true, [=] { return transpose(a); }, {a});
    s.check("reshape", true, [=] { return reshape(a, {2, 6}); }, {a});
    s.check("softmax", true, [=] { return softmax(a, 1); }, {a});
    s.check("log_softmax", true, [=] { return log_softmax(a, 0); }, {a});
    s.check("silu", true, [=] { return silu(a); }, {a});
    s.check("softplus", true, [=] { return softplus(a); }, {a});
    s.check("sigmoid", true, [=] { return sigmoid(a); }, {a});
    s.check("exp", true, [=] { return exp(a); }, {a});
    s.check("cos", true, [=] { return cos(a); }, {a});
    s.check("sum", true, [=] { return sum(a); }, {a});
    s.check("mean", true, [=] { return mean(a); }, {a});
    s.check("abs", true, [=] { return abs(b); }, {b});
    s.check("log", true, [=] { return log(abs(b)); }, {b});
  }
  {
    auto a = s.rand({2, 3}), b = s.rand({2, 2});
    s.check("concat", true, [=] { return concat({a, b}, 1); }, {a, b});
    auto c = s.rand({2, 5});
    s.check("split", true, [=] { auto p = split(c, 1, {2, 3}); return mul(p[0], reshape(sum(p[1]), {})); }, {c});
  }
  {
    auto x = s.rand({3, 5}), g = s.rand({5}, 0.5, 1.5), b = s.rand({5});
    s.check("layer_norm", true, [=] { return layer_norm(x, g, b); }, {x, g, b});
  }
  {
    auto a = s.rand({3, 4});
    s.check("gather", true, [=] { return gather(a, {0, 5, 5, 11}); }, {a});
    auto src = s.rand({4});
    s.check("scatter_add", true, [=] { return scatter_add(src, {2, 0, 2, 5}, 6); }, {src});
    auto table = s.rand({5, 3});
    s.check("embedding_lookup", true, [=] { return embedding_lookup(table, {4, 1, 4}); }, {table});
  }
  {
    auto x = s.rand({6, 2}), a = s.rand({6}, 0.2, 0.99), b = s.rand({6, 3}), c = s.rand({6, 3});
    s.check("ssm_scan", true, [=] { return ssm_scan(x, a, b, c); }, {x, a, b, c});
  }
}

void composites(Suite& s) {
  constexpr std::size_t D = 8, N = 4;
  ParameterStore store(s.rng().next_u64());
  {
    auto block = ssm::BlockParams::create(store, "mamba", D, N);
    auto x = s.rand({5, D});
    s.check("mamba_block", false, [=] { return ssm::block_forward(block, x); },
            {x, block.decay_bias, block.in_proj.weight, block.out_proj.bias});
  }
  {
    auto a = fusion::Branch::create(store, "fa", 1, D, N), b = fusion::Branch::create(store, "fb", 1, D, N);
    auto img = s.rand({2, 2, D}), lid = s.rand({2, 2, D});
    s.check("bidirectional_fuse", false, [=] {
      auto f = fusion::bidirectional_fuse({fusion::Modality::image, img}, {fusion::Modality::lidar, lid}, a, b);
      return ops::concat({ops::reshape(f.image.values, {4, D}), ops::reshape(f.lidar.values, {4, D})}, 0);
    }, {img, lid});
  }
  {
    auto att = attention::AttentionParams::create(store, "att", D, 2);
    auto q = s.rand({3, D}), kv = s.rand({5, D});
    s.check("attention", false, [=] { return attention::attend(att, q, kv, kv); }, {q, kv, att.key.weight});
  }
  {
    auto moe = moe::MoeParams::create(store, "moe", 3, D, 2 * D);
    auto x = s.rand({6, D});
    moe::GateConfig gc;
    s.check("moe_forward", false, [=] { return moe::forward(moe, x, gc).y; },
            {x, moe.w_gate, moe.experts.up[0].weight, moe.experts.down[2].bias});
  }
  {
    red::DecoderConfig dc;
    dc.model_dim = D;
    dc.state_dim = N;
    dc.n_layers = 1;
    dc.n_agent_slots = 2;
    dc.n_heads = 2;
    auto layer = red::LayerParams::create(store, "red", dc);
    auto q = s.rand({dc.n_queries(), D}), enc = s.rand({6, D});
    s.check("red_layer", false, [=] {
      auto out = red::red_layer(layer, q, enc, dc);
      return ops::concat({out.intermediate, out.final}, 0);
    }, {q, enc, layer.moe.w_gate, layer.cross_second.value.weight});
  }
  for (auto mode : {interaction::Mode::shared, interaction::Mode::unshared}) {
    const std::string tag = mode == interaction::Mode::shared ? "shared" : "unshared";
    auto ip = interaction::InteractionParams::create(store, "ami." + tag, D, 2, mode);
    auto t = s.rand({1, D}), a = s.rand({1, D}), m = s.rand({3, D});
    s.check("action_motion_interact (" + tag + ")", false,
            [=] { return interaction::interact(ip, {t, a, m}); }, {t, a, m, ip.first.query.weight});
  }
}

anchors::AnchorBank toy_bank() {
  anchors::AnchorBank bank;
  for (std::size_t c = 0; c < kActionClasses; ++c) {
    for (std::size_t i = 0; i < anchors::kAnchorsPerClass; ++i) {
      Trajectory t;
      const double v = 2.0 + 0.4 * double(i);
      const double curve = (1.0 - double(c)) * 0.02;
      for (std::size_t k = 0; k < kWaypoints; ++k) {
        const double x = v * kWaypointDt * double(k + 1);
        t.points[k] = {x, curve * x * x, 0.0};
      }
      recompute_headings(t);
      bank.classes[c].push_back(t);
    }
  }
  return bank;
}

void full_model(Suite& s) {
  world::GeneratorConfig gc;
  gc.image_rows = 2;
  gc.image_cols = 4;
  gc.lidar_rows = 2;
  gc.lidar_cols = 2;
  gc.max_agents = 3;
  const auto sc = world::generate(s.rng().next_u64(), world::Template::t_junction, gc);

  model::ModelConfig mc;
  mc.model_dim = 8;
  mc.state_dim = 4;
  mc.fusion_layers = 1;
  mc.decoder.n_layers = 1;
  mc.decoder.n_agent_slots = 2;
  mc.decoder.n_heads = 2;
  mc.decoder.expert_hidden = 8;
  mc.image_rows = gc.image_rows;
  mc.image_cols = gc.image_cols;
  mc.lidar_rows = gc.lidar_rows;
  mc.lidar_cols = gc.lidar_cols;
  mc.seed = s.rng().next_u64();
  model::PieModel model(mc);
  const auto bank = toy_bank();
  const auto teacher = loss::teacher_anchor(bank, sc);
  auto loss = [&] {
    auto out = model.forward(sc, bank, nullptr, teacher);
    return loss::total_loss(loss::compute_parts(out, sc), {});
  };
  GradCase c;
  c.name = "full model -> training loss";
  c.tolerance = kCompositeTolerance;
  for (const auto& name : model.params().names()) {
    auto r = grad_check(loss, model.params().get(name));
    c.finite = c.finite && r.finite;
    c.max_rel_error = std::max(c.max_rel_error, r.max_rel_error);
    c.checked += model.params().get(name).size();
  }
  s.push(c);
}

}  // namespace

std::vector<GradCase> run_grad_suite(std::uint64_t seed) {
  Suite s(seed);
  primitives(s);
  composites(s);
  full_model(s);
  return s.take();
}

}  // namespace pie
