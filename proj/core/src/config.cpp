#include "pie/config.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pie::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string_view type_name(Type t) {
  switch (t) {
    case Type::integer: return "integer";
    case Type::real: return "number";
    case Type::boolean: return "boolean (true/false)";
    case Type::text: return "string";
  }
  return "?";
}

bool parse_int(const std::string& s, std::int64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  is >> out;
  return is && is.peek() == std::char_traits<char>::eof();
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "off") return out = false, true;
  return false;
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string env_name(const std::string& key) {
  std::string out = "PIE_";
  for (char c : key) out += (c == '.' || c == '-') ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void RunConfig::declare(const std::string& key, Type type, std::string value) {
  entries_[key] = Entry{type, std::move(value)};
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  const model::ModelConfig m;
  const world::GeneratorConfig g;
  const pdm::ScorerConfig s;
  const train::TrainConfig t;
  auto I = [&](const std::string& k, std::int64_t v) { c.declare(k, Type::integer, std::to_string(v)); };
  auto R = [&](const std::string& k, double v) { c.declare(k, Type::real, fmt_real(v)); };
  auto B = [&](const std::string& k, bool v) { c.declare(k, Type::boolean, v ? "true" : "false"); };
  auto S = [&](const std::string& k, std::string_view v) { c.declare(k, Type::text, std::string(v)); };

  I("seed", 0);

  I("model.dim", std::int64_t(m.model_dim));
  I("model.state_dim", std::int64_t(m.state_dim));
  S("model.fusion", model::to_string(m.fusion));
  I("model.fusion_layers", std::int64_t(m.fusion_layers));
  B("model.sinusoidal_positions", m.sinusoidal_positions);
  S("model.interaction", model::to_string(m.interaction));
  I("red.layers", std::int64_t(m.decoder.n_layers));
  I("red.agent_slots", std::int64_t(m.decoder.n_agent_slots));
  I("red.heads", std::int64_t(m.decoder.n_heads));
  B("red.reasoning", m.decoder.reasoning);
  B("red.moe", m.decoder.moe);
  I("moe.experts", std::int64_t(m.decoder.n_experts));
  I("moe.hidden", std::int64_t(m.decoder.expert_hidden));
  I("moe.k", std::int64_t(m.decoder.gate.k));
  R("moe.p_drop", m.decoder.gate.p_drop);
  R("moe.capacity_factor", m.decoder.gate.capacity_factor);
  B("moe.use_capacity", m.decoder.gate.use_capacity);

  I("gen.max_agents", std::int64_t(g.max_agents));
  R("gen.unknown_rate", g.unknown_command_rate);
  R("gen.weight.straight_road", g.template_weights[0]);
  R("gen.weight.left_turn", g.template_weights[1]);
  R("gen.weight.right_turn", g.template_weights[2]);
  R("gen.weight.t_junction", g.template_weights[3]);
  R("gen.weight.crosswalk", g.template_weights[4]);
  R("gen.speed_cap", g.speed_cap);
  R("gen.lookahead", g.lookahead);
  R("gen.lane_width", g.lane_width);
  R("gen.shoulder", g.shoulder);
  I("gen.image_rows", std::int64_t(g.image_rows));
  I("gen.image_cols", std::int64_t(g.image_cols));
  R("gen.image_noise", g.image_noise);
  I("gen.lidar_rows", std::int64_t(g.lidar_rows));
  I("gen.lidar_cols", std::int64_t(g.lidar_cols));
  R("gen.bev_extent", g.bev_extent);
  R("gen.bev_cell", g.bev_cell);
  I("gen.placement_attempts", std::int64_t(g.placement_attempts));
  I("gen.max_regenerations", std::int64_t(g.max_regenerations));

  R("pdm.dt", s.dt);
  R("pdm.ttc_horizon", s.ttc_horizon);
  R("pdm.max_lon_accel", s.max_lon_accel);
  R("pdm.max_jerk", s.max_jerk);
  R("pdm.lk_max_offset", s.lk_max_offset);
  R("pdm.ec_max_accel_change", s.ec_max_accel_change);
  R("pdm.ddc_min_progress", s.ddc_min_progress);
  R("pdm.ep_min_expert_progress", s.ep_min_expert_progress);
  R("pdm.ego_length", s.ego_length);
  R("pdm.ego_width", s.ego_width);
  R("pdm.rear_axle_to_center", s.rear_axle_to_center);

  I("train.epochs", std::int64_t(t.epochs));
  I("train.batch_size", std::int64_t(t.batch_size));
  R("train.lr", t.optimizer.lr);
  R("train.weight_decay", t.optimizer.weight_decay);
  R("train.beta1", t.optimizer.beta1);
  R("train.beta2", t.optimizer.beta2);
  R("train.eps", t.optimizer.eps);
  R("train.grad_clip", t.grad_clip);
  R("train.match_threshold", t.match_threshold);
  R("train.lambda_v", t.weights.lambda_v);
  R("train.lambda_a", t.weights.lambda_a);
  I("train.val_every", std::int64_t(t.val_every));

  I("anchors.per_class", std::int64_t(anchors::kAnchorsPerClass));

  I("data.train", 512);
  I("data.val", 64);
  I("data.test", 64);
  I("jobs", 1);
  return c;
}

const RunConfig::Entry& RunConfig::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& raw, const std::string& source) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("unknown config key '" + key + "' (from " + source + "); run with --print-config to list keys");
  }
  const std::string value = trim(raw);
  bool ok = true;
  std::string canonical = value;
  switch (it->second.type) {
    case Type::integer: {
      std::int64_t v;
      ok = parse_int(value, v);
      break;
    }
    case Type::real: {
      double v;
      ok = parse_real(value, v);
      if (ok) canonical = fmt_real(v);
      break;
    }
    case Type::boolean: {
      bool v;
      ok = parse_bool(value, v);
      if (ok) canonical = v ? "true" : "false";
      break;
    }
    case Type::text:
      break;
  }
  if (!ok) {
    throw ConfigError("config key '" + key + "' expects " + std::string(type_name(it->second.type)) + ", got '" +
                      value + "' (from " + source + ")");
  }
  it->second.value = canonical;
  it->second.source = source;
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(n) + ": expected 'key = value', got '" + trim(line) + "'");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1), source + ":" + std::to_string(n));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

void RunConfig::merge_env(char** envp) {
  if (!envp) return;
  std::map<std::string, std::string> by_env;
  for (const auto& [k, _] : entries_) by_env[env_name(k)] = k;
  for (char** e = envp; *e; ++e) {
    const char* eq = std::strchr(*e, '=');
    if (!eq) continue;
    std::string name(*e, std::size_t(eq - *e));
    if (auto it = by_env.find(name); it != by_env.end()) set(it->second, eq + 1, "env " + name);
  }
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const auto& e = entry(key);
  std::int64_t v = 0;
  if (e.type != Type::integer || !parse_int(e.value, v)) throw ConfigError("config key '" + key + "' is not an integer");
  return v;
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative, got " + std::to_string(v));
  return std::size_t(v);
}

double RunConfig::real(const std::string& key) const {
  const auto& e = entry(key);
  double v = 0.0;
  if ((e.type != Type::real && e.type != Type::integer) || !parse_real(e.value, v)) {
    throw ConfigError("config key '" + key + "' is not a number");
  }
  return v;
}

bool RunConfig::boolean(const std::string& key) const {
  const auto& e = entry(key);
  bool v = false;
  if (e.type != Type::boolean || !parse_bool(e.value, v)) throw ConfigError("config key '" + key + "' is not a boolean");
  return v;
}

const std::string& RunConfig::text(const std::string& key) const { return entry(key).value; }

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& [k, e] : entries_) out += k + " = " + e.value + "\n";
  return out;
}

void RunConfig::write_snapshot(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write config snapshot '" + path.string() + "'");
  os << snapshot();
}

model::ModelConfig model_config(const RunConfig& c) {
  model::ModelConfig m;
  m.model_dim = c.count("model.dim");
  m.state_dim = c.count("model.state_dim");
  auto f = model::fusion_from_string(c.text("model.fusion"));
  if (!f) throw ConfigError("model.fusion must be one of none, ++, +-; got '" + c.text("model.fusion") + "'");
  m.fusion = *f;
  m.fusion_layers = c.count("model.fusion_layers");
  m.sinusoidal_positions = c.boolean("model.sinusoidal_positions");
  auto im = model::interaction_from_string(c.text("model.interaction"));
  if (!im) throw ConfigError("model.interaction must be one of shared, unshared, off; got '" + c.text("model.interaction") + "'");
  m.interaction = *im;
  m.decoder.model_dim = m.model_dim;
  m.decoder.state_dim = m.state_dim;
  m.decoder.n_layers = c.count("red.layers");
  m.decoder.n_agent_slots = c.count("red.agent_slots");
  m.decoder.n_heads = c.count("red.heads");
  m.decoder.reasoning = c.boolean("red.reasoning");
  m.decoder.moe = c.boolean("red.moe");
  m.decoder.n_experts = c.count("moe.experts");
  m.decoder.expert_hidden = c.count("moe.hidden");
  m.decoder.gate.k = c.count("moe.k");
  m.decoder.gate.p_drop = c.real("moe.p_drop");
  m.decoder.gate.capacity_factor = c.real("moe.capacity_factor");
  m.decoder.gate.use_capacity = c.boolean("moe.use_capacity");
  m.image_rows = c.count("gen.image_rows");
  m.image_cols = c.count("gen.image_cols");
  m.lidar_rows = c.count("gen.lidar_rows");
  m.lidar_cols = c.count("gen.lidar_cols");
  m.seed = std::uint64_t(c.integer("seed"));
  if (m.model_dim == 0 || m.decoder.n_heads == 0 || m.model_dim % m.decoder.n_heads != 0) {
    throw ConfigError("model.dim must be a positive multiple of red.heads");
  }
  if (m.decoder.gate.k == 0 || m.decoder.gate.k > m.decoder.n_experts) {
    throw ConfigError("moe.k must be in [1, moe.experts]");
  }
  return m;
}

pdm::ScorerConfig scorer_config(const RunConfig& c) {
  pdm::ScorerConfig s;
  s.dt = c.real("pdm.dt");
  s.ttc_horizon = c.real("pdm.ttc_horizon");
  s.max_lon_accel = c.real("pdm.max_lon_accel");
  s.max_jerk = c.real("pdm.max_jerk");
  s.lk_max_offset = c.real("pdm.lk_max_offset");
  s.ec_max_accel_change = c.real("pdm.ec_max_accel_change");
  s.ddc_min_progress = c.real("pdm.ddc_min_progress");
  s.ep_min_expert_progress = c.real("pdm.ep_min_expert_progress");
  s.ego_length = c.real("pdm.ego_length");
  s.ego_width = c.real("pdm.ego_width");
  s.rear_axle_to_center = c.real("pdm.rear_axle_to_center");
  if (!(s.dt > 0.0)) throw ConfigError("pdm.dt must be positive");
  return s;
}

world::GeneratorConfig generator_config(const RunConfig& c) {
  world::GeneratorConfig g;
  g.max_agents = c.count("gen.max_agents");
  g.unknown_command_rate = c.real("gen.unknown_rate");
  g.template_weights = {c.real("gen.weight.straight_road"), c.real("gen.weight.left_turn"), c.real("gen.weight.right_turn"),
                        c.real("gen.weight.t_junction"), c.real("gen.weight.crosswalk")};
  g.speed_cap = c.real("gen.speed_cap");
  g.lookahead = c.real("gen.lookahead");
  g.lane_width = c.real("gen.lane_width");
  g.shoulder = c.real("gen.shoulder");
  g.image_rows = c.count("gen.image_rows");
  g.image_cols = c.count("gen.image_cols");
  g.image_noise = c.real("gen.image_noise");
  g.lidar_rows = c.count("gen.lidar_rows");
  g.lidar_cols = c.count("gen.lidar_cols");
  g.bev_extent = c.real("gen.bev_extent");
  g.bev_cell = c.real("gen.bev_cell");
  g.placement_attempts = c.count("gen.placement_attempts");
  g.max_regenerations = c.count("gen.max_regenerations");
  g.scorer = scorer_config(c);
  if (g.unknown_command_rate < 0.0 || g.unknown_command_rate > 1.0) throw ConfigError("gen.unknown_rate must be in [0, 1]");
  return g;
}

train::TrainConfig train_config(const RunConfig& c) {
  train::TrainConfig t;
  t.epochs = c.count("train.epochs");
  t.batch_size = c.count("train.batch_size");
  t.optimizer.lr = c.real("train.lr");
  t.optimizer.weight_decay = c.real("train.weight_decay");
  t.optimizer.beta1 = c.real("train.beta1");
  t.optimizer.beta2 = c.real("train.beta2");
  t.optimizer.eps = c.real("train.eps");
  t.grad_clip = c.real("train.grad_clip");
  t.match_threshold = c.real("train.match_threshold");
  t.weights.lambda_v = c.real("train.lambda_v");
  t.weights.lambda_a = c.real("train.lambda_a");
  t.val_every = c.count("train.val_every");
  t.seed = std::uint64_t(c.integer("seed"));
  t.scorer = scorer_config(c);
  return t;
}

}  // namespace pie::config
