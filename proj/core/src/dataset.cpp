#include "pie/dataset.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>

namespace pie::world {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Template t) {
  switch (t) {
    case Template::straight_road: return "straight_road";
    case Template::left_turn: return "left_turn";
    case Template::right_turn: return "right_turn";
    case Template::t_junction: return "t_junction";
    case Template::crosswalk: return "crosswalk";
  }
  return "?";
}

std::optional<Template> template_from_string(std::string_view s) {
  for (auto t : kAllTemplates)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8) | bytes[i + 2];
    for (int k = 3; k >= 0; --k) out.push_back(kAlphabet[(v >> (6 * k)) & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest) {
    std::uint32_t v = std::uint32_t(bytes[i]) << 16;
    if (rest == 2) v |= std::uint32_t(bytes[i + 1]) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int d;
      if (c == '=' && last && k >= 2) {
        d = 0;
        ++pad;
      } else {
        if (pad) throw std::invalid_argument("base64 padding in the middle of a quantum");
        d = decode_char(c);
        if (d < 0) throw std::invalid_argument(std::string("invalid base64 character '") + c + "'");
      }
      v = (v << 6) | std::uint32_t(d);
    }
    out.push_back(std::uint8_t(v >> 16));
    if (pad < 2) out.push_back(std::uint8_t(v >> 8));
    if (pad < 1) out.push_back(std::uint8_t(v));
  }
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little, "grid encoding assumes a little-endian host");

ordered_json xy(geom::Vec2 p) { return ordered_json::array({p.x, p.y}); }
ordered_json pose_json(const Pose& p) { return ordered_json::array({p.x, p.y, p.heading}); }

ordered_json grid_json(const Grid& g) {
  std::vector<std::uint8_t> bytes(g.values.size() * sizeof(float));
  std::memcpy(bytes.data(), g.values.data(), bytes.size());
  return {{"shape", {g.height, g.width, g.channels}}, {"data", base64_encode(bytes)}};
}

// Field access with path-aware errors.
class Reader {
 public:
  Reader(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(const std::string& path, const std::string& what) const { throw DatasetError(line_, path, what); }

  const ordered_json& field(const ordered_json& obj, const std::string& path, const char* key) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(join(path, key), "missing field");
    return *it;
  }

  double number(const ordered_json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
  }

  std::vector<double> numbers(const ordered_json& j, const std::string& path, std::size_t n) const {
    if (!j.is_array() || j.size() != n) fail(path, "expected an array of " + std::to_string(n) + " numbers");
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
    return v;
  }

  geom::Vec2 vec2(const ordered_json& j, const std::string& path) const {
    auto v = numbers(j, path, 2);
    return {v[0], v[1]};
  }

  Pose pose(const ordered_json& j, const std::string& path) const {
    auto v = numbers(j, path, 3);
    return {v[0], v[1], v[2]};
  }

  std::vector<geom::Vec2> points(const ordered_json& j, const std::string& path) const {
    if (!j.is_array()) fail(path, "expected an array");
    std::vector<geom::Vec2> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vec2(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }

  Grid grid(const ordered_json& j, const std::string& path) const {
    auto shape = numbers(field(j, path, "shape"), path + ".shape", 3);
    const auto& data = field(j, path, "data");
    if (!data.is_string()) fail(path + ".data", "expected a base64 string");
    Grid g;
    for (double d : shape)
      if (d < 0 || d != std::floor(d)) fail(path + ".shape", "dimensions must be non-negative integers");
    g.height = std::size_t(shape[0]);
    g.width = std::size_t(shape[1]);
    g.channels = std::size_t(shape[2]);
    std::vector<std::uint8_t> bytes;
    try {
      bytes = base64_decode(data.get_ref<const std::string&>());
    } catch (const std::invalid_argument& e) {
      fail(path + ".data", e.what());
    }
    const std::size_t n = g.height * g.width * g.channels;
    if (bytes.size() != n * sizeof(float)) {
      fail(path + ".data", "holds " + std::to_string(bytes.size()) + " bytes, shape needs " +
                               std::to_string(n * sizeof(float)));
    }
    g.values.resize(n);
    std::memcpy(g.values.data(), bytes.data(), bytes.size());
    return g;
  }

  static std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

 private:
  std::size_t line_;
};

const std::array<const char*, 13> kRequired = {"version", "id",        "template", "seed",   "command",
                                               "ego",     "agents",    "drivable", "route",  "stop_line",
                                               "history", "expert",    "grids"};

// Follows the parse position so that a truncated record can be reported by field.
class PathTracker : public nlohmann::json_sax<ordered_json> {
 public:
  bool null() override { return value(); }
  bool boolean(bool) override { return value(); }
  bool number_integer(number_integer_t) override { return value(); }
  bool number_unsigned(number_unsigned_t) override { return value(); }
  bool number_float(number_float_t, const string_t&) override { return value(); }
  bool string(string_t&) override { return value(); }
  bool binary(binary_t&) override { return value(); }
  bool start_object(std::size_t) override {
    stack_.push_back({false, {}, 0});
    return true;
  }
  bool key(string_t& k) override {
    stack_.back().key = k;
    if (stack_.size() == 1) seen_.insert(k);
    return true;
  }
  bool end_object() override { return close(); }
  bool start_array(std::size_t) override {
    stack_.push_back({true, {}, 0});
    return true;
  }
  bool end_array() override { return close(); }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception& e) override {
    error_ = e.what();
    return false;
  }

  std::string path() const {
    std::string p;
    for (const auto& f : stack_) {
      if (f.array) {
        p += "[" + std::to_string(f.index) + "]";
      } else if (!f.key.empty()) {
        p += (p.empty() ? "" : ".") + f.key;
      }
    }
    return p;
  }
  const std::set<std::string>& seen() const { return seen_; }
  const std::string& error() const { return error_; }

 private:
  struct Frame {
    bool array;
    std::string key;
    std::size_t index;
  };
  bool value() {
    if (!stack_.empty() && stack_.back().array) ++stack_.back().index;
    return true;
  }
  bool close() {
    stack_.pop_back();
    return value();
  }
  std::vector<Frame> stack_;
  std::set<std::string> seen_;
  std::string error_;
};

}  // namespace

std::string to_record(const Scenario& sc) {
  ordered_json j;
  j["version"] = kDatasetVersion;
  j["id"] = sc.id;
  j["template"] = std::string(to_string(sc.kind));
  j["seed"] = sc.seed;
  j["command"] = std::string(to_string(sc.command));
  j["ego"] = {{"pose", pose_json(sc.ego.pose)}, {"speed", sc.ego.speed}, {"accel", sc.ego.accel}};
  j["agents"] = ordered_json::array();
  for (const auto& a : sc.agents) {
    j["agents"].push_back({{"center", ordered_json::array({a.x, a.y})},
                           {"extent", ordered_json::array({a.length, a.width})},
                           {"heading", a.heading},
                           {"velocity", ordered_json::array({a.vx, a.vy})}});
  }
  j["drivable"] = ordered_json::array();
  for (auto p : sc.drivable) j["drivable"].push_back(xy(p));
  j["route"] = ordered_json::array();
  for (auto p : sc.route) j["route"].push_back(xy(p));
  if (sc.stop_line) {
    j["stop_line"] = {{"a", xy(sc.stop_line->a)}, {"b", xy(sc.stop_line->b)}, {"red", sc.stop_line->red}};
  } else {
    j["stop_line"] = nullptr;
  }
  j["history"] = ordered_json::array();
  for (const auto& p : sc.history) j["history"].push_back(pose_json(p));
  j["expert"] = ordered_json::array();
  for (const auto& p : sc.expert.points) j["expert"].push_back(pose_json(p));
  j["grids"] = {{"image", grid_json(sc.image)}, {"lidar", grid_json(sc.lidar)}};
  return j.dump();
}

Scenario from_record(std::string_view record, std::size_t line_no) {
  ordered_json j = ordered_json::parse(record, nullptr, false);
  if (j.is_discarded()) {
    PathTracker tracker;
    ordered_json::sax_parse(record, &tracker);
    std::string missing;
    for (const char* k : kRequired) {
      if (!tracker.seen().count(k)) missing += (missing.empty() ? "" : ", ") + std::string(k);
    }
    const std::string where = tracker.path().empty() ? "<record>" : tracker.path();
    throw DatasetError(line_no, where,
                       "record is truncated or malformed" +
                           (missing.empty() ? std::string() : " (missing field(s): " + missing + ")") + "; " +
                           tracker.error());
  }
  Reader r(line_no);
  if (!j.is_object()) r.fail("<record>", "expected a JSON object");

  const auto& version = r.field(j, "", "version");
  if (!version.is_number_integer() || version.get<long long>() != kDatasetVersion) {
    r.fail("version", "unsupported dataset version " + version.dump() + " (expected " +
                          std::to_string(kDatasetVersion) + ")");
  }
  Scenario sc;
  const auto& id = r.field(j, "", "id");
  if (!id.is_string()) r.fail("id", "expected a string");
  sc.id = id.get<std::string>();

  const auto& tmpl = r.field(j, "", "template");
  auto kind = tmpl.is_string() ? template_from_string(tmpl.get<std::string>()) : std::nullopt;
  if (!kind) r.fail("template", "unknown template " + tmpl.dump());
  sc.kind = *kind;

  const auto& seed = r.field(j, "", "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
    r.fail("seed", "expected a non-negative integer");
  }
  sc.seed = seed.get<std::uint64_t>();

  const auto& command = r.field(j, "", "command");
  auto cmd = command.is_string() ? command_from_string(command.get<std::string>()) : std::nullopt;
  if (!cmd) r.fail("command", "unknown command " + command.dump());
  sc.command = *cmd;

  const auto& ego = r.field(j, "", "ego");
  sc.ego.pose = r.pose(r.field(ego, "ego", "pose"), "ego.pose");
  sc.ego.speed = r.number(r.field(ego, "ego", "speed"), "ego.speed");
  sc.ego.accel = r.number(r.field(ego, "ego", "accel"), "ego.accel");

  const auto& agents = r.field(j, "", "agents");
  if (!agents.is_array()) r.fail("agents", "expected an array");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string p = "agents[" + std::to_string(i) + "]";
    AgentState a;
    auto c = r.vec2(r.field(agents[i], p, "center"), p + ".center");
    auto e = r.vec2(r.field(agents[i], p, "extent"), p + ".extent");
    auto v = r.vec2(r.field(agents[i], p, "velocity"), p + ".velocity");
    a.x = c.x;
    a.y = c.y;
    a.length = e.x;
    a.width = e.y;
    if (!(a.length > 0.0 && a.width > 0.0)) r.fail(p + ".extent", "extent must be positive");
    a.heading = r.number(r.field(agents[i], p, "heading"), p + ".heading");
    a.vx = v.x;
    a.vy = v.y;
    sc.agents.push_back(a);
  }
  sc.drivable = r.points(r.field(j, "", "drivable"), "drivable");
  if (sc.drivable.size() < 3) r.fail("drivable", "polygon needs at least 3 vertices");
  sc.route = r.points(r.field(j, "", "route"), "route");
  if (sc.route.size() < 2) r.fail("route", "polyline needs at least 2 points");

  const auto& stop = r.field(j, "", "stop_line");
  if (!stop.is_null()) {
    StopLine s;
    s.a = r.vec2(r.field(stop, "stop_line", "a"), "stop_line.a");
    s.b = r.vec2(r.field(stop, "stop_line", "b"), "stop_line.b");
    const auto& red = r.field(stop, "stop_line", "red");
    if (!red.is_boolean()) r.fail("stop_line.red", "expected a boolean");
    s.red = red.get<bool>();
    sc.stop_line = s;
  }

  const auto& history = r.field(j, "", "history");
  if (!history.is_array() || history.size() != kHistoryPoses) {
    r.fail("history", "expected " + std::to_string(kHistoryPoses) + " poses");
  }
  for (std::size_t i = 0; i < kHistoryPoses; ++i) sc.history[i] = r.pose(history[i], "history[" + std::to_string(i) + "]");

  const auto& expert = r.field(j, "", "expert");
  if (!expert.is_array() || expert.size() != kWaypoints) {
    r.fail("expert", "expected " + std::to_string(kWaypoints) + " waypoints");
  }
  for (std::size_t i = 0; i < kWaypoints; ++i) {
    sc.expert.points[i] = r.pose(expert[i], "expert[" + std::to_string(i) + "]");
  }

  const auto& grids = r.field(j, "", "grids");
  sc.image = r.grid(r.field(grids, "grids", "image"), "grids.image");
  sc.lidar = r.grid(r.field(grids, "grids", "lidar"), "grids.lidar");
  return sc;
}

void save_dataset(const std::filesystem::path& path, std::span<const Scenario> scenarios) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open dataset for writing: " + path.string());
  for (const auto& sc : scenarios) os << to_record(sc) << '\n';
  if (!os) throw std::runtime_error("failed writing dataset: " + path.string());
}

std::vector<Scenario> load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset: " + path.string());
  std::vector<Scenario> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    out.push_back(from_record(line, n));
  }
  return out;
}

}  // namespace pie::world
