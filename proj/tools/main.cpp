#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"

extern char** environ;

namespace {

using pie::cli::fs::path;

struct Common {
  path config_file;
  std::vector<std::string> sets;
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> jobs;
  bool print_config = false;
};

// key = value pairs applied after the config file and environment.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> items;

  template <typename T>
  void add(const std::string& key, const std::optional<T>& v) {
    if (v) items.emplace_back(key, to_text(*v));
  }

 private:
  static std::string to_text(const std::string& s) { return s; }
  template <typename T>
  static std::string to_text(T v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }
};

pie::config::RunConfig resolve(const Common& c, const Overrides& o) {
  auto cfg = pie::config::RunConfig::defaults();
  if (!c.config_file.empty()) cfg.merge_file(c.config_file);
  cfg.merge_env(environ);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw pie::cli::UsageError("--set expects KEY=VALUE, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1), "--set");
  }
  if (c.seed) cfg.set("seed", std::to_string(*c.seed), "--seed");
  if (c.jobs) cfg.set("jobs", std::to_string(*c.jobs), "--jobs");
  for (const auto& [k, v] : o.items) cfg.set(k, v, "flag");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale driving planner: data generation, training, evaluation and scoring"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("-c,--config", common.config_file, "Layered config file of `key = value` lines");
  app.add_option("--set", common.sets, "Config override KEY=VALUE (repeatable)");
  app.add_option("--seed", common.seed, "Base seed");
  app.add_option("-j,--jobs", common.jobs, "Worker threads for generation, eval and score");
  app.add_flag("--print-config", common.print_config, "Print the resolved configuration and exit");

  Overrides ov;
  path out, data, anchors, checkpoint, trajectories, metrics, scores;
  std::optional<std::int64_t> count, val_count, test_count, epochs;
  std::optional<double> lr;
  std::string planner = "model", matrix;
  std::size_t snapshots = 4;

  auto* gen = app.add_subcommand("gen-data", "Generate train/val/test scenario splits and a manifest");
  gen->add_option("-o,--out", out, "Output directory")->required();
  gen->add_option("-n,--count", count, "Training scenarios (data.train)");
  gen->add_option("--val-count", val_count, "Validation scenarios (data.val)");
  gen->add_option("--test-count", test_count, "Test scenarios (data.test)");

  auto* clu = app.add_subcommand("cluster-anchors", "Cluster expert trajectories into the anchor bank");
  clu->add_option("-d,--data", data, "Training split file or gen-data directory")->required();
  clu->add_option("-o,--out", out, "Anchor bank JSON file")->required();

  auto* tr = app.add_subcommand("train", "Train the planner; writes checkpoint.bin and metrics.jsonl");
  tr->add_option("-d,--data", data, "gen-data directory")->required();
  tr->add_option("-a,--anchors", anchors, "Anchor bank JSON file")->required();
  tr->add_option("-o,--out", out, "Run directory")->required();
  tr->add_option("-e,--epochs", epochs, "Epochs (train.epochs)");
  tr->add_option("--lr", lr, "Learning rate (train.lr)");

  auto* ev = app.add_subcommand("eval", "Plan every scenario of a split; writes trajectories as JSON lines");
  ev->add_option("-d,--data", data, "Split file or gen-data directory (test split)")->required();
  ev->add_option("-p,--planner", planner, "model, expert or constant-velocity")->capture_default_str();
  ev->add_option("-a,--anchors", anchors, "Anchor bank (model planner)");
  ev->add_option("-k,--checkpoint", checkpoint, "Checkpoint (model planner)");
  ev->add_option("-o,--out", out, "Trajectory file")->required();

  auto* sc = app.add_subcommand("score", "Score planned trajectories; writes scores.jsonl, scores.csv, summary.txt");
  sc->add_option("-d,--data", data, "Split file or gen-data directory (test split)")->required();
  sc->add_option("-t,--trajectories", trajectories, "Output of eval")->required();
  sc->add_option("-o,--out", out, "Report directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "Central-difference gradient checks; exit code 3 on failure");
  gc->add_option("-o,--out", out, "Optional report directory");

  auto* ab = app.add_subcommand("ablate", "Train and score one model per setting of a config matrix");
  ab->add_option("-m,--matrix", matrix, "fusion, red, interaction, experts or all")->required();
  ab->add_option("-d,--data", data, "gen-data directory")->required();
  ab->add_option("-a,--anchors", anchors, "Anchor bank JSON file")->required();
  ab->add_option("-o,--out", out, "Output directory")->required();
  ab->add_option("-e,--epochs", epochs, "Epochs per setting (train.epochs)");

  auto* pl = app.add_subcommand("plot", "SVG loss curves, score histograms and BEV snapshots");
  pl->add_option("--metrics", metrics, "metrics.jsonl from train");
  pl->add_option("--scores", scores, "scores.csv from score");
  pl->add_option("-d,--data", data, "Scenarios for BEV snapshots");
  pl->add_option("-t,--trajectories", trajectories, "Planned trajectories drawn on the snapshots");
  pl->add_option("-a,--anchors", anchors, "Anchor bank drawn on the snapshots");
  pl->add_option("-n,--count", snapshots, "Number of BEV snapshots")->capture_default_str();
  pl->add_option("-o,--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? pie::cli::kOk : pie::cli::kUsage;
  }

  try {
    ov.add("data.train", count);
    ov.add("data.val", val_count);
    ov.add("data.test", test_count);
    ov.add("train.epochs", epochs);
    ov.add("train.lr", lr);
    const auto cfg = resolve(common, ov);
    if (common.print_config) {
      std::cout << cfg.snapshot();
      return pie::cli::kOk;
    }
    auto& log = std::cout;
    if (*gen) {
      pie::cli::gen_data(cfg, out, log);
    } else if (*clu) {
      pie::cli::cluster_anchors(cfg, data, out, log);
    } else if (*tr) {
      pie::cli::train(cfg, data, anchors, out, log);
    } else if (*ev) {
      pie::cli::eval(cfg, data, pie::cli::planner_from_string(planner), anchors, checkpoint, out, log);
    } else if (*sc) {
      pie::cli::score(cfg, data, trajectories, out, log);
    } else if (*gc) {
      pie::cli::gradcheck(cfg, out, log);
    } else if (*ab) {
      pie::cli::ablate(cfg, matrix, data, anchors, out, log);
    } else if (*pl) {
      pie::cli::plot({metrics, scores, data, trajectories, anchors, snapshots}, out, log);
    }
  } catch (const pie::cli::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pie::cli::kUsage;
  } catch (const pie::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return pie::cli::kUsage;
  } catch (const pie::cli::CheckFailed& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return pie::cli::kCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pie::cli::kRuntime;
  }
  return pie::cli::kOk;
}
