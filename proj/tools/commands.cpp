#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "pie/anchors.hpp"
#include "pie/dataset.hpp"
#include "pie/generator.hpp"
#include "pie/grad_suite.hpp"
#include "pie/model.hpp"
#include "pie/train.hpp"
#include "svg.hpp"

namespace pie::cli {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kSplitStride = 10'000'000;

void require_file(const fs::path& p, const std::string& what, const std::string& hint) {
  if (p.empty()) throw UsageError("missing " + what + "; " + hint);
  if (!fs::is_regular_file(p)) throw UsageError(what + " '" + p.string() + "' does not exist; " + hint);
}

fs::path split_file(const fs::path& data, const std::string& split) {
  return fs::is_directory(data) ? data / (split + ".jsonl") : data;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("failed writing '" + p.string() + "'");
}

void prepare_dir(const fs::path& dir) {
  if (dir.empty()) throw UsageError("missing output directory (--out)");
  fs::create_directories(dir);
}

fs::path beside(const fs::path& file) { return fs::path(file.string() + ".config.txt"); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Numeric-aware id order: shorter ids first, then lexicographic, so "scn-9" < "scn-10".
bool id_less(const std::string& a, const std::string& b) {
  return a.size() != b.size() ? a.size() < b.size() : a < b;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<world::Scenario> load_split(const fs::path& data, const std::string& split) {
  const auto p = split_file(data, split);
  require_file(p, split + " dataset", "run `pie gen-data --out DIR` first");
  return world::load_dataset(p);
}

json traj_json(const Trajectory& t) {
  json a = json::array();
  for (const auto& p : t.points) a.push_back({p.x, p.y, p.heading});
  return a;
}

Trajectory traj_from_json(const json& a) {
  if (!a.is_array() || a.size() != kWaypoints) throw std::runtime_error("trajectory must hold 8 waypoints");
  Trajectory t;
  for (std::size_t i = 0; i < kWaypoints; ++i) {
    const auto& p = a.at(i);
    t.points[i] = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
  }
  return t;
}

json subscores_json(const pdm::Subscores& s) {
  return {{"nc", s.nc}, {"dac", s.dac}, {"ep", s.ep}, {"ttc", s.ttc}, {"c", s.c},
          {"hc", s.hc}, {"lk", s.lk},   {"ec", s.ec}, {"ddc", s.ddc}, {"tlc", s.tlc}};
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

model::PieModel load_model(const config::RunConfig& cfg, const fs::path& checkpoint) {
  require_file(checkpoint, "checkpoint", "pass --checkpoint RUN/checkpoint.bin from `pie train`");
  const auto mc = config::model_config(cfg);
  model::PieModel m(mc);
  const auto ckpt = load_checkpoint(checkpoint);
  if (ckpt.config_hash != mc.hash()) {
    throw UsageError("checkpoint '" + checkpoint.string() +
                     "' was trained with a different model configuration; pass the training run's config.txt "
                     "with --config");
  }
  restore(m.params(), ckpt);
  return m;
}

anchors::AnchorBank load_bank(const fs::path& p) {
  require_file(p, "anchor bank", "run `pie cluster-anchors` first");
  auto bank = anchors::load_anchor_bank(p);
  bank.validate(bank.classes[0].size());
  return bank;
}

}  // namespace

std::pair<std::uint64_t, std::uint64_t> split_seed_range(std::uint64_t seed, std::size_t split, std::size_t count) {
  if (count >= kSplitStride) throw UsageError("split size must be below " + std::to_string(kSplitStride));
  const std::uint64_t begin = seed * 3 * kSplitStride + split * kSplitStride;
  return {begin, begin + count};
}

void gen_data(const config::RunConfig& cfg, const fs::path& out, std::ostream& log) {
  prepare_dir(out);
  const auto gc = config::generator_config(cfg);
  const auto seed = std::uint64_t(cfg.integer("seed"));
  const std::size_t jobs = cfg.count("jobs");
  json manifest;
  manifest["version"] = world::kDatasetVersion;
  manifest["seed"] = seed;
  manifest["config_hash"] = hex64(fnv1a64(cfg.snapshot()));
  manifest["splits"] = json::array();
  for (std::size_t s = 0; s < std::size(kSplits); ++s) {
    const std::string name = kSplits[s];
    const auto n = cfg.count("data." + name);
    const auto [begin, end] = split_seed_range(seed, s, n);
    std::vector<world::Scenario> scenarios(n);
    parallel_for(n, jobs, [&](std::size_t i) { scenarios[i] = world::generate(begin + i, gc); });
    world::save_dataset(out / (name + ".jsonl"), scenarios);

    std::map<std::string, std::size_t> commands{{"left", 0}, {"straight", 0}, {"right", 0}, {"unknown", 0}};
    std::map<std::string, std::size_t> templates;
    for (auto t : world::kAllTemplates) templates[std::string(world::to_string(t))] = 0;
    for (const auto& sc : scenarios) {
      commands[std::string(to_string(sc.command))]++;
      templates[std::string(world::to_string(sc.kind))]++;
    }
    json split;
    split["name"] = name;
    split["file"] = name + ".jsonl";
    split["count"] = n;
    split["seed_begin"] = begin;
    split["seed_end"] = end;
    split["commands"] = json(commands);
    split["templates"] = json(templates);
    manifest["splits"].push_back(split);

    log << name << ": " << n << " scenarios, seeds [" << begin << ", " << end << ")  commands:";
    for (const auto& [k, v] : commands) log << ' ' << k << '=' << v;
    log << '\n';
  }
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
  cfg.write_snapshot(out / "config.txt");
}

void cluster_anchors(const config::RunConfig& cfg, const fs::path& data, const fs::path& out, std::ostream& log) {
  if (out.empty()) throw UsageError("missing output file (--out)");
  const auto file = split_file(data, "train");
  require_file(file, "training dataset", "run `pie gen-data --out DIR` first");
  const auto scenarios = world::load_dataset(file);
  std::vector<anchors::LabeledTrajectory> labeled;
  for (const auto& sc : scenarios)
    if (sc.command != Command::unknown) labeled.push_back({sc.command, sc.expert});
  const auto k = cfg.count("anchors.per_class");
  const auto bank = anchors::cluster_anchors(labeled, k, std::uint64_t(cfg.integer("seed")),
                                             hex64(fnv1a64(read_file(file))));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  anchors::save_anchor_bank(out, bank);
  cfg.write_snapshot(beside(out));
  log << "anchor bank: " << bank.size() << " anchors (" << k << " per class) from " << labeled.size()
      << " trajectories -> " << out.string() << '\n';
}

void train(const config::RunConfig& cfg, const fs::path& data, const fs::path& anchors_path, const fs::path& out,
           std::ostream& log) {
  const auto train_set = load_split(data, "train");
  std::vector<world::Scenario> val_set;
  if (fs::is_directory(data) && fs::is_regular_file(data / "val.jsonl")) val_set = world::load_dataset(data / "val.jsonl");
  const auto bank = load_bank(anchors_path);
  prepare_dir(out);
  cfg.write_snapshot(out / "config.txt");

  model::PieModel m(config::model_config(cfg));
  const auto tc = config::train_config(cfg);
  std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
  train::TrainHooks hooks;
  hooks.checkpoint = out / "checkpoint.bin";
  hooks.on_epoch = [&](const train::EpochRecord& r) {
    const auto line = train::to_json_line(r);
    metrics << line << '\n' << std::flush;
    log << "epoch " << r.epoch << "/" << tc.epochs << "  loss " << fmt(r.train_loss);
    if (r.val_pdms) log << "  val pdms " << fmt(*r.val_pdms);
    log << "  (" << fmt(r.wall_time, 1) << " s)\n" << std::flush;
  };
  log << "training " << m.params().total_elements() << " parameters on " << train_set.size() << " scenarios\n";
  try {
    train::train(m, bank, train_set, val_set, tc, hooks);
  } catch (const train::TrainingAborted& e) {
    throw std::runtime_error(std::string("training aborted: ") + e.what() + "; the last completed epoch's checkpoint is kept");
  }
}

Planner planner_from_string(const std::string& s) {
  if (s == "model") return Planner::model;
  if (s == "expert") return Planner::expert;
  if (s == "constant-velocity" || s == "cv") return Planner::constant_velocity;
  throw UsageError("unknown planner '" + s + "' (expected model, expert or constant-velocity)");
}

void eval(const config::RunConfig& cfg, const fs::path& data, Planner planner, const fs::path& anchors_path,
          const fs::path& checkpoint, const fs::path& out, std::ostream& log) {
  if (out.empty()) throw UsageError("missing output file (--out)");
  const auto file = split_file(data, "test");
  require_file(file, "dataset", "pass a split file or a gen-data directory with --data");
  auto scenarios = world::load_dataset(file);
  std::optional<model::PieModel> m;
  anchors::AnchorBank bank;
  if (planner == Planner::model) {
    bank = load_bank(anchors_path);
    m.emplace(load_model(cfg, checkpoint));
  }
  std::stable_sort(scenarios.begin(), scenarios.end(), [](const auto& a, const auto& b) { return id_less(a.id, b.id); });
  std::vector<Trajectory> plans(scenarios.size());
  parallel_for(scenarios.size(), cfg.count("jobs"), [&](std::size_t i) {
    const auto& sc = scenarios[i];
    switch (planner) {
      case Planner::model: plans[i] = m->plan(sc, bank); break;
      case Planner::expert: plans[i] = sc.expert; break;
      case Planner::constant_velocity: plans[i] = pdm::constant_velocity_plan(sc.ego); break;
    }
  });
  const char* name = planner == Planner::model ? "model" : planner == Planner::expert ? "expert" : "constant-velocity";
  std::string text;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    json j;
    j["id"] = scenarios[i].id;
    j["planner"] = name;
    j["trajectory"] = traj_json(plans[i]);
    text += j.dump() + "\n";
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file(out, text);
  cfg.write_snapshot(beside(out));
  log << "planned " << scenarios.size() << " scenarios with the " << name << " planner -> " << out.string() << '\n';
}

pdm::Aggregate score(const config::RunConfig& cfg, const fs::path& data, const fs::path& trajectories,
                     const fs::path& out, std::ostream& log) {
  const auto file = split_file(data, "test");
  require_file(file, "dataset", "pass the split that was planned with --data");
  require_file(trajectories, "trajectory file", "run `pie eval --out FILE` first");
  auto scenarios = world::load_dataset(file);
  std::map<std::string, Trajectory> plans;
  {
    std::ifstream in(trajectories);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        const auto j = json::parse(line);
        plans[j.at("id").get<std::string>()] = traj_from_json(j.at("trajectory"));
      } catch (const std::exception& e) {
        throw std::runtime_error(trajectories.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }
  std::stable_sort(scenarios.begin(), scenarios.end(), [](const auto& a, const auto& b) { return id_less(a.id, b.id); });
  for (const auto& sc : scenarios)
    if (!plans.count(sc.id)) throw std::runtime_error("no trajectory for scenario '" + sc.id + "' in " + trajectories.string());

  const auto scorer = config::scorer_config(cfg);
  std::vector<pdm::ScoreRecord> records(scenarios.size());
  parallel_for(scenarios.size(), cfg.count("jobs"), [&](std::size_t i) {
    const auto& sc = scenarios[i];
    records[i] = pdm::make_record(sc.id, pdm::score_trajectory(plans.at(sc.id), sc, scorer));
  });
  const auto agg = pdm::aggregate(records);

  prepare_dir(out);
  std::string jl, csv = "id,nc,dac,ep,ttc,c,hc,lk,ec,ddc,tlc,pdms,epdms\n";
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["subscores"] = subscores_json(r.sub);
    j["pdms"] = r.pdms;
    j["epdms"] = r.epdms;
    jl += j.dump() + "\n";
    const auto& s = r.sub;
    csv += r.id;
    for (double v : {s.nc, s.dac, s.ep, s.ttc, s.c, s.hc, s.lk, s.ec, s.ddc, s.tlc, r.pdms, r.epdms}) csv += "," + exact(v);
    csv += "\n";
  }
  json footer;
  footer["aggregate"] = {{"count", agg.count},
                         {"mean_pdms", agg.mean_pdms},
                         {"mean_epdms", agg.mean_epdms},
                         {"mean_subscores", subscores_json(agg.mean_sub)},
                         {"pdms_of_mean_subscores", agg.pdms_of_means},
                         {"epdms_of_mean_subscores", agg.epdms_of_means},
                         {"note", "mean of per-scenario scores is not the formula applied to the mean subscores"}};
  jl += footer.dump() + "\n";
  write_file(out / "scores.jsonl", jl);
  write_file(out / "scores.csv", csv);

  std::ostringstream summary;
  const auto& m = agg.mean_sub;
  summary << "scenarios           " << agg.count << "\n"
          << "mean PDMS           " << fmt(agg.mean_pdms) << "\n"
          << "mean EPDMS          " << fmt(agg.mean_epdms) << "\n"
          << "PDMS(mean subs)     " << fmt(agg.pdms_of_means) << "\n"
          << "EPDMS(mean subs)    " << fmt(agg.epdms_of_means) << "\n"
          << "NC " << fmt(m.nc, 3) << "  DAC " << fmt(m.dac, 3) << "  EP " << fmt(m.ep, 3) << "  TTC " << fmt(m.ttc, 3)
          << "  C " << fmt(m.c, 3) << "\n"
          << "HC " << fmt(m.hc, 3) << "  LK " << fmt(m.lk, 3) << "  EC " << fmt(m.ec, 3) << "  DDC " << fmt(m.ddc, 3)
          << "  TLC " << fmt(m.tlc, 3) << "\n"
          << "(the mean of per-scenario scores and the formula applied to mean subscores differ in general)\n";
  write_file(out / "summary.txt", summary.str());
  cfg.write_snapshot(out / "config.txt");
  log << summary.str();
  return agg;
}

void gradcheck(const config::RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto cases = run_grad_suite(std::uint64_t(cfg.integer("seed")));
  std::ostringstream table;
  std::size_t failed = 0;
  for (const auto& c : cases) {
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-36s %-9s max rel err %.3e (tol %.0e, %zu components)\n",
                  c.passed() ? "ok" : "FAIL", c.name.c_str(), c.primitive ? "primitive" : "composite",
                  c.max_rel_error, c.tolerance, c.checked);
    table << line;
    failed += !c.passed();
  }
  table << cases.size() - failed << "/" << cases.size() << " gradient checks passed\n";
  log << table.str();
  if (!out.empty()) {
    prepare_dir(out);
    write_file(out / "gradcheck.txt", table.str());
    cfg.write_snapshot(out / "config.txt");
  }
  if (failed) throw CheckFailed(std::to_string(failed) + " gradient check(s) failed");
}

std::vector<std::string> ablation_matrices(const std::string& name) {
  static const std::vector<std::string> all{"fusion", "red", "interaction", "experts"};
  if (name == "all") return all;
  if (std::find(all.begin(), all.end(), name) != all.end()) return {name};
  throw UsageError("unknown ablation matrix '" + name + "' (expected fusion, red, interaction, experts or all)");
}

namespace {

struct Setting {
  std::string label;
  std::string key;
  std::string value;
};

std::vector<Setting> matrix_settings(const std::string& m) {
  if (m == "fusion") return {{"none", "model.fusion", "none"}, {"++", "model.fusion", "++"}, {"+-", "model.fusion", "+-"}};
  if (m == "red") return {{"off", "red.reasoning", "false"}, {"on", "red.reasoning", "true"}};
  if (m == "interaction")
    return {{"off", "model.interaction", "off"}, {"unshared", "model.interaction", "unshared"},
            {"shared", "model.interaction", "shared"}};
  return {{"2", "moe.experts", "2"}, {"3", "moe.experts", "3"}, {"4", "moe.experts", "4"}};
}

// The full design's setting in each matrix; deltas are measured against it.
std::string reference_setting(const std::string& m) {
  if (m == "fusion") return "+-";
  if (m == "red") return "on";
  if (m == "interaction") return "shared";
  return "3";
}

}  // namespace

std::vector<AblationRow> ablate(const config::RunConfig& cfg, const std::string& matrix, const fs::path& data,
                                const fs::path& anchors_path, const fs::path& out, std::ostream& log) {
  const auto matrices = ablation_matrices(matrix);
  const auto train_set = load_split(data, "train");
  std::vector<world::Scenario> eval_set;
  if (fs::is_directory(data) && fs::is_regular_file(data / "val.jsonl")) eval_set = world::load_dataset(data / "val.jsonl");
  if (eval_set.empty()) eval_set = train_set;
  const auto bank = load_bank(anchors_path);
  prepare_dir(out);
  cfg.write_snapshot(out / "config.txt");

  std::vector<AblationRow> rows;
  for (const auto& mx : matrices) {
    const std::size_t first = rows.size();
    for (const auto& s : matrix_settings(mx)) {
      auto c = cfg;
      c.set(s.key, s.value, "ablate");
      model::PieModel m(config::model_config(c));
      auto tc = config::train_config(c);
      tc.val_every = 0;
      const auto records = train::train(m, bank, train_set, {}, tc);
      std::vector<pdm::ScoreRecord> scores(eval_set.size());
      const auto scorer = config::scorer_config(c);
      parallel_for(eval_set.size(), cfg.count("jobs"), [&](std::size_t i) {
        scores[i] = pdm::make_record(eval_set[i].id, pdm::score_trajectory(m.plan(eval_set[i], bank), eval_set[i], scorer));
      });
      const auto agg = pdm::aggregate(scores);
      AblationRow row{mx, s.label, m.params().total_elements(), records.back().train_loss, agg.mean_pdms, agg.mean_epdms, 0.0};
      log << mx << " = " << s.label << ": loss " << fmt(row.final_loss) << ", pdms " << fmt(row.pdms) << ", epdms "
          << fmt(row.epdms) << '\n' << std::flush;
      rows.push_back(row);
    }
    const auto ref = std::find_if(rows.begin() + std::ptrdiff_t(first), rows.end(),
                                  [&](const AblationRow& r) { return r.setting == reference_setting(mx); });
    for (auto it = rows.begin() + std::ptrdiff_t(first); it != rows.end(); ++it) it->delta_pdms = it->pdms - ref->pdms;
  }

  std::string csv = "matrix,setting,params,final_loss,pdms,epdms,delta_pdms\n";
  for (const auto& r : rows) {
    csv += r.matrix + "," + r.setting + "," + std::to_string(r.params) + "," + exact(r.final_loss) + "," + exact(r.pdms) +
           "," + exact(r.epdms) + "," + exact(r.delta_pdms) + "\n";
  }
  write_file(out / "ablation.csv", csv);

  const std::vector<std::string> head{"matrix", "setting", "params", "final loss", "PDMS", "EPDMS", "dPDMS"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    cells.push_back({r.matrix, r.setting, std::to_string(r.params), fmt(r.final_loss), fmt(r.pdms), fmt(r.epdms),
                     (r.delta_pdms >= 0 ? "+" : "") + fmt(r.delta_pdms)});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream txt;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) txt << "  ";
      if (c < 2) txt << std::left << std::setw(int(width[c])) << row[c];
      else txt << std::right << std::setw(int(width[c])) << row[c];
    }
    txt << '\n';
  };
  emit(head);
  std::size_t total = head.size() * 2 - 2;
  for (auto w : width) total += w;
  txt << std::string(total, '-') << '\n';
  for (const auto& row : cells) emit(row);
  txt << "dPDMS is relative to the full design in each matrix (+-, on, shared, 3).\n";
  write_file(out / "ablation.txt", txt.str());
  log << txt.str();
  return rows;
}

std::vector<fs::path> plot(const PlotInputs& in, const fs::path& out, std::ostream& log) {
  if (in.metrics.empty() && in.scores.empty() && in.data.empty())
    throw UsageError("nothing to plot; pass --metrics, --scores and/or --data");
  prepare_dir(out);
  std::vector<fs::path> written;

  if (!in.metrics.empty()) {
    require_file(in.metrics, "metrics log", "pass RUN/metrics.jsonl from `pie train`");
    std::vector<svg::Series> loss{{"total", {}}, {"planning", {}}, {"velocity", {}}, {"action", {}}};
    svg::Series val{"val PDMS", {}};
    std::ifstream is(in.metrics);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      const double e = j.at("epoch").get<double>();
      loss[0].points.push_back({e, j.at("train_loss").get<double>()});
      loss[1].points.push_back({e, j.at("parts").at("planning").get<double>()});
      loss[2].points.push_back({e, j.at("parts").at("velocity").get<double>()});
      loss[3].points.push_back({e, j.at("parts").at("action").get<double>()});
      if (!j.at("val_pdms").is_null()) val.points.push_back({e, j.at("val_pdms").get<double>()});
    }
    write_file(out / "loss.svg", svg::line_chart("Training loss", "epoch", loss));
    written.push_back(out / "loss.svg");
    if (!val.points.empty()) {
      write_file(out / "val_pdms.svg", svg::line_chart("Validation PDMS", "epoch", {val}));
      written.push_back(out / "val_pdms.svg");
    }
  }

  if (!in.scores.empty()) {
    require_file(in.scores, "score CSV", "pass OUT/scores.csv from `pie score`");
    std::vector<double> p, e;
    std::ifstream is(in.scores);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      if (f.size() != 13) throw std::runtime_error("malformed score CSV row: " + line);
      p.push_back(std::stod(f[11]));
      e.push_back(std::stod(f[12]));
    }
    write_file(out / "pdms_hist.svg", svg::histogram("PDMS per scenario", p, 0.0, 1.0, 10));
    write_file(out / "epdms_hist.svg", svg::histogram("EPDMS per scenario", e, 0.0, 1.0, 10));
    written.push_back(out / "pdms_hist.svg");
    written.push_back(out / "epdms_hist.svg");
  }

  if (!in.data.empty()) {
    const auto file = split_file(in.data, "test");
    require_file(file, "dataset", "pass a split file or gen-data directory with --data");
    auto scenarios = world::load_dataset(file);
    std::map<std::string, Trajectory> plans;
    if (!in.trajectories.empty()) {
      require_file(in.trajectories, "trajectory file", "pass the output of `pie eval`");
      std::ifstream is(in.trajectories);
      std::string line;
      while (std::getline(is, line))
        if (!line.empty()) {
          const auto j = json::parse(line);
          plans[j.at("id").get<std::string>()] = traj_from_json(j.at("trajectory"));
        }
    }
    std::optional<anchors::AnchorBank> bank;
    if (!in.anchors.empty()) bank = load_bank(in.anchors);
    const auto pts = [](const auto& v) {
      std::vector<std::pair<double, double>> o;
      for (const auto& p : v) o.push_back({p.x, p.y});
      return o;
    };
    const auto traj_pts = [](const Trajectory& t) {
      std::vector<std::pair<double, double>> o{{0.0, 0.0}};
      for (const auto& p : t.points) o.push_back({p.x, p.y});
      return o;
    };
    const auto box_pts = [](const geom::OrientedBox& b) {
      std::vector<std::pair<double, double>> o;
      for (const auto& c : b.corners()) o.push_back({c.x, c.y});
      return o;
    };
    for (std::size_t i = 0; i < std::min(in.snapshots, scenarios.size()); ++i) {
      const auto& sc = scenarios[i];
      svg::Canvas cv(-12.0, 48.0, -30.0, 30.0, 10.0);
      cv.polygon(pts(sc.drivable), "#d9d9d9", "#999");
      cv.polyline(pts(sc.route), "#888", 1.0, true);
      if (sc.stop_line) {
        cv.polyline({{sc.stop_line->a.x, sc.stop_line->a.y}, {sc.stop_line->b.x, sc.stop_line->b.y}},
                    sc.stop_line->red ? "#e41a1c" : "#4daf4a", 3.0);
      }
      if (bank && sc.command != Command::unknown)
        for (const auto& a : bank->of(sc.command)) cv.polyline(traj_pts(a), "#9ecae1", 1.0, false, 0.7);
      for (const auto& a : sc.agents) {
        const auto b = a.box_at(0.0);
        cv.polygon(box_pts(b), "#377eb8", "#1f4e79", 0.8);
        cv.polyline({{a.x, a.y}, {a.x + a.vx, a.y + a.vy}}, "#1f4e79", 1.5);
      }
      cv.polygon(box_pts(pdm::ego_footprint(sc.ego.pose)), "#ff7f00", "#b35900", 0.9);
      cv.polyline(traj_pts(sc.expert), "#2ca02c", 2.5);
      for (const auto& p : sc.expert.points) cv.circle(p.x, p.y, 2.5, "#2ca02c");
      if (auto it = plans.find(sc.id); it != plans.end()) {
        cv.polyline(traj_pts(it->second), "#d62728", 2.5);
        for (const auto& p : it->second.points) cv.circle(p.x, p.y, 2.5, "#d62728");
      }
      cv.legend({{"expert", "#2ca02c"}, {"planned", "#d62728"}, {"anchors", "#9ecae1"}, {"agents", "#377eb8"},
                 {"ego", "#ff7f00"}});
      const auto name = "bev_" + sc.id + ".svg";
      write_file(out / name,
                 cv.render(sc.id + "  " + std::string(world::to_string(sc.kind)) + "  command " +
                           std::string(to_string(sc.command)) + "  v " + fmt(sc.ego.speed, 1) + " m/s"));
      written.push_back(out / name);
    }
  }
  for (const auto& p : written) log << "wrote " << p.string() << '\n';
  return written;
}

}  // namespace pie::cli
