#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "pie/config.hpp"
#include "pie/pdm.hpp"

namespace pie::cli {

namespace fs = std::filesystem;

/// Bad invocation: unknown flag, missing input, invalid value. Exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad acceptance-style check (gradcheck). Exit code 3.
class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kCheckFailed = 3 };

inline constexpr const char* kSplits[] = {"train", "val", "test"};

/// Seeds of split `s` for the given base seed: disjoint half-open ranges.
std::pair<std::uint64_t, std::uint64_t> split_seed_range(std::uint64_t seed, std::size_t split, std::size_t count);

/// train/val/test JSONL files, manifest.json and config.txt in `out`.
void gen_data(const config::RunConfig& cfg, const fs::path& out, std::ostream& log);

/// Anchor bank JSON clustered from a dataset file.
void cluster_anchors(const config::RunConfig& cfg, const fs::path& data, const fs::path& out, std::ostream& log);

/// checkpoint.bin, metrics.jsonl and config.txt in `out`. `data` is a gen-data
/// directory; val.jsonl is used for validation when present.
void train(const config::RunConfig& cfg, const fs::path& data, const fs::path& anchors, const fs::path& out,
           std::ostream& log);

enum class Planner { model, expert, constant_velocity };
Planner planner_from_string(const std::string& s);

/// One JSON line per scenario, {id, planner, trajectory}, ordered by scenario id.
void eval(const config::RunConfig& cfg, const fs::path& data, Planner planner, const fs::path& anchors,
          const fs::path& checkpoint, const fs::path& out, std::ostream& log);

/// scores.jsonl (records then an aggregate footer), scores.csv and
/// summary.txt in `out`. Returns the aggregate.
pdm::Aggregate score(const config::RunConfig& cfg, const fs::path& data, const fs::path& trajectories,
                     const fs::path& out, std::ostream& log);

/// Prints the suite; throws CheckFailed when any case fails.
void gradcheck(const config::RunConfig& cfg, const fs::path& out, std::ostream& log);

struct AblationRow {
  std::string matrix;
  std::string setting;
  std::size_t params = 0;
  double final_loss = 0.0;
  double pdms = 0.0;
  double epdms = 0.0;
  double delta_pdms = 0.0;  // against the matrix's reference setting
};

/// Named matrices: fusion, red, interaction, experts, or all.
std::vector<std::string> ablation_matrices(const std::string& name);
/// Trains one model per setting and writes ablation.csv and ablation.txt in `out`.
std::vector<AblationRow> ablate(const config::RunConfig& cfg, const std::string& matrix, const fs::path& data,
                                const fs::path& anchors, const fs::path& out, std::ostream& log);

struct PlotInputs {
  fs::path metrics;       // metrics.jsonl from train
  fs::path scores;        // scores.csv from score
  fs::path data;          // dataset for BEV snapshots
  fs::path trajectories;  // planned trajectories for BEV snapshots
  fs::path anchors;
  std::size_t snapshots = 4;
};

/// SVG files in `out`; returns the files written.
std::vector<fs::path> plot(const PlotInputs& in, const fs::path& out, std::ostream& log);

}  // namespace pie::cli
