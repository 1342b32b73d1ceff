#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pie/params.hpp"
#include "pie/rng.hpp"
#include "pie/trajectory.hpp"

namespace pie::anchors {

inline constexpr std::size_t kAnchorsPerClass = 20;
inline constexpr int kBankVersion = 1;

struct AnchorBank {
  std::array<std::vector<Trajectory>, kActionClasses> classes;  // indexed by Command
  std::uint64_t seed = 0;
  std::string source_hash;

  const std::vector<Trajectory>& of(Command c) const;
  std::size_t size() const;
  // Throws unless every class holds exactly `per_class` anchors.
  void validate(std::size_t per_class = kAnchorsPerClass) const;
  bool operator==(const AnchorBank&) const = default;
};

struct LabeledTrajectory {
  Command command = Command::straight;
  Trajectory trajectory;
};

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;
  std::size_t iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below `tol` or `max_iter` is reached. With fewer distinct
/// points than k, the distinct points are used as centroids, repeated in
/// order to fill k.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k, Rng& rng,
                    double tol = 1e-6, std::size_t max_iter = 100);

/// Clusters (x, y) waypoint vectors per command class. Unknown commands are
/// rejected; every class needs at least k trajectories.
AnchorBank cluster_anchors(std::span<const LabeledTrajectory> data, std::size_t k = kAnchorsPerClass,
                           std::uint64_t seed = 0, std::string source_hash = {});

/// Argmax over {left, straight, right}; ties resolve to the earlier class.
Command select_anchor_class(std::span<const double> logits);

/// Scores anchors against a trajectory feature: score_i = <embed(anchor_i), f>.
struct ScorerParams {
  Linear hidden;  // 24 -> D, SiLU
  Linear embed;   // D -> D

  static ScorerParams create(ParameterStore& store, const std::string& prefix, std::size_t model_dim);
  // (n_anchors) scores for a (1, D) feature.
  Tensor scores(const std::vector<Trajectory>& anchors, const Tensor& feature) const;
};

/// Index of the highest score, lowest index on ties.
std::size_t select_anchor(std::span<const double> scores);

void save_anchor_bank(const std::filesystem::path& path, const AnchorBank& bank);
AnchorBank load_anchor_bank(const std::filesystem::path& path);

}  // namespace pie::anchors
