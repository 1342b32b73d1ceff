#include "pie/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <stdexcept>

#include "pie/ops.hpp"

namespace pie::anchors {

const std::vector<Trajectory>& AnchorBank::of(Command c) const {
  if (c == Command::unknown) throw std::invalid_argument("anchor bank has no 'unknown' class");
  return classes[static_cast<std::size_t>(c)];
}

std::size_t AnchorBank::size() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.size();
  return n;
}

void AnchorBank::validate(std::size_t per_class) const {
  for (std::size_t i = 0; i < kActionClasses; ++i) {
    if (classes[i].size() != per_class) {
      throw std::runtime_error("anchor class '" + std::string(to_string(Command(i))) + "' has " +
                               std::to_string(classes[i].size()) + " anchors, expected " + std::to_string(per_class));
    }
  }
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::size_t nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k, Rng& rng, double tol,
                    std::size_t max_iter) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
  if (points.size() < k) {
    throw std::invalid_argument("kmeans: " + std::to_string(points.size()) + " points for k = " + std::to_string(k));
  }
  KMeansResult r;
  std::vector<std::vector<double>> distinct;
  for (const auto& p : points)
    if (std::find(distinct.begin(), distinct.end(), p) == distinct.end()) distinct.push_back(p);

  if (distinct.size() <= k) {
    for (std::size_t i = 0; i < k; ++i) r.centroids.push_back(distinct[i % distinct.size()]);
    for (const auto& p : points) r.assignment.push_back(nearest(p, r.centroids));
    return r;
  }

  // k-means++ seeding.
  r.centroids.push_back(points[static_cast<std::size_t>(rng.integer(0, std::int64_t(points.size()) - 1))]);
  std::vector<double> d2(points.size());
  while (r.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : r.centroids) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    double u = rng.uniform() * total;
    std::size_t pick = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      if (u < d2[i]) {
        pick = i;
        break;
      }
      u -= d2[i];
    }
    if (pick == points.size()) {
      for (std::size_t i = points.size(); i-- > 0;) {
        if (d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    r.centroids.push_back(points[pick]);
  }

  const std::size_t dim = points.front().size();
  r.assignment.assign(points.size(), 0);
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    for (std::size_t i = 0; i < points.size(); ++i) r.assignment[i] = nearest(points[i], r.centroids);
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[r.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[r.assignment[i]][d] += points[i][d];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (auto& v : sums[c]) v /= double(counts[c]);
      shift = std::max(shift, std::sqrt(sq_dist(sums[c], r.centroids[c])));
      r.centroids[c] = std::move(sums[c]);
    }
    if (shift < tol) break;
  }
  r.iterations = std::min(r.iterations, max_iter);
  for (std::size_t i = 0; i < points.size(); ++i) r.assignment[i] = nearest(points[i], r.centroids);
  return r;
}

AnchorBank cluster_anchors(std::span<const LabeledTrajectory> data, std::size_t k, std::uint64_t seed,
                           std::string source_hash) {
  std::array<std::vector<std::vector<double>>, kActionClasses> per_class;
  for (const auto& item : data) {
    if (item.command == Command::unknown) {
      throw std::invalid_argument("cluster_anchors: 'unknown' command cannot label an anchor class");
    }
    std::vector<double> v;
    for (const auto& p : item.trajectory.points) {
      v.push_back(p.x);
      v.push_back(p.y);
    }
    per_class[static_cast<std::size_t>(item.command)].push_back(std::move(v));
  }
  AnchorBank bank;
  bank.seed = seed;
  bank.source_hash = std::move(source_hash);
  for (std::size_t c = 0; c < kActionClasses; ++c) {
    if (per_class[c].size() < k) {
      throw std::invalid_argument("cluster_anchors: class '" + std::string(to_string(Command(c))) + "' has " +
                                  std::to_string(per_class[c].size()) + " trajectories, needs at least " +
                                  std::to_string(k));
    }
    Rng rng = Rng(seed).fork(c);
    auto result = kmeans(per_class[c], k, rng);
    for (const auto& centroid : result.centroids) {
      Trajectory t;
      for (std::size_t i = 0; i < kWaypoints; ++i) t.points[i] = Pose{centroid[2 * i], centroid[2 * i + 1], 0.0};
      recompute_headings(t);
      bank.classes[c].push_back(t);
    }
  }
  return bank;
}

Command select_anchor_class(std::span<const double> logits) {
  if (logits.size() != kActionClasses) {
    throw std::invalid_argument("select_anchor_class: expected 3 logits, got " + std::to_string(logits.size()));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < kActionClasses; ++i)
    if (logits[i] > logits[best]) best = i;
  return Command(best);
}

ScorerParams ScorerParams::create(ParameterStore& store, const std::string& prefix, std::size_t model_dim) {
  return ScorerParams{Linear::create(store, prefix + ".hidden", 3 * kWaypoints, model_dim),
                      Linear::create(store, prefix + ".embed", model_dim, model_dim)};
}

Tensor ScorerParams::scores(const std::vector<Trajectory>& anchors, const Tensor& feature) const {
  if (anchors.empty()) throw std::invalid_argument("anchor scorer: empty anchor class");
  std::vector<double> flat;
  flat.reserve(anchors.size() * 3 * kWaypoints);
  for (const auto& a : anchors) {
    for (const auto& p : a.points) {
      flat.push_back(0.1 * p.x);
      flat.push_back(0.1 * p.y);
      flat.push_back(p.heading);
    }
  }
  auto emb = embed(ops::silu(hidden(Tensor::matrix(anchors.size(), 3 * kWaypoints, std::move(flat)))));
  return ops::reshape(ops::matmul(emb, ops::transpose(feature)), {anchors.size()});
}

std::size_t select_anchor(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("select_anchor: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

void save_anchor_bank(const std::filesystem::path& path, const AnchorBank& bank) {
  nlohmann::ordered_json j;
  j["version"] = kBankVersion;
  j["seed"] = bank.seed;
  j["source"] = bank.source_hash;
  j["classes"] = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < kActionClasses; ++c) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& t : bank.classes[c]) {
      auto pts = nlohmann::ordered_json::array();
      for (const auto& p : t.points) pts.push_back({p.x, p.y, p.heading});
      arr.push_back(std::move(pts));
    }
    j["classes"][std::string(to_string(Command(c)))] = std::move(arr);
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write anchor bank: " + path.string());
  os << j.dump(1) << '\n';
}

AnchorBank load_anchor_bank(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open anchor bank: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("anchor bank " + path.string() + ": " + e.what());
  }
  auto fail = [&](const std::string& what) -> void { throw std::runtime_error("anchor bank " + path.string() + ": " + what); };
  if (!j.is_object() || !j.contains("version") || j["version"] != kBankVersion) fail("unsupported or missing version");
  AnchorBank bank;
  try {
    bank.seed = j.at("seed").get<std::uint64_t>();
    bank.source_hash = j.at("source").get<std::string>();
    for (std::size_t c = 0; c < kActionClasses; ++c) {
      const std::string name(to_string(Command(c)));
      const auto& arr = j.at("classes").at(name);
      for (const auto& t : arr) {
        if (t.size() != kWaypoints) fail("class '" + name + "' holds an anchor without 8 waypoints");
        Trajectory traj;
        for (std::size_t i = 0; i < kWaypoints; ++i) {
          if (t[i].size() != 3) fail("class '" + name + "' waypoint needs 3 values");
          traj.points[i] = Pose{t[i][0].get<double>(), t[i][1].get<double>(), t[i][2].get<double>()};
        }
        bank.classes[c].push_back(traj);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }
  bank.validate(bank.classes[0].size());
  return bank;
}

}  // namespace pie::anchors
