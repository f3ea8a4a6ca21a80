#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dcgm/graph.hpp"

namespace dcgm {

enum class SynthKind { kGrid, kManhattan };

struct SynthConfig {
  SynthKind kind = SynthKind::kGrid;
  std::size_t rows = 10;    // grid
  std::size_t cols = 20;    // grid
  std::size_t steps = 500;  // manhattan walk length (poses = steps + 1)
  double sigma_t = 0.1;     // m
  double sigma_r = 0.01;    // rad
  /// Measurements are exact when set; weights still follow sigma_t / sigma_r.
  bool noiseless = false;
  double outlier_ratio = 0.0;
  std::size_t group_size = 5;
  bool heterogeneous_groups = false;
  /// 0 keeps every candidate loop closure; otherwise whole groups are kept at
  /// random until this many loop closures are selected.
  std::size_t max_loop_closures = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  std::vector<Pose2> poses;
  std::vector<bool> inlier_mask;  // one entry per loop closure, in edge order
};

struct SynthDataset {
  PoseGraph graph;
  GroundTruth truth;
};

/// Boustrophedon trajectory over rows x cols unit-spaced nodes; loop closures
/// join vertically adjacent nodes of consecutive rows, in contiguous groups.
SynthDataset generate_grid(const SynthConfig& cfg);

/// Seeded random walk on a unit lattice with 90 degree turns; a loop closure
/// is added every time the walk re-enters a visited cell.
SynthDataset generate_manhattan(const SynthConfig& cfg);

SynthDataset generate(const SynthConfig& cfg);

/// Applies the generative noise model: tbar = t + N(0, sigma_t^2 I),
/// Rbar = R * Rot(eps), eps ~ wrapped N(0, sigma_r^2).
Pose2 perturb_measurement(const Pose2& true_rel, double sigma_t, double sigma_r,
                          std::mt19937_64& rng);

struct SpoiledGraph {
  PoseGraph graph;
  std::vector<bool> inlier_mask;  // existing loop closures true, added ones false
};

/// Appends `count` outlier loop closures in groups of consecutive node pairs
/// (i + k, j + k), each with a random relative pose drawn over the extent of
/// the odometry estimate and the graph's median weights. Existing edges are
/// kept as they are and treated as inliers.
SpoiledGraph spoil_with_outliers(const PoseGraph& graph, std::size_t count, std::size_t group_size,
                                 std::uint64_t seed);

/// {"inlier_mask":[...]}
std::string mask_to_json(const std::vector<bool>& mask);
std::vector<bool> mask_from_json(const std::string& text);

}  // namespace dcgm
