#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dcgm/pipeline.hpp"
#include "dcgm/synth.hpp"

namespace dcgm {

/// Mean distance between corresponding translations after anchoring both
/// trajectories at pose 0. Throws std::invalid_argument on a length mismatch.
double ate(const std::vector<Pose2>& estimate, const std::vector<Pose2>& reference);

/// cbar_t = p sigma_t, cbar_R = p sqrt(2) sigma_r.
RobustParams thresholds_from_sigmas(double sigma_t, double sigma_r, double p);

/// Correlation weight factor * cbar / (largest number of correlated
/// neighbours of any loop closure), with cbar the smallest loop-closure
/// threshold. Returns 0 when no loop closure has a neighbour.
double auto_correlation_weight(const PoseGraph& graph, const RobustParams& params, double factor);

enum class Variant { kCoupled, kDecoupled };

std::string variant_name(Variant v);  // "DC-GM" / "DC-GMd"

struct BenchConfig {
  SynthConfig synth;
  std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<Variant> variants{Variant::kCoupled, Variant::kDecoupled};
  double cbar_sigmas = 1.0;
  double correlation_factor = 0.1;
  std::size_t jobs = 1;
  DcgmOptions solver;

  static BenchConfig from_json(const std::string& text);
};

struct RunRow {
  std::uint64_t seed = 0;
  double outlier_ratio = 0.0;
  Variant variant = Variant::kCoupled;
  double avg_translation_error = 0.0;  // against ground truth
  double ate_reference = 0.0;          // against the outlier-free optimum
  double pct_outliers_rejected = 0.0;
  double pct_inliers_rejected = 0.0;
  int rank = 0;
  double lower_bound = 0.0;
  double objective = 0.0;
  double wall_time_s = 0.0;
  bool tight = false;
};

/// Runs one (ratio, seed) cell for every configured variant.
std::vector<RunRow> run_cell(const BenchConfig& config, double ratio, std::uint64_t seed);

/// Every (ratio, seed, variant), rows ordered by ratio, then seed, then
/// variant regardless of `jobs`.
std::vector<RunRow> run_benchmark(const BenchConfig& config);

std::string csv_header();
std::string csv_row(const RunRow& row);
void write_csv(std::ostream& out, const std::vector<RunRow>& rows);

/// SVG with the reference (green) and estimate (black) as polylines and each
/// rejected loop closure as a red segment between estimated poses.
std::string plot_trajectories(const std::vector<Pose2>& estimate, const std::vector<Pose2>& reference,
                              const std::vector<std::pair<NodeId, NodeId>>& rejected);

}  // namespace dcgm
