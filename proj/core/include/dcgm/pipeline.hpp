#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcgm/graph.hpp"
#include "dcgm/model.hpp"
#include "dcgm/pgo_local.hpp"
#include "dcgm/sdp.hpp"

namespace dcgm {

struct Rounding {
  std::vector<Pose2> poses;  // pose 0 is the identity
  std::vector<int> thetas;   // one per loop closure
  bool used_eigen_fallback = false;
};

/// Reads the anchor block row of Z: pose blocks give [R_i t_i] (R_i projected
/// to SO(2)), theta blocks give sign(trace), 0 mapped to +1. Falls back to a
/// top-d eigenvector factorization if the anchor diagonal block is off I_d by
/// more than 1e-3.
Rounding round_solution(const Matrix& z, const BlockLayout& layout);

struct DcgmOptions {
  SdpOptions sdp;
  GnOptions gn;
  double rank_tol = 1e-3;
  bool refine = true;
};

struct StageTimings {
  double build_s = 0.0;
  double sdp_s = 0.0;
  double resolve_s = 0.0;
  double refine_s = 0.0;
  double total_s = 0.0;
};

struct DcgmResult {
  std::vector<Pose2> poses;
  std::vector<int> thetas;                 // per loop closure, partition order
  std::vector<std::size_t> rejected_edges;  // loop-closure indices with theta = -1
  SdpSolution sdp;                          // first solve
  std::optional<SdpSolution> second_sdp;    // after rejection, when run
  double lower_bound = 0.0;  // sdp.objective + sum cbar / 2, in objective_sum units
  double refit_objective = 0.0;  // objective_sum at (poses, thetas)
  bool tight = false;
  StageTimings timings;
};

/// Copy of `graph` without the listed edges; correlations touching a removed
/// edge are dropped and the rest re-indexed.
PoseGraph remove_edges(const PoseGraph& graph, const std::vector<std::size_t>& edge_ids);

/// Solve, check rank, round, reject theta = -1 edges and re-solve once when
/// the first relaxation is not rank d, then refine on the accepted edges.
DcgmResult dcgm_solve(const PoseGraph& graph, const RobustParams& params,
                      const DcgmOptions& opts = {});

struct Classification {
  double pct_outliers_rejected = 100.0;
  double pct_inliers_rejected = 0.0;
};

/// Percentages over true outliers and true inliers; empty denominators give
/// 100 and 0.
Classification classify_report(const std::vector<int>& thetas, const std::vector<bool>& inlier_mask);
Classification classify_report(const DcgmResult& result, const std::vector<bool>& inlier_mask);

std::string result_to_json(const DcgmResult& result);

/// Poses and thetas back from result_to_json output.
std::pair<std::vector<Pose2>, std::vector<int>> result_from_json(const std::string& text);

}  // namespace dcgm
