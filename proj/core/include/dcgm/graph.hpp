#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcgm/pose2.hpp"

namespace dcgm {

using NodeId = std::size_t;

/// Thrown when a graph violates its structural invariants.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Relative pose measurement T_from^{-1} T_to with isotropic weights.
struct RelPoseMeasurement {
  NodeId from = 0;
  NodeId to = 0;
  Pose2 measured;
  double omega_t = 1.0;  // translation information, 1/m^2
  double omega_r = 1.0;  // rotation concentration

  const Mat2& rotation() const { return measured.rotation(); }
  const Vec2& translation() const { return measured.translation(); }
  bool is_odometry() const { return to == from + 1; }

  /// Omega = blkdiag(omega_r/2 I_2, omega_t)
  Mat3 information() const;
};

/// Correlation between two loop closures, referenced by edge index.
struct EdgeCorrelation {
  std::size_t first = 0;
  std::size_t second = 0;
  double weight = 0.0;
};

struct PoseGraph {
  std::size_t num_nodes = 0;
  std::vector<RelPoseMeasurement> edges;
  std::vector<EdgeCorrelation> correlations;
};

struct EdgePartition {
  std::vector<std::size_t> odometry;
  std::vector<std::size_t> loop_closures;
};

/// Edge e is odometry iff to == from + 1. Both lists keep input order.
EdgePartition partition_edges(const PoseGraph& graph);

/// Throws StructuralError on: node ids out of range, from == to, non-positive
/// weights, a broken odometry chain, or correlations that are not between two
/// distinct loop closures / are duplicated / carry a negative weight.
void validate(const PoseGraph& graph);

/// Maximum admissible residuals of the truncated least-squares cost.
struct RobustParams {
  double cbar_t = 1.0;  // meters
  double cbar_R = 1.0;  // Frobenius units

  /// omega_t * cbar_t^2 + omega_r / 2 * cbar_R^2
  double cbar(double omega_t, double omega_r) const {
    return omega_t * cbar_t * cbar_t + 0.5 * omega_r * cbar_R * cbar_R;
  }
  double cbar(const RelPoseMeasurement& m) const { return cbar(m.omega_t, m.omega_r); }

  /// Throws std::invalid_argument unless both thresholds are positive.
  void validate() const;
};

/// omega_t ||R_i^T (t_j - t_i) - tbar||^2 + omega_r / 2 ||R_j - R_i Rbar||_F^2
double residual(const Pose2& ti, const Pose2& tj, const RelPoseMeasurement& m);

/// ||T_j - T_i Tbar||^2_Omega = trace(E Omega E^T), E = [R_j t_j] - [R_i t_i] Tbar.
/// Equal to residual() for every input; kept separate as the matrix-form route.
double residual_trace_form(const Pose2& ti, const Pose2& tj, const RelPoseMeasurement& m);

/// Sum of residuals over the listed edges.
double pgo_cost(const PoseGraph& graph, const std::vector<Pose2>& poses,
                const std::vector<std::size_t>& edge_ids);

/// Poses obtained by chaining the odometry edges from an identity pose 0.
/// Throws StructuralError if the chain is broken.
std::vector<Pose2> integrate_odometry(const PoseGraph& graph);

/// Sum of residuals over all edges.
double pgo_cost(const PoseGraph& graph, const std::vector<Pose2>& poses);

}  // namespace dcgm
