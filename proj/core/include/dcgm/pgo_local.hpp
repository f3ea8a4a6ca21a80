#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcgm/graph.hpp"

namespace dcgm {

struct GnOptions {
  std::size_t max_iters = 100;
  double gradient_tol = 1e-9;  // infinity norm of J^T r
  double step_shrink = 0.5;    // applied while the objective would increase
  std::size_t max_halvings = 20;

  void validate() const;
};

struct GnResult {
  std::vector<Pose2> poses;
  double objective = 0.0;
  double initial_objective = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Copy of `graph` keeping only the listed edges (and no correlations).
PoseGraph select_edges(const PoseGraph& graph, std::span<const std::size_t> edge_ids);

/// Left-multiplies every pose by the inverse of pose 0.
std::vector<Pose2> anchor_at_first(const std::vector<Pose2>& poses);

/// Throws StructuralError unless every node is reachable from node 0.
void require_connected(const PoseGraph& graph);

/// Linear rotation estimate over all edges, projected to SO(2), followed by
/// linear least squares for translations. Pose 0 is the identity.
std::vector<Pose2> chordal_init(const PoseGraph& graph);

/// Per-node (angle, x, y) Gauss-Newton on sum of residual() over all edges of
/// `graph`, pose 0 held fixed at identity. The initial guess is re-anchored.
GnResult gauss_newton(const PoseGraph& graph, const std::vector<Pose2>& init,
                      const GnOptions& opts = {});

/// Whitened residual vector (3 entries per edge) and its Jacobian with respect
/// to (angle, x, y) of every node, dense. Exposed for derivative checks.
struct Linearization {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
};
Linearization linearize(const PoseGraph& graph, const std::vector<Pose2>& poses);

}  // namespace dcgm
