#include "dcgm/graph.hpp"

#include <algorithm>
#include <set>
#include <utility>

namespace dcgm {

Mat3 RelPoseMeasurement::information() const {
  Mat3 omega = Mat3::Zero();
  omega(0, 0) = 0.5 * omega_r;
  omega(1, 1) = 0.5 * omega_r;
  omega(2, 2) = omega_t;
  return omega;
}

EdgePartition partition_edges(const PoseGraph& graph) {
  EdgePartition part;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    (graph.edges[e].is_odometry() ? part.odometry : part.loop_closures).push_back(e);
  }
  return part;
}

void validate(const PoseGraph& graph) {
  const std::size_t n = graph.num_nodes;
  if (n == 0) throw StructuralError("pose graph has no nodes");

  std::vector<bool> chain(n > 0 ? n - 1 : 0, false);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& m = graph.edges[e];
    const std::string where = "edge " + std::to_string(e);
    if (m.from >= n || m.to >= n) throw StructuralError(where + ": node id out of range");
    if (m.from == m.to) throw StructuralError(where + ": self loop");
    if (!(m.omega_t > 0.0) || !(m.omega_r > 0.0)) {
      throw StructuralError(where + ": weights must be positive");
    }
    if (m.is_odometry()) chain[m.from] = true;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!chain[i]) {
      throw StructuralError("odometry chain is broken between nodes " + std::to_string(i) +
                            " and " + std::to_string(i + 1));
    }
  }

  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& c : graph.correlations) {
    if (c.first >= graph.edges.size() || c.second >= graph.edges.size()) {
      throw StructuralError("correlation references a missing edge");
    }
    if (c.first == c.second) throw StructuralError("correlation pairs an edge with itself");
    if (graph.edges[c.first].is_odometry() || graph.edges[c.second].is_odometry()) {
      throw StructuralError("correlations may only reference loop closures");
    }
    if (!(c.weight >= 0.0)) throw StructuralError("correlation weight must be non-negative");
    const auto key = std::minmax(c.first, c.second);
    if (!seen.insert(key).second) throw StructuralError("duplicate correlation pair");
  }
}

void RobustParams::validate() const {
  if (!(cbar_t > 0.0) || !(cbar_R > 0.0)) {
    throw std::invalid_argument("RobustParams: thresholds must be positive");
  }
}

double residual(const Pose2& ti, const Pose2& tj, const RelPoseMeasurement& m) {
  const Mat2& ri = ti.rotation();
  const Vec2 et = ri.transpose() * (tj.translation() - ti.translation()) - m.translation();
  const Mat2 er = tj.rotation() - ri * m.rotation();
  return m.omega_t * et.squaredNorm() + 0.5 * m.omega_r * er.squaredNorm();
}

double residual_trace_form(const Pose2& ti, const Pose2& tj, const RelPoseMeasurement& m) {
  const Eigen::Matrix<double, 2, 3> err = tj.matrix() - ti.matrix() * m.measured.homogeneous();
  return (err * m.information() * err.transpose()).trace();
}

std::vector<Pose2> integrate_odometry(const PoseGraph& graph) {
  const std::size_t n = graph.num_nodes;
  std::vector<const RelPoseMeasurement*> step(n > 0 ? n - 1 : 0, nullptr);
  for (const auto& m : graph.edges) {
    if (m.is_odometry() && m.to < n && !step[m.from]) step[m.from] = &m;
  }
  std::vector<Pose2> poses(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!step[i]) throw StructuralError("odometry chain is broken at node " + std::to_string(i));
    poses[i + 1] = poses[i] * step[i]->measured;
  }
  return poses;
}

double pgo_cost(const PoseGraph& graph, const std::vector<Pose2>& poses,
                const std::vector<std::size_t>& edge_ids) {
  double total = 0.0;
  for (std::size_t e : edge_ids) {
    const auto& m = graph.edges[e];
    total += residual(poses[m.from], poses[m.to], m);
  }
  return total;
}

double pgo_cost(const PoseGraph& graph, const std::vector<Pose2>& poses) {
  double total = 0.0;
  for (const auto& m : graph.edges) total += residual(poses[m.from], poses[m.to], m);
  return total;
}

}  // namespace dcgm
