#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "dcgm/graph.hpp"
#include "dcgm/model.hpp"
#include "dcgm/pose2.hpp"

namespace dcgm::testing {

inline Pose2 random_pose(std::mt19937_64& rng, double spread = 3.0) {
  std::uniform_real_distribution<double> t(-spread, spread);
  std::uniform_real_distribution<double> a(-std::numbers::pi, std::numbers::pi);
  return Pose2::from_xytheta(t(rng), t(rng), a(rng));
}

inline std::vector<Pose2> random_poses(std::mt19937_64& rng, std::size_t n) {
  std::vector<Pose2> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_pose(rng));
  return out;
}

inline RelPoseMeasurement random_measurement(std::mt19937_64& rng, NodeId from, NodeId to) {
  std::uniform_real_distribution<double> w(0.5, 20.0);
  RelPoseMeasurement m;
  m.from = from;
  m.to = to;
  m.measured = random_pose(rng, 2.0);
  m.omega_t = w(rng);
  m.omega_r = w(rng);
  return m;
}

/// Odometry chain over n nodes plus `loops` distinct random loop closures and,
/// if requested, random correlations between them. Measurements are random.
inline PoseGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t loops,
                              bool correlations = false) {
  PoseGraph g;
  g.num_nodes = n;
  for (NodeId i = 0; i + 1 < n; ++i) g.edges.push_back(random_measurement(rng, i, i + 1));
  std::set<std::pair<NodeId, NodeId>> used;
  std::uniform_int_distribution<NodeId> node(0, n - 1);
  std::size_t guard = 0;
  while (used.size() < loops && guard++ < 10000) {
    NodeId a = node(rng);
    NodeId b = node(rng);
    if (a == b || b == a + 1 || !used.insert({a, b}).second) continue;
    g.edges.push_back(random_measurement(rng, a, b));
  }
  if (correlations) {
    const auto part = partition_edges(g);
    std::uniform_real_distribution<double> w(0.0, 2.0);
    std::bernoulli_distribution pick(0.5);
    for (std::size_t x = 0; x < part.loop_closures.size(); ++x) {
      for (std::size_t y = x + 1; y < part.loop_closures.size(); ++y) {
        if (pick(rng)) g.correlations.push_back({part.loop_closures[x], part.loop_closures[y], w(rng)});
      }
    }
  }
  return g;
}

inline std::vector<int> random_thetas(std::mt19937_64& rng, std::size_t ell) {
  std::bernoulli_distribution b(0.5);
  std::vector<int> th(ell);
  for (auto& t : th) t = b(rng) ? 1 : -1;
  return th;
}

/// Graph whose measurements are exactly consistent with `poses` on the given
/// loop closures, with uniform weights.
inline PoseGraph consistent_graph(const std::vector<Pose2>& poses,
                                  const std::vector<std::pair<NodeId, NodeId>>& loops,
                                  double omega_t = 100.0, double omega_r = 10000.0) {
  PoseGraph g;
  g.num_nodes = poses.size();
  const auto add = [&](NodeId a, NodeId b) {
    RelPoseMeasurement m;
    m.from = a;
    m.to = b;
    m.measured = between(poses[a], poses[b]);
    m.omega_t = omega_t;
    m.omega_r = omega_r;
    g.edges.push_back(m);
  };
  for (NodeId i = 0; i + 1 < poses.size(); ++i) add(i, i + 1);
  for (const auto& [a, b] : loops) add(a, b);
  return g;
}

inline double max_pose_error(const std::vector<Pose2>& a, const std::vector<Pose2>& b) {
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err = std::max(err, (a[i].translation() - b[i].translation()).norm());
    err = std::max(err, (a[i].rotation() - b[i].rotation()).norm());
  }
  return err;
}

/// One loop closure (edge index n-1, from 0 to 2) correlated with k other loop
/// closures from node 0. Poses lie on a line and every measurement is exact,
/// except the first loop closure, whose residual is set by `set_residual`.
struct StarInstance {
  PoseGraph graph;
  std::vector<Pose2> poses;
  RobustParams params;
  std::size_t center = 0;  // edge index of the probed loop closure

  double cbar() const { return params.cbar(graph.edges[center]); }

  void set_residual(double r) {
    // omega_t = 1, so an x offset of sqrt(r) gives residual r.
    const auto& p = poses;
    graph.edges[center].measured = between(p[0], p[2]) * Pose2::from_xytheta(std::sqrt(r), 0, 0);
  }
};

inline StarInstance star_instance(const std::vector<double>& weights) {
  const std::size_t k = weights.size();
  std::vector<Pose2> poses;
  for (std::size_t i = 0; i < k + 3; ++i) poses.push_back(Pose2::from_xytheta(double(i), 0.0, 0.0));
  std::vector<std::pair<NodeId, NodeId>> loops;
  for (std::size_t j = 2; j < k + 3; ++j) loops.emplace_back(0, j);
  StarInstance s;
  s.graph = consistent_graph(poses, loops, 1.0, 1.0);
  s.poses = poses;
  s.params.cbar_t = 1.0;
  s.params.cbar_R = 1.0;
  s.center = poses.size() - 1;
  for (std::size_t q = 0; q < k; ++q) s.graph.correlations.push_back({s.center, s.center + 1 + q, weights[q]});
  return s;
}

/// Label of the probed loop closure that minimizes objective_sum with the
/// neighbours held at `neighbour_theta`, found by trying both values.
inline int star_best_theta(const StarInstance& s, int neighbour_theta) {
  const std::size_t ell = partition_edges(s.graph).loop_closures.size();
  std::vector<int> th(ell, neighbour_theta);
  th[0] = +1;
  const double accept = objective_sum(s.graph, s.poses, th, s.params);
  th[0] = -1;
  const double reject = objective_sum(s.graph, s.poses, th, s.params);
  return reject < accept ? -1 : +1;
}

/// Smallest residual on a grid of spacing `step` at which the probed label is -1.
inline double star_flip_residual(StarInstance s, int neighbour_theta, double step, double r_max) {
  for (double r = 0.0; r <= r_max; r += step) {
    s.set_residual(r);
    if (star_best_theta(s, neighbour_theta) < 0) return r;
  }
  return r_max;
}

}  // namespace dcgm::testing
