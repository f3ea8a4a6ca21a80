#include "dcgm/pgo_local.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>

namespace dcgm {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;
using Sparse = Eigen::SparseMatrix<double>;

// Residual block of one edge: 2 translation rows, then one rotation row
// r_R = 2 sqrt(omega_r) sin(delta / 2), so that r^T r equals residual().
struct EdgeLinearization {
  Eigen::Vector3d r;
  Eigen::Matrix3d ji;  // d r / d (theta_i, x_i, y_i)
  Eigen::Matrix3d jj;
};

EdgeLinearization linearize_edge(const Pose2& pi, const Pose2& pj, const RelPoseMeasurement& m) {
  const double st = std::sqrt(m.omega_t);
  const double sr = std::sqrt(m.omega_r);
  const Mat2& ri = pi.rotation();
  const Vec2 dt = pj.translation() - pi.translation();
  Mat2 dri_t;  // d R_i^T / d theta_i
  dri_t << -ri(1, 0), ri(0, 0), -ri(0, 0), -ri(1, 0);
  const double delta = wrap_angle(pj.angle() - pi.angle() - m.measured.angle());

  EdgeLinearization out;
  out.r.head<2>() = st * (ri.transpose() * dt - m.translation());
  out.r(2) = 2.0 * sr * std::sin(0.5 * delta);
  out.ji.setZero();
  out.jj.setZero();
  out.ji.block<2, 1>(0, 0) = st * dri_t * dt;
  out.ji.block<2, 2>(0, 1) = -st * ri.transpose();
  out.jj.block<2, 2>(0, 1) = st * ri.transpose();
  const double dr = sr * std::cos(0.5 * delta);
  out.ji(2, 0) = -dr;
  out.jj(2, 0) = dr;
  return out;
}

double total_cost(const PoseGraph& graph, const std::vector<Pose2>& poses) {
  double c = 0.0;
  for (const auto& m : graph.edges) {
    const auto lin = linearize_edge(poses[m.from], poses[m.to], m);
    c += lin.r.squaredNorm();
  }
  return c;
}

Eigen::VectorXd solve_normal(const Sparse& a, const Eigen::VectorXd& rhs, const char* what) {
  Eigen::SimplicialLDLT<Sparse> ldlt(a);
  if (ldlt.info() != Eigen::Success) {
    throw StructuralError(std::string(what) + ": singular system (disconnected graph?)");
  }
  Eigen::VectorXd x = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !x.allFinite()) {
    throw StructuralError(std::string(what) + ": singular system (disconnected graph?)");
  }
  return x;
}

}  // namespace

void GnOptions::validate() const {
  if (max_iters < 1 || !(gradient_tol > 0.0) || !(step_shrink > 0.0 && step_shrink < 1.0)) {
    throw std::invalid_argument("GnOptions: invalid tolerances");
  }
}

PoseGraph select_edges(const PoseGraph& graph, std::span<const std::size_t> edge_ids) {
  PoseGraph out;
  out.num_nodes = graph.num_nodes;
  out.edges.reserve(edge_ids.size());
  for (std::size_t e : edge_ids) out.edges.push_back(graph.edges.at(e));
  return out;
}

std::vector<Pose2> anchor_at_first(const std::vector<Pose2>& poses) {
  if (poses.empty()) return poses;
  const Pose2 inv = poses.front().inverse();
  std::vector<Pose2> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(inv * p);
  out.front() = Pose2::identity();
  return out;
}

void require_connected(const PoseGraph& graph) {
  if (graph.num_nodes == 0) return;
  std::vector<std::vector<NodeId>> adj(graph.num_nodes);
  for (const auto& m : graph.edges) {
    if (m.from >= graph.num_nodes || m.to >= graph.num_nodes) {
      throw StructuralError("edge references an unknown node");
    }
    adj[m.from].push_back(m.to);
    adj[m.to].push_back(m.from);
  }
  std::vector<bool> seen(graph.num_nodes, false);
  std::queue<NodeId> q;
  q.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (NodeId v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        q.push(v);
      }
    }
  }
  if (count != graph.num_nodes) throw StructuralError("pose graph is not connected");
}

std::vector<Pose2> chordal_init(const PoseGraph& graph) {
  require_connected(graph);
  const std::size_t n = graph.num_nodes;
  if (n == 0) return {};
  if (n == 1) return {Pose2::identity()};
  const auto free_dim = static_cast<Eigen::Index>(2 * (n - 1));

  // Rotations as unit complex numbers z = (cos, sin): z_j = Rot(theta_ij) z_i.
  // Node 0 is eliminated with z_0 = (1, 0).
  Triplets trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(free_dim);
  const auto add = [&](std::size_t a, std::size_t b, const Mat2& blk) {
    if (a == 0 || b == 0) return;
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        trip.emplace_back(2 * (a - 1) + r, 2 * (b - 1) + c, blk(r, c));
      }
    }
  };
  const Vec2 z0(1.0, 0.0);
  for (const auto& m : graph.edges) {
    const Mat2& rot = m.rotation();
    const double w = m.omega_r;
    // residual z_j - M z_i with M = rot
    const Mat2 id = Mat2::Identity();
    add(m.to, m.to, w * id);
    add(m.from, m.from, w * rot.transpose() * rot);
    add(m.to, m.from, -w * rot);
    add(m.from, m.to, -w * rot.transpose());
    if (m.from == 0) rhs.segment<2>(2 * (m.to - 1)) += w * rot * z0;
    if (m.to == 0) rhs.segment<2>(2 * (m.from - 1)) += w * rot.transpose() * z0;
  }
  Sparse a(free_dim, free_dim);
  a.setFromTriplets(trip.begin(), trip.end());
  const Eigen::VectorXd z = solve_normal(a, rhs, "chordal_init");

  std::vector<Mat2> rot(n, Mat2::Identity());
  for (std::size_t i = 1; i < n; ++i) {
    const Vec2 zi = z.segment<2>(2 * (i - 1));
    const double norm = zi.norm();
    if (!(norm > 0.0)) throw StructuralError("chordal_init: degenerate rotation estimate");
    rot[i] = rotation_from_angle(std::atan2(zi.y(), zi.x()));
  }

  // Translations: t_j - t_i = R_i tbar, t_0 = 0.
  trip.clear();
  Eigen::VectorXd trhs = Eigen::VectorXd::Zero(free_dim);
  for (const auto& m : graph.edges) {
    const double w = m.omega_t;
    const Mat2 id = Mat2::Identity();
    add(m.to, m.to, w * id);
    add(m.from, m.from, w * id);
    add(m.to, m.from, -w * id);
    add(m.from, m.to, -w * id);
    const Vec2 b = w * rot[m.from] * m.translation();
    if (m.to != 0) trhs.segment<2>(2 * (m.to - 1)) += b;
    if (m.from != 0) trhs.segment<2>(2 * (m.from - 1)) -= b;
  }
  Sparse at(free_dim, free_dim);
  at.setFromTriplets(trip.begin(), trip.end());
  const Eigen::VectorXd t = solve_normal(at, trhs, "chordal_init");

  std::vector<Pose2> out(n, Pose2::identity());
  for (std::size_t i = 1; i < n; ++i) out[i] = Pose2(rot[i], t.segment<2>(2 * (i - 1)));
  return out;
}

Linearization linearize(const PoseGraph& graph, const std::vector<Pose2>& poses) {
  Linearization out;
  const auto m_rows = static_cast<Eigen::Index>(3 * graph.edges.size());
  const auto n_cols = static_cast<Eigen::Index>(3 * graph.num_nodes);
  out.r = Eigen::VectorXd::Zero(m_rows);
  out.J = Eigen::MatrixXd::Zero(m_rows, n_cols);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& m = graph.edges[e];
    const auto lin = linearize_edge(poses[m.from], poses[m.to], m);
    const auto row = static_cast<Eigen::Index>(3 * e);
    out.r.segment<3>(row) = lin.r;
    out.J.block<3, 3>(row, static_cast<Eigen::Index>(3 * m.from)) = lin.ji;
    out.J.block<3, 3>(row, static_cast<Eigen::Index>(3 * m.to)) = lin.jj;
  }
  return out;
}

GnResult gauss_newton(const PoseGraph& graph, const std::vector<Pose2>& init, const GnOptions& opts) {
  opts.validate();
  if (init.size() != graph.num_nodes) {
    throw std::invalid_argument("gauss_newton: one initial pose per node expected");
  }
  GnResult res;
  res.poses = anchor_at_first(init);
  res.initial_objective = total_cost(graph, res.poses);
  res.objective = res.initial_objective;
  if (!std::isfinite(res.objective)) throw std::runtime_error("gauss_newton: non-finite objective");
  const std::size_t n = graph.num_nodes;
  if (n <= 1) {
    res.converged = true;
    return res;
  }
  const auto dim = static_cast<Eigen::Index>(3 * (n - 1));

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    Triplets trip;
    trip.reserve(graph.edges.size() * 36);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const auto& m : graph.edges) {
      const auto lin = linearize_edge(res.poses[m.from], res.poses[m.to], m);
      const std::array<std::pair<NodeId, const Eigen::Matrix3d*>, 2> parts = {
          std::pair{m.from, &lin.ji}, std::pair{m.to, &lin.jj}};
      for (const auto& [a, ja] : parts) {
        if (a == 0) continue;
        const auto ra = static_cast<Eigen::Index>(3 * (a - 1));
        g.segment<3>(ra) += ja->transpose() * lin.r;
        for (const auto& [b, jb] : parts) {
          if (b == 0) continue;
          const auto rb = static_cast<Eigen::Index>(3 * (b - 1));
          const Eigen::Matrix3d h = ja->transpose() * *jb;
          for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) trip.emplace_back(ra + r, rb + c, h(r, c));
          }
        }
      }
    }
    res.gradient_norm = g.lpNorm<Eigen::Infinity>();
    res.iterations = it;
    if (res.gradient_norm <= opts.gradient_tol) {
      res.converged = true;
      return res;
    }
    Sparse h(dim, dim);
    h.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd step = solve_normal(h, -g, "gauss_newton");

    double alpha = 1.0;
    bool accepted = false;
    for (std::size_t k = 0; k <= opts.max_halvings; ++k) {
      std::vector<Pose2> trial = res.poses;
      for (std::size_t i = 1; i < n; ++i) {
        const auto o = static_cast<Eigen::Index>(3 * (i - 1));
        const Pose2& p = res.poses[i];
        trial[i] = Pose2::from_xytheta(p.x() + alpha * step(o + 1), p.y() + alpha * step(o + 2),
                                       wrap_angle(p.angle() + alpha * step(o)));
      }
      const double c = total_cost(graph, trial);
      if (!std::isfinite(c)) throw std::runtime_error("gauss_newton: non-finite objective");
      if (c <= res.objective) {
        const bool stalled = res.objective - c <= 1e-15 * std::max(1.0, res.objective);
        res.poses = std::move(trial);
        res.objective = c;
        accepted = !stalled;
        break;
      }
      alpha *= opts.step_shrink;
    }
    res.iterations = it + 1;
    if (!accepted) {
      // No measurable decrease left at machine precision.
      res.converged = true;
      return res;
    }
  }
  return res;
}

}  // namespace dcgm
