#include "dcgm/model.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace dcgm {

double tls(double x, double c) { return std::abs(x) <= c ? x * x : c * c; }

TlsDecision tls_theta(double x, double c) {
  const double accept = x * x;  // theta = +1
  const double reject = c * c;  // theta = -1
  if (std::abs(x) <= c) return {accept, +1};
  return {reject, -1};
}

double ising_energy(std::span<const int> thetas, std::span<const UnaryPotential> unary,
                    std::span<const PairPotential> pairs) {
  double e = 0.0;
  for (const auto& u : unary) e -= u.coefficient * thetas[u.node];
  for (const auto& p : pairs) e -= p.coefficient * thetas[p.first] * thetas[p.second];
  return e;
}

double objective_sum(const PoseGraph& graph, const std::vector<Pose2>& poses,
                     std::span<const int> thetas, const RobustParams& params) {
  const auto part = partition_edges(graph);
  if (thetas.size() != part.loop_closures.size()) {
    throw std::invalid_argument("objective_sum: one theta per loop closure expected");
  }
  std::vector<std::size_t> lc_index(graph.edges.size(), 0);
  double total = pgo_cost(graph, poses, part.odometry);
  for (std::size_t e = 0; e < part.loop_closures.size(); ++e) {
    const auto& m = graph.edges[part.loop_closures[e]];
    lc_index[part.loop_closures[e]] = e;
    const double r = residual(poses[m.from], poses[m.to], m);
    const double th = thetas[e];
    total += 0.5 * (1.0 + th) * r + 0.5 * (1.0 - th) * params.cbar(m);
  }
  for (const auto& c : graph.correlations) {
    total -= c.weight * thetas[lc_index[c.first]] * thetas[lc_index[c.second]];
  }
  return total;
}

double DcgmProblem::dropped_constant() const {
  double s = 0.0;
  for (double c : cbar) s += 0.5 * c;
  return s;
}

SparseMatrix connection_laplacian(const PoseGraph& graph, std::span<const std::size_t> edge_ids) {
  const std::size_t dim = (kDim + 1) * graph.num_nodes;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(edge_ids.size() * 36);
  const auto add_block = [&trip](std::size_t r0, std::size_t c0, const Mat3& b) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (b(r, c) != 0.0) trip.emplace_back(r0 + r, c0 + c, b(r, c));
      }
    }
  };
  for (std::size_t e : edge_ids) {
    const auto& m = graph.edges[e];
    const Mat3 tbar = m.measured.homogeneous();
    const Mat3 omega = m.information();
    const std::size_t i = 3 * m.from;
    const std::size_t j = 3 * m.to;
    // Column block of A for this edge: -Tbar at row i, +I at row j.
    add_block(i, i, tbar * omega * tbar.transpose());
    add_block(j, j, omega);
    add_block(i, j, -tbar * omega);
    add_block(j, i, -omega * tbar.transpose());
  }
  SparseMatrix l(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  l.setFromTriplets(trip.begin(), trip.end());
  return l;
}

Matrix build_Q(const PoseGraph& graph, const RobustParams& params, const BlockLayout& layout) {
  const auto part = partition_edges(graph);
  const std::size_t d = BlockLayout::d;
  const auto dd = static_cast<double>(d);
  Matrix q = Matrix::Zero(layout.dim(), layout.dim());
  q.topLeftCorner(layout.pose_dim(), layout.pose_dim()) =
      Matrix(connection_laplacian(graph, part.odometry));

  std::vector<std::size_t> lc_index(graph.edges.size(), 0);
  const std::size_t anchor = layout.anchor_offset();
  for (std::size_t e = 0; e < part.loop_closures.size(); ++e) {
    lc_index[part.loop_closures[e]] = e;
    const double cbar = params.cbar(graph.edges[part.loop_closures[e]]);
    const std::size_t th = layout.theta_offset(e);
    for (std::size_t k = 0; k < d; ++k) {
      q(th + k, anchor + k) = -cbar / (4.0 * dd);
      q(anchor + k, th + k) = -cbar / (4.0 * dd);
    }
  }
  for (const auto& c : graph.correlations) {
    const std::size_t a = layout.theta_offset(lc_index[c.first]);
    const std::size_t b = layout.theta_offset(lc_index[c.second]);
    for (std::size_t k = 0; k < d; ++k) {
      q(a + k, b + k) -= c.weight / (2.0 * dd);
      q(b + k, a + k) -= c.weight / (2.0 * dd);
    }
  }
  return q;
}

std::vector<LoopTerm> build_loop_terms(const PoseGraph& graph, const BlockLayout& layout) {
  (void)layout;
  std::vector<LoopTerm> terms;
  for (std::size_t e : partition_edges(graph).loop_closures) {
    const auto& m = graph.edges[e];
    const Mat3 tbar = m.measured.homogeneous();
    const Mat3 omega = m.information();
    LoopTerm t;
    t.edge = e;
    t.from = m.from;
    t.to = m.to;
    // L(G_e) restricted to the rows of (from, to), scaled by 1/4.
    t.U.topLeftCorner<3, 3>() = tbar * omega * tbar.transpose();
    t.U.topRightCorner<3, 3>() = -tbar * omega;
    t.U.bottomLeftCorner<3, 3>() = -omega * tbar.transpose();
    t.U.bottomRightCorner<3, 3>() = omega;
    t.U *= 0.25;
    terms.push_back(t);
  }
  return terms;
}

DcgmProblem build_problem(const PoseGraph& graph, const RobustParams& params) {
  validate(graph);
  params.validate();
  const auto part = partition_edges(graph);
  DcgmProblem p;
  p.layout = BlockLayout(graph.num_nodes, part.loop_closures.size());
  p.Q = build_Q(graph, params, p.layout);
  p.loop_terms = build_loop_terms(graph, p.layout);
  p.odometry_edges = part.odometry;
  p.loop_edges = part.loop_closures;
  std::vector<std::size_t> lc_index(graph.edges.size(), 0);
  for (std::size_t e = 0; e < part.loop_closures.size(); ++e) {
    lc_index[part.loop_closures[e]] = e;
    p.cbar.push_back(params.cbar(graph.edges[part.loop_closures[e]]));
  }
  for (const auto& c : graph.correlations) {
    p.correlations.push_back({lc_index[c.first], lc_index[c.second], c.weight});
  }
  return p;
}

namespace {

// Row indices of the two pose blocks touched by a loop term.
std::array<std::size_t, 6> term_rows(const LoopTerm& t, const BlockLayout& layout) {
  const std::size_t i = layout.pose_offset(t.from);
  const std::size_t j = layout.pose_offset(t.to);
  return {i, i + 1, i + 2, j, j + 1, j + 2};
}

// y = Z[P, theta_e] + Z[P, anchor], the 6 x d block that carries the loop term.
Eigen::Matrix<double, 6, 2> loop_block(const LoopTerm& t, std::size_t e, const BlockLayout& layout,
                                       const Matrix& z) {
  const auto rows = term_rows(t, layout);
  const std::size_t th = layout.theta_offset(e);
  const std::size_t an = layout.anchor_offset();
  Eigen::Matrix<double, 6, 2> y;
  for (int r = 0; r < 6; ++r) {
    for (int k = 0; k < 2; ++k) y(r, k) = z(rows[r], th + k) + z(rows[r], an + k);
  }
  return y;
}

}  // namespace

SparseMatrix dense_U(const LoopTerm& term, const BlockLayout& layout) {
  const auto rows = term_rows(term, layout);
  std::vector<Eigen::Triplet<double>> trip;
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      if (term.U(r, c) != 0.0) trip.emplace_back(rows[r], rows[c], term.U(r, c));
    }
  }
  SparseMatrix u(layout.dim(), layout.dim());
  u.setFromTriplets(trip.begin(), trip.end());
  return u;
}

SparseMatrix dense_W(std::size_t loop_index, const BlockLayout& layout) {
  const std::size_t th = layout.theta_offset(loop_index);
  const std::size_t an = layout.anchor_offset();
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t k = 0; k < BlockLayout::d; ++k) {
    trip.emplace_back(th + k, th + k, 1.0);
    trip.emplace_back(an + k, an + k, 1.0);
    trip.emplace_back(th + k, an + k, 1.0);
    trip.emplace_back(an + k, th + k, 1.0);
  }
  SparseMatrix w(layout.dim(), layout.dim());
  w.setFromTriplets(trip.begin(), trip.end());
  return w;
}

Matrix embed_X(const std::vector<Pose2>& poses, std::span<const int> thetas,
               const BlockLayout& layout) {
  if (poses.size() != layout.n || thetas.size() != layout.ell) {
    throw std::invalid_argument("embed_X: sizes do not match the layout");
  }
  Matrix x = Matrix::Zero(BlockLayout::d, layout.dim());
  for (std::size_t i = 0; i < layout.n; ++i) {
    x.block(0, layout.pose_offset(i), 2, 3) = poses[i].matrix();
  }
  for (std::size_t e = 0; e < layout.ell; ++e) {
    x.block(0, layout.theta_offset(e), 2, 2) = static_cast<double>(thetas[e]) * Mat2::Identity();
  }
  x.block(0, layout.anchor_offset(), 2, 2) = Mat2::Identity();
  return x;
}

Matrix embed_gram(const std::vector<Pose2>& poses, std::span<const int> thetas,
                  const BlockLayout& layout) {
  const Matrix x = embed_X(poses, thetas, layout);
  return x.transpose() * x;
}

double loop_terms_value(const DcgmProblem& problem, const Matrix& z) {
  double total = 0.0;
  for (std::size_t e = 0; e < problem.loop_terms.size(); ++e) {
    const auto& t = problem.loop_terms[e];
    const auto y = loop_block(t, e, problem.layout, z);
    total += (y.transpose() * t.U * y).trace();
  }
  return total;
}

double objective_trace(const DcgmProblem& problem, const Matrix& z) {
  const auto dim = static_cast<Eigen::Index>(problem.layout.dim());
  if (z.rows() != dim || z.cols() != dim) {
    throw std::invalid_argument("objective_trace: Z has the wrong dimension");
  }
  return problem.Q.cwiseProduct(z).sum() + loop_terms_value(problem, z);
}

Matrix objective_gradient(const DcgmProblem& problem, const Matrix& z) {
  Matrix g = problem.Q;
  const auto& layout = problem.layout;
  const std::size_t an = layout.anchor_offset();
  for (std::size_t e = 0; e < problem.loop_terms.size(); ++e) {
    const auto& t = problem.loop_terms[e];
    const auto rows = term_rows(t, layout);
    const Eigen::Matrix<double, 6, 2> uy = t.U * loop_block(t, e, layout, z);
    const std::size_t th = layout.theta_offset(e);
    for (int r = 0; r < 6; ++r) {
      for (int k = 0; k < 2; ++k) {
        g(rows[r], th + k) += uy(r, k);
        g(rows[r], an + k) += uy(r, k);
        g(th + k, rows[r]) += uy(r, k);
        g(an + k, rows[r]) += uy(r, k);
      }
    }
  }
  return g;
}

std::string problem_to_json(const DcgmProblem& problem) {
  const auto dense = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.cols());
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["d"] = BlockLayout::d;
  j["n"] = problem.layout.n;
  j["ell"] = problem.layout.ell;
  j["dim"] = problem.layout.dim();
  j["Q"] = dense(problem.Q);
  j["cbar"] = problem.cbar;
  j["loop_terms"] = nlohmann::json::array();
  for (std::size_t e = 0; e < problem.loop_terms.size(); ++e) {
    const auto& t = problem.loop_terms[e];
    j["loop_terms"].push_back({{"edge", t.edge},
                               {"from", t.from},
                               {"to", t.to},
                               {"U", dense(Matrix(dense_U(t, problem.layout)))},
                               {"W", dense(Matrix(dense_W(e, problem.layout)))}});
  }
  j["correlations"] = nlohmann::json::array();
  for (const auto& c : problem.correlations) {
    j["correlations"].push_back({{"a", c.a}, {"b", c.b}, {"weight", c.weight}});
  }
  return j.dump();
}

}  // namespace dcgm
