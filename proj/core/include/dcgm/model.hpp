#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcgm/graph.hpp"

namespace dcgm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------------------
// Sum form of the discrete-continuous objective
// ---------------------------------------------------------------------------

/// Truncated least squares: x^2 if |x| <= c, c^2 otherwise.
double tls(double x, double c);

struct TlsDecision {
  double value;
  int theta;  // +1 accept, -1 reject
};

/// min over theta in {-1, +1} of (1 + theta)/2 x^2 + (1 - theta)/2 c^2.
/// Ties (|x| == c) resolve to theta = +1.
TlsDecision tls_theta(double x, double c);

struct UnaryPotential {
  std::size_t node;
  double coefficient;
};

struct PairPotential {
  std::size_t first;
  std::size_t second;
  double coefficient;
};

/// Ising energy -sum c_i theta_i - sum c_ij theta_i theta_j.
double ising_energy(std::span<const int> thetas, std::span<const UnaryPotential> unary,
                    std::span<const PairPotential> pairs);

/// Sum over odometry of ||res||^2_Omega
///   + sum over loop closures of (1+theta)/2 ||res||^2_Omega + (1-theta)/2 cbar_e
///   - sum over correlated pairs of c theta theta'.
/// `thetas` is indexed by loop closure (partition order).
double objective_sum(const PoseGraph& graph, const std::vector<Pose2>& poses,
                     std::span<const int> thetas, const RobustParams& params);

// ---------------------------------------------------------------------------
// Matrix form
// ---------------------------------------------------------------------------

/// Column layout of X = [T_1 ... T_n | Theta_1 ... Theta_l | I_d].
struct BlockLayout {
  static constexpr std::size_t d = kDim;
  std::size_t n = 0;    // poses
  std::size_t ell = 0;  // loop closures

  BlockLayout() = default;
  BlockLayout(std::size_t poses, std::size_t loop_closures) : n(poses), ell(loop_closures) {}

  std::size_t pose_block() const { return d + 1; }
  std::size_t pose_offset(std::size_t i) const { return (d + 1) * i; }
  std::size_t theta_offset(std::size_t e) const { return (d + 1) * n + d * e; }
  std::size_t anchor_offset() const { return (d + 1) * n + d * ell; }
  std::size_t pose_dim() const { return (d + 1) * n; }
  /// n(d+1) + d*ell + d
  std::size_t dim() const { return (d + 1) * n + d * ell + d; }
};

/// Correlation between loop closures a and b (loop-closure indices).
struct LoopCorrelation {
  std::size_t a;
  std::size_t b;
  double weight;
};

/// Per-loop-closure quadratic term trace(U_e Z W_e Z).
/// U_e = blkdiag(L(G_e), 0, 0) / 4 is stored as its 6x6 restriction to the rows of
/// poses `from` and `to`; W_e = v v^T with v stacking I_d at theta block e and at
/// the anchor block.
struct LoopTerm {
  std::size_t edge = 0;  // index into the graph edge list
  NodeId from = 0;
  NodeId to = 0;
  Eigen::Matrix<double, 6, 6> U;
};

struct DcgmProblem {
  BlockLayout layout;
  Matrix Q;
  std::vector<LoopTerm> loop_terms;
  std::vector<double> cbar;                // per loop closure
  std::vector<LoopCorrelation> correlations;
  std::vector<std::size_t> odometry_edges;  // graph edge indices
  std::vector<std::size_t> loop_edges;      // graph edge index of loop closure e

  /// Sum of cbar_e / 2, the constant dropped when moving to the matrix form.
  double dropped_constant() const;
};

/// Connection Laplacian A Omega A^T over the listed edges, (d+1)n square.
SparseMatrix connection_laplacian(const PoseGraph& graph, std::span<const std::size_t> edge_ids);

/// Q: L(G_od) in the pose block, -N(C)/(2d) in the theta block and
/// -cbar_e/(4d) I_d coupling theta block e with the anchor.
Matrix build_Q(const PoseGraph& graph, const RobustParams& params, const BlockLayout& layout);

std::vector<LoopTerm> build_loop_terms(const PoseGraph& graph, const BlockLayout& layout);

/// Assembles every matrix. Validates the graph and the parameters.
DcgmProblem build_problem(const PoseGraph& graph, const RobustParams& params);

/// Full D x D matrices for a loop term (reference route and diagnostics).
SparseMatrix dense_U(const LoopTerm& term, const BlockLayout& layout);
SparseMatrix dense_W(std::size_t loop_index, const BlockLayout& layout);

/// X = [T_1 ... T_n | theta_1 I ... theta_l I | I], a d x D matrix.
Matrix embed_X(const std::vector<Pose2>& poses, std::span<const int> thetas,
               const BlockLayout& layout);

/// Z = X^T X.
Matrix embed_gram(const std::vector<Pose2>& poses, std::span<const int> thetas,
                  const BlockLayout& layout);

/// sum_e trace(U_e Z W_e Z) using the block structure.
double loop_terms_value(const DcgmProblem& problem, const Matrix& z);

/// trace(Q Z) + sum_e trace(U_e Z W_e Z). Throws std::invalid_argument on a
/// dimension mismatch.
double objective_trace(const DcgmProblem& problem, const Matrix& z);

/// Q + sum_e (U_e Z W_e + W_e Z U_e).
Matrix objective_gradient(const DcgmProblem& problem, const Matrix& z);

/// Diagnostic dump, matrices as dense row-major arrays.
std::string problem_to_json(const DcgmProblem& problem);

}  // namespace dcgm
