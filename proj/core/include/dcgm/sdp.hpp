#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>

#include "dcgm/model.hpp"

namespace dcgm {

/// Raised when the solver meets non-finite values or inconsistent input.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Affine part of the relaxation:
///  (a) top-left d x d of every pose diagonal block is I_d,
///  (b) theta and anchor diagonal blocks are I_d,
///  (c) off-diagonal theta/anchor blocks are z I_d.
/// With `anchor_gauge`, pose 0 is additionally pinned to the anchor:
///  [Z]_00 = diag(I_d, 0) and the pose-0/anchor block is [I_d; 0].
/// Without it the cross blocks between poses and the theta/anchor part are
/// unconstrained and can be zeroed at no cost, which makes every loop-closure
/// term vanish (see README, "Gauge anchor").
struct SdpConstraints {
  BlockLayout layout;
  bool anchor_gauge = true;
};

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clamped to 0).
Matrix project_psd(const Matrix& s);

/// Frobenius projection onto the affine set; unconstrained entries untouched.
Matrix project_affine(const Matrix& s, const SdpConstraints& constraints);

/// ||Z - project_affine(Z)||_F
double affine_violation(const Matrix& z, const SdpConstraints& constraints);

/// Eigenvalues, largest first.
Vector eigenvalues_descending(const Matrix& z);

/// Number of eigenvalues above rel_tol * lambda_max; 0 when lambda_max <= 0.
int numerical_rank(const Matrix& z, double rel_tol = 1e-3);

struct SdpOptions {
  std::size_t max_iters = 50000;
  double tol_feas = 1e-6;  // relative to ||Z||_F + 1
  double tol_obj = 1e-7;   // relative objective change
  double tol_psd = 1e-8;   // times lambda_max, feasibility report only
  double rho = 1.0;
  bool adaptive_rho = true;
  double balance_ratio = 10.0;
  std::size_t balance_every = 10;
  double relaxation = 1.6;  // ADMM over-relaxation, in (0, 2)
  /// Translations are solved for in units of this length (meters); 1 keeps
  /// the problem as given.
  double translation_scale = 1.0;
  /// Anderson acceleration memory on the ADMM fixed-point map; 0 disables.
  std::size_t anderson_memory = 5;
  /// An extrapolated step is undone when it grows the fixed-point residual
  /// by more than this factor.
  double anderson_safeguard = 1.0;
  bool anchor_gauge = true;
  /// The solver is sequential, so runs are always reproducible; kept for
  /// interface stability.
  bool deterministic = true;
  /// Optional CSV trace: iter,objective,primal_res,affine_res
  std::ostream* trace = nullptr;
};

struct SdpSolution {
  Matrix Z;
  double objective = 0.0;  // f(Z), the relaxation's lower bound on the trace form
  double primal_residual = 0.0;
  double affine_residual = 0.0;
  double dual_residual = 0.0;
  double psd_residual = 0.0;  // max(0, -lambda_min) / lambda_max
  std::size_t iterations = 0;
  int numerical_rank = 0;
  Vector eigenvalues;  // descending
  bool converged = false;
  double rho = 0.0;
};

/// Minimizes trace(QZ) + sum_e trace(U_e Z W_e Z) over PSD matrices satisfying
/// the affine constraints. ADMM between an affine/smooth block, solved exactly,
/// and the PSD cone. Starts from Z = 0.
SdpSolution solve_sdp(const DcgmProblem& problem, const SdpOptions& opts = {});

/// Same, starting from `warm` (dimension of the layout; the multiplier starts at 0).
SdpSolution solve_sdp(const DcgmProblem& problem, const SdpOptions& opts, const Matrix& warm);

}  // namespace dcgm
