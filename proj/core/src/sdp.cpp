#include "dcgm/sdp.hpp"


#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace dcgm {

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Index = Eigen::Index;

constexpr Index kD = static_cast<Index>(BlockLayout::d);

std::array<Index, 6> rows_of(const LoopTerm& t) {
  const auto i = static_cast<Index>(3 * t.from);
  const auto j = static_cast<Index>(3 * t.to);
  return {i, i + 1, i + 2, j, j + 1, j + 2};
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw SolverError(std::string("solve_sdp: non-finite values in ") + what);
}

// Exact minimizer of the loop terms plus rho ||X - V||^2 over the cross
// region (pose rows x theta/anchor columns). Pose-0 anchor entries are fixed
// when the gauge is pinned.
class CrossSolver {
 public:
  CrossSolver(const DcgmProblem& problem, bool anchor_gauge)
      : problem_(problem), anchor_gauge_(anchor_gauge) {
    const auto pdim = static_cast<Index>(problem.layout.pose_dim());
    first_free_ = anchor_gauge_ ? 3 : 0;
    nfree_ = pdim - first_free_;
  }

  void set_rho(double rho) {
    rho_ = rho;
    const auto pdim = static_cast<Index>(problem_.layout.pose_dim());
    m_.resize(problem_.loop_terms.size());
    inv_.resize(problem_.loop_terms.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(problem_.loop_terms.size() * 36 + static_cast<std::size_t>(pdim));
    for (Index r = 0; r < pdim; ++r) trip.emplace_back(r, r, rho);
    for (std::size_t e = 0; e < problem_.loop_terms.size(); ++e) {
      const Mat6& u = problem_.loop_terms[e].U;
      inv_[e] = (u + rho * Mat6::Identity()).inverse();
      inv_[e] = 0.5 * (inv_[e] + inv_[e].transpose()).eval();
      m_[e] = rho * u * inv_[e];
      m_[e] = 0.5 * (m_[e] + m_[e].transpose()).eval();
      const auto rows = rows_of(problem_.loop_terms[e]);
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) trip.emplace_back(rows[r], rows[c], m_[e](r, c));
      }
    }
    k_.resize(pdim, pdim);
    k_.setFromTriplets(trip.begin(), trip.end());
    kff_ = k_.bottomRightCorner(nfree_, nfree_);
    kfx_ = k_.block(first_free_, 0, nfree_, first_free_);
    llt_.compute(kff_);
    if (llt_.info() != Eigen::Success) throw SolverError("solve_sdp: cross-block factorization failed");
  }

  // `v` is the symmetric prox center; writes the cross block of `x` (both halves).
  void solve(const Matrix& v, Matrix& x) const {
    const auto& layout = problem_.layout;
    const auto pdim = static_cast<Index>(layout.pose_dim());
    const auto anchor = static_cast<Index>(layout.anchor_offset());
    for (Index k = 0; k < kD; ++k) {
      const Vector alpha = v.col(anchor + k).head(pdim);
      Vector rhs = rho_ * alpha;
      for (std::size_t e = 0; e < problem_.loop_terms.size(); ++e) {
        const auto rows = rows_of(problem_.loop_terms[e]);
        const auto tcol = static_cast<Index>(layout.theta_offset(e)) + k;
        Vec6 beta;
        for (int r = 0; r < 6; ++r) beta(r) = v(rows[r], tcol);
        const Vec6 mb = m_[e] * beta;
        for (int r = 0; r < 6; ++r) rhs(rows[r]) -= mb(r);
      }
      Vector a(pdim);
      if (anchor_gauge_) {
        Vector fixed = Vector::Zero(first_free_);
        fixed(k) = 1.0;
        a.head(first_free_) = fixed;
        a.tail(nfree_) = llt_.solve(Vector(rhs.tail(nfree_) - kfx_ * fixed));
      } else {
        a = llt_.solve(rhs);
      }
      x.col(anchor + k).head(pdim) = a;
      for (std::size_t e = 0; e < problem_.loop_terms.size(); ++e) {
        const auto& term = problem_.loop_terms[e];
        const auto rows = rows_of(term);
        const auto tcol = static_cast<Index>(layout.theta_offset(e)) + k;
        Vec6 beta;
        Vec6 sa;
        for (int r = 0; r < 6; ++r) {
          beta(r) = v(rows[r], tcol);
          sa(r) = a(rows[r]);
        }
        const Vec6 b = inv_[e] * (rho_ * beta - term.U * sa);
        for (int r = 0; r < 6; ++r) x(rows[r], tcol) = b(r);
      }
    }
    const Index s = static_cast<Index>(layout.dim()) - pdim;
    x.bottomLeftCorner(s, pdim) = x.topRightCorner(pdim, s).transpose();
  }

 private:
  const DcgmProblem& problem_;
  bool anchor_gauge_;
  Index first_free_ = 0;
  Index nfree_ = 0;
  double rho_ = 1.0;
  std::vector<Mat6> m_;
  std::vector<Mat6> inv_;
  SparseMatrix k_;
  SparseMatrix kff_;
  SparseMatrix kfx_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
};

Vector translation_weights(const BlockLayout& layout, double scale) {
  Vector s = Vector::Ones(static_cast<Index>(layout.dim()));
  for (std::size_t i = 0; i < layout.n; ++i) s(static_cast<Index>(layout.pose_offset(i)) + kD) = scale;
  return s;
}

DcgmProblem scale_translations(const DcgmProblem& problem, double scale) {
  DcgmProblem out = problem;
  if (scale == 1.0) return out;
  const Vector s = translation_weights(problem.layout, scale);
  out.Q = s.asDiagonal() * problem.Q * s.asDiagonal();
  Vec6 su = Vec6::Ones();
  su(2) = scale;
  su(5) = scale;
  for (auto& t : out.loop_terms) t.U = su.asDiagonal() * t.U * su.asDiagonal();
  return out;
}

Matrix unscale_translations(const Matrix& zs, const BlockLayout& layout, double scale) {
  if (scale == 1.0) return zs;
  const Vector s = translation_weights(layout, scale);
  return s.asDiagonal() * zs * s.asDiagonal();
}

// Type-II Anderson acceleration on the fixed-point map s -> T(s), with a
// small ridge term on the least-squares coefficients.
class Anderson {
 public:
  Anderson(std::size_t size, std::size_t memory) : size_(size), memory_(memory) {}

  void reset() {
    count_ = 0;
    have_prev_ = false;
  }

  // `s` is the current point, `fs` = T(s) on input and the next point on
  // output. Returns true when the output is an extrapolation.
  bool step(const Matrix& s, Matrix& fs) {
    if (memory_ == 0) return false;
    const Eigen::Map<const Vector> fv(fs.data(), static_cast<Index>(size_));
    const Eigen::Map<const Vector> sv(s.data(), static_cast<Index>(size_));
    const Vector g = fv - sv;
    if (!have_prev_) {
      dg_.resize(static_cast<Index>(size_), static_cast<Index>(memory_));
      df_.resize(static_cast<Index>(size_), static_cast<Index>(memory_));
      prev_g_ = g;
      prev_f_ = fv;
      have_prev_ = true;
      return false;
    }
    const auto col = static_cast<Index>(head_);
    dg_.col(col) = g - prev_g_;
    df_.col(col) = fv - prev_f_;
    prev_g_ = g;
    prev_f_ = fv;
    head_ = (head_ + 1) % memory_;
    count_ = std::min(count_ + 1, memory_);

    const auto m = static_cast<Index>(count_);
    const Matrix dg = dg_.leftCols(m);
    Matrix gram = dg.transpose() * dg;
    const double reg = 1e-10 * std::max(1e-300, gram.trace());
    gram.diagonal().array() += reg;
    const Vector gamma = gram.ldlt().solve(dg.transpose() * g);
    if (!gamma.allFinite()) {
      reset();
      return false;
    }
    Vector next = fv - df_.leftCols(m) * gamma;
    Eigen::Map<Vector>(fs.data(), static_cast<Index>(size_)) = next;
    fs = (0.5 * (fs + fs.transpose())).eval();
    return true;
  }

 private:
  std::size_t size_;
  std::size_t memory_;
  std::size_t count_ = 0;
  std::size_t head_ = 0;
  bool have_prev_ = false;
  Matrix dg_;
  Matrix df_;
  Vector prev_g_;
  Vector prev_f_;
};

double objective_value(const DcgmProblem& problem, const Matrix& z) {
  return problem.Q.cwiseProduct(z).sum() + loop_terms_value(problem, z);
}

}  // namespace

Matrix project_psd(const Matrix& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("project_psd: square matrix expected");
  if (s.rows() == 0) return s;
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw SolverError("project_psd: eigensolver failed");
  const Vector w = es.eigenvalues();
  const Matrix& v = es.eigenvectors();
  const Index n = s.rows();
  Index first = 0;  // eigenvalues ascend
  while (first < n && w(first) <= 0.0) ++first;
  Matrix out = Matrix::Zero(n, n);
  if (first < n) {
    const Matrix f = v.rightCols(n - first) * w.tail(n - first).cwiseSqrt().asDiagonal();
    out.selfadjointView<Eigen::Lower>().rankUpdate(f);
    out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
  }
  return out;
}

Matrix project_affine(const Matrix& s, const SdpConstraints& constraints) {
  const auto& layout = constraints.layout;
  const auto dim = static_cast<Index>(layout.dim());
  if (s.rows() != dim || s.cols() != dim) {
    throw std::invalid_argument("project_affine: dimension mismatch");
  }
  Matrix z = 0.5 * (s + s.transpose());
  for (std::size_t i = 0; i < layout.n; ++i) {
    const auto o = static_cast<Index>(layout.pose_offset(i));
    z.block(o, o, kD, kD).setIdentity();
  }
  const auto first = static_cast<Index>(layout.pose_dim());
  const Index blocks = static_cast<Index>(layout.ell) + 1;
  for (Index a = 0; a < blocks; ++a) {
    const Index ra = first + kD * a;
    z.block(ra, ra, kD, kD).setIdentity();
    for (Index b = a + 1; b < blocks; ++b) {
      const Index rb = first + kD * b;
      const double t = z.block(ra, rb, kD, kD).trace() / static_cast<double>(kD);
      z.block(ra, rb, kD, kD) = t * Matrix::Identity(kD, kD);
      z.block(rb, ra, kD, kD) = t * Matrix::Identity(kD, kD);
    }
  }
  if (constraints.anchor_gauge && layout.n > 0) {
    const auto anchor = static_cast<Index>(layout.anchor_offset());
    z.block(0, 0, kD + 1, kD + 1).setZero();
    z.block(0, 0, kD, kD).setIdentity();
    z.block(0, anchor, kD + 1, kD).setZero();
    z.block(0, anchor, kD, kD).setIdentity();
    z.block(anchor, 0, kD, kD + 1) = z.block(0, anchor, kD + 1, kD).transpose();
  }
  return z;
}

double affine_violation(const Matrix& z, const SdpConstraints& constraints) {
  return (z - project_affine(z, constraints)).norm();
}

Vector eigenvalues_descending(const Matrix& z) {
  if (z.size() == 0) return Vector();
  const Matrix sym = 0.5 * (z + z.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw SolverError("eigenvalues_descending: eigensolver failed");
  return es.eigenvalues().reverse();
}

int numerical_rank(const Matrix& z, double rel_tol) {
  const Vector ev = eigenvalues_descending(z);
  if (ev.size() == 0 || !(ev(0) > 0.0)) return 0;
  const double thr = rel_tol * ev(0);
  int r = 0;
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > thr) ++r;
  }
  return r;
}

SdpSolution solve_sdp(const DcgmProblem& problem, const SdpOptions& opts) {
  return solve_sdp(problem, opts, Matrix());
}

SdpSolution solve_sdp(const DcgmProblem& problem, const SdpOptions& opts, const Matrix& warm) {
  const auto dim = static_cast<Index>(problem.layout.dim());
  if (problem.Q.rows() != dim || problem.Q.cols() != dim) {
    throw SolverError("solve_sdp: Q does not match the block layout");
  }
  if (problem.loop_terms.size() != problem.layout.ell) {
    throw SolverError("solve_sdp: one loop term per loop closure expected");
  }
  if (!(opts.rho > 0.0) || !(opts.tol_feas > 0.0) || !(opts.tol_obj > 0.0) ||
      !(opts.relaxation > 0.0 && opts.relaxation < 2.0)) {
    throw std::invalid_argument("solve_sdp: rho and tolerances must be positive");
  }
  check_finite(problem.Q, "Q");

  // Translation rows are rescaled by 1 / scale (Z = S Zs S). The affine
  // constraints never involve translation entries other than fixed zeros.
  const double tscale = opts.translation_scale > 0.0 ? opts.translation_scale : 1.0;
  const DcgmProblem scaled = scale_translations(problem, tscale);
  const SdpConstraints cons{problem.layout, opts.anchor_gauge};
  double rho = opts.rho;
  CrossSolver cross(scaled, opts.anchor_gauge);
  cross.set_rho(rho);

  // Douglas-Rachford form of ADMM: the state is s = Y + Lambda, with
  // Y = Pi_psd(s), Lambda = s - Y and s <- s + alpha (X - Y), X = prox(Y - Lambda).
  Matrix s = Matrix::Zero(dim, dim);
  if (warm.size() > 0) {
    if (warm.rows() != dim || warm.cols() != dim) throw SolverError("solve_sdp: warm start dimension mismatch");
    check_finite(warm, "warm start");
    const Vector w = translation_weights(problem.layout, tscale).cwiseInverse();
    s = w.asDiagonal() * warm * w.asDiagonal();
  }
  Matrix y = project_psd(s);
  Matrix lambda = s - y;
  Matrix x(dim, dim);
  Matrix s_plain_prev;
  double g_prev = 0.0;
  bool last_was_aa = false;
  Anderson aa(static_cast<std::size_t>(dim * dim), opts.anderson_memory);
  double f_prev = 0.0;

  if (opts.trace) *opts.trace << "iter,objective,primal_res,affine_res\n";

  SdpSolution sol;
  std::size_t it = 0;
  double r_prim = 0.0;
  double r_aff = 0.0;
  double r_dual = 0.0;
  double f = 0.0;
  for (it = 1; it <= opts.max_iters; ++it) {
    const Matrix v = y - lambda;
    x = v - scaled.Q / rho;
    cross.solve(v, x);
    x = project_affine(x, cons);

    Matrix f_s = s + opts.relaxation * (x - y);
    const double g_norm = (f_s - s).norm();
    if (last_was_aa && g_norm > opts.anderson_safeguard * g_prev) {
      // The extrapolated point made things worse; fall back to the plain step.
      s = s_plain_prev;
      y = project_psd(s);
      lambda = s - y;
      aa.reset();
      last_was_aa = false;
      --it;  // the plain step below is the real iteration
      continue;
    }
    s_plain_prev = f_s;
    g_prev = g_norm;
    const Matrix y_old = y;
    last_was_aa = aa.step(s, f_s);
    s = std::move(f_s);
    y = project_psd(s);
    lambda = s - y;
    check_finite(y, "iterate");

    const double ynorm = y.norm();
    const double prim_abs = (x - y).norm();
    const double dual_abs = rho * (y - y_old).norm();
    r_prim = prim_abs / (1.0 + ynorm);
    r_aff = affine_violation(y, cons) / (1.0 + ynorm);
    r_dual = dual_abs / (1.0 + rho * lambda.norm());
    f = objective_value(scaled, y);
    const double df = std::abs(f - f_prev) / (1.0 + std::abs(f));
    f_prev = f;

    if (opts.trace) *opts.trace << it << ',' << f << ',' << r_prim << ',' << r_aff << '\n';

    if (std::max(r_prim, r_aff) <= opts.tol_feas && r_dual <= opts.tol_feas && df <= opts.tol_obj) {
      sol.converged = true;
      break;
    }

    if (opts.adaptive_rho && opts.balance_every > 0 && it % opts.balance_every == 0) {
      double factor = 1.0;
      if (prim_abs > opts.balance_ratio * dual_abs) {
        factor = 2.0;
      } else if (dual_abs > opts.balance_ratio * prim_abs) {
        factor = 0.5;
      }
      if (factor != 1.0) {
        rho *= factor;
        lambda /= factor;
        s = y + lambda;
        cross.set_rho(rho);
        aa.reset();
        last_was_aa = false;
      }
    }
  }

  sol.iterations = std::min(it, opts.max_iters);
  sol.Z = unscale_translations(y, problem.layout, tscale);
  r_aff = affine_violation(sol.Z, cons) / (1.0 + sol.Z.norm());
  y = sol.Z;
  sol.objective = f;
  sol.primal_residual = r_prim;
  sol.affine_residual = r_aff;
  sol.dual_residual = r_dual;
  sol.eigenvalues = eigenvalues_descending(y);
  sol.numerical_rank = numerical_rank(y);
  const double lmax = sol.eigenvalues.size() ? sol.eigenvalues(0) : 0.0;
  const double lmin = sol.eigenvalues.size() ? sol.eigenvalues(sol.eigenvalues.size() - 1) : 0.0;
  sol.psd_residual = lmax > 0.0 ? std::max(0.0, -lmin) / lmax : 0.0;
  sol.rho = rho;
  return sol;
}

}  // namespace dcgm
