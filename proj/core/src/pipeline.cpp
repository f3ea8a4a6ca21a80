#include "dcgm/pipeline.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace dcgm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// d x D factor X with Z ~ X^T X from the top-d eigenpairs, rotated so that
// the anchor block is the identity as far as possible.
Matrix eigen_factor(const Matrix& z, const BlockLayout& layout) {
  constexpr Eigen::Index d = BlockLayout::d;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (z + z.transpose()));
  if (es.info() != Eigen::Success) throw SolverError("round_solution: eigensolver failed");
  const Eigen::Index dim = z.rows();
  Matrix x(d, dim);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lam = std::max(0.0, es.eigenvalues()(dim - 1 - k));
    x.row(k) = std::sqrt(lam) * es.eigenvectors().col(dim - 1 - k).transpose();
  }
  const auto anchor = static_cast<Eigen::Index>(layout.anchor_offset());
  const Mat2 a = x.block(0, anchor, d, d);
  const Mat2 g = project_to_rotation(a);
  // X <- G^T X makes the anchor block the rotation closest to I.
  return g.transpose() * x;
}

}  // namespace

Rounding round_solution(const Matrix& z, const BlockLayout& layout) {
  const auto dim = static_cast<Eigen::Index>(layout.dim());
  if (z.rows() != dim || z.cols() != dim) {
    throw std::invalid_argument("round_solution: dimension mismatch");
  }
  constexpr Eigen::Index d = BlockLayout::d;
  const auto anchor = static_cast<Eigen::Index>(layout.anchor_offset());

  Rounding out;
  Matrix rows;  // d x D, the identity-anchored block row
  const double dev = (z.block(anchor, anchor, d, d) - Matrix::Identity(d, d)).norm();
  if (dev > 1e-3) {
    rows = eigen_factor(z, layout);
    out.used_eigen_fallback = true;
  } else {
    rows = z.middleRows(anchor, d);
  }

  std::vector<Pose2> poses;
  poses.reserve(layout.n);
  for (std::size_t i = 0; i < layout.n; ++i) {
    const auto o = static_cast<Eigen::Index>(layout.pose_offset(i));
    const Mat2 r = project_to_rotation(rows.block(0, o, d, d));
    const Vec2 t = rows.block(0, o + d, d, 1);
    poses.emplace_back(r, t);
  }
  out.poses = anchor_at_first(poses);
  out.thetas.resize(layout.ell);
  for (std::size_t e = 0; e < layout.ell; ++e) {
    const auto o = static_cast<Eigen::Index>(layout.theta_offset(e));
    out.thetas[e] = rows.block(0, o, d, d).trace() < 0.0 ? -1 : +1;
  }
  return out;
}

PoseGraph remove_edges(const PoseGraph& graph, const std::vector<std::size_t>& edge_ids) {
  std::vector<bool> drop(graph.edges.size(), false);
  for (std::size_t e : edge_ids) drop.at(e) = true;
  PoseGraph out;
  out.num_nodes = graph.num_nodes;
  std::vector<std::size_t> remap(graph.edges.size(), 0);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    if (drop[e]) continue;
    remap[e] = out.edges.size();
    out.edges.push_back(graph.edges[e]);
  }
  for (const auto& c : graph.correlations) {
    if (drop[c.first] || drop[c.second]) continue;
    out.correlations.push_back({remap[c.first], remap[c.second], c.weight});
  }
  return out;
}

DcgmResult dcgm_solve(const PoseGraph& graph, const RobustParams& params, const DcgmOptions& opts) {
  const auto t_start = Clock::now();
  DcgmResult res;

  auto t0 = Clock::now();
  const DcgmProblem problem = build_problem(graph, params);
  res.timings.build_s = seconds_since(t0);

  t0 = Clock::now();
  res.sdp = solve_sdp(problem, opts.sdp);
  res.timings.sdp_s = seconds_since(t0);
  res.lower_bound = res.sdp.objective + problem.dropped_constant();

  const int rank1 = numerical_rank(res.sdp.Z, opts.rank_tol);
  Rounding rounded = round_solution(res.sdp.Z, problem.layout);
  res.thetas = rounded.thetas;
  res.tight = rank1 == static_cast<int>(BlockLayout::d);

  std::vector<std::size_t> accepted = problem.odometry_edges;
  if (res.tight) {
    for (std::size_t e = 0; e < problem.loop_edges.size(); ++e) {
      if (res.thetas[e] > 0) accepted.push_back(problem.loop_edges[e]);
    }
  } else {
    std::vector<std::size_t> removed;
    std::vector<std::size_t> kept;  // loop-closure indices surviving the first round
    for (std::size_t e = 0; e < problem.loop_edges.size(); ++e) {
      if (res.thetas[e] < 0) {
        removed.push_back(problem.loop_edges[e]);
      } else {
        kept.push_back(e);
      }
    }
    t0 = Clock::now();
    const PoseGraph reduced = remove_edges(graph, removed);
    const DcgmProblem p2 = build_problem(reduced, params);
    // Warm start from the first solution restricted to the surviving blocks.
    constexpr auto d = static_cast<Eigen::Index>(BlockLayout::d);
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < p2.layout.n; ++i) {
      const auto o = static_cast<Eigen::Index>(problem.layout.pose_offset(i));
      for (Eigen::Index k = 0; k <= d; ++k) idx.push_back(o + k);
    }
    for (std::size_t e : kept) {
      const auto o = static_cast<Eigen::Index>(problem.layout.theta_offset(e));
      for (Eigen::Index k = 0; k < d; ++k) idx.push_back(o + k);
    }
    const auto a = static_cast<Eigen::Index>(problem.layout.anchor_offset());
    for (Eigen::Index k = 0; k < d; ++k) idx.push_back(a + k);
    SdpOptions o2 = opts.sdp;
    o2.rho = res.sdp.rho;
    res.second_sdp = solve_sdp(p2, o2, res.sdp.Z(idx, idx));
    res.timings.resolve_s = seconds_since(t0);
    res.tight = numerical_rank(res.second_sdp->Z, opts.rank_tol) == static_cast<int>(BlockLayout::d);
    rounded = round_solution(res.second_sdp->Z, p2.layout);
    for (std::size_t k = 0; k < kept.size(); ++k) res.thetas[kept[k]] = rounded.thetas[k];
    for (std::size_t e = 0; e < problem.loop_edges.size(); ++e) {
      if (res.thetas[e] > 0) accepted.push_back(problem.loop_edges[e]);
    }
  }
  std::sort(accepted.begin(), accepted.end());

  res.poses = rounded.poses;
  if (opts.refine) {
    t0 = Clock::now();
    const PoseGraph sub = select_edges(graph, accepted);
    res.poses = gauss_newton(sub, rounded.poses, opts.gn).poses;
    res.timings.refine_s = seconds_since(t0);
  }

  for (std::size_t e = 0; e < res.thetas.size(); ++e) {
    if (res.thetas[e] < 0) res.rejected_edges.push_back(e);
  }
  res.refit_objective = objective_sum(graph, res.poses, res.thetas, params);
  res.timings.total_s = seconds_since(t_start);
  return res;
}

Classification classify_report(const std::vector<int>& thetas, const std::vector<bool>& inlier_mask) {
  if (thetas.size() != inlier_mask.size()) {
    throw std::invalid_argument("classify_report: mask length does not match the loop closures");
  }
  std::size_t outliers = 0;
  std::size_t inliers = 0;
  std::size_t out_rej = 0;
  std::size_t in_rej = 0;
  for (std::size_t e = 0; e < thetas.size(); ++e) {
    if (inlier_mask[e]) {
      ++inliers;
      if (thetas[e] < 0) ++in_rej;
    } else {
      ++outliers;
      if (thetas[e] < 0) ++out_rej;
    }
  }
  Classification c;
  if (outliers > 0) c.pct_outliers_rejected = 100.0 * static_cast<double>(out_rej) / static_cast<double>(outliers);
  if (inliers > 0) c.pct_inliers_rejected = 100.0 * static_cast<double>(in_rej) / static_cast<double>(inliers);
  return c;
}

Classification classify_report(const DcgmResult& result, const std::vector<bool>& inlier_mask) {
  return classify_report(result.thetas, inlier_mask);
}

std::string result_to_json(const DcgmResult& result) {
  nlohmann::json j;
  auto& poses = j["poses"] = nlohmann::json::array();
  for (const auto& p : result.poses) poses.push_back({p.x(), p.y(), wrap_angle(p.angle())});
  j["thetas"] = result.thetas;
  j["rejected_edges"] = result.rejected_edges;
  j["objective"] = result.refit_objective;
  j["lower_bound"] = result.lower_bound;
  j["sdp_objective"] = result.sdp.objective;
  j["rank"] = result.sdp.numerical_rank;
  j["tight"] = result.tight;
  j["converged"] = result.sdp.converged;
  j["iterations"] = result.sdp.iterations;
  std::vector<double> head;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(6, result.sdp.eigenvalues.size()); ++i) {
    head.push_back(result.sdp.eigenvalues(i));
  }
  j["eigenvalues_head"] = head;
  if (result.second_sdp) {
    j["second_rank"] = result.second_sdp->numerical_rank;
    j["second_iterations"] = result.second_sdp->iterations;
  }
  j["timings"] = {{"build_s", result.timings.build_s},
                  {"sdp_s", result.timings.sdp_s},
                  {"resolve_s", result.timings.resolve_s},
                  {"refine_s", result.timings.refine_s},
                  {"total_s", result.timings.total_s}};
  return j.dump(2);
}

std::pair<std::vector<Pose2>, std::vector<int>> result_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  std::vector<Pose2> poses;
  for (const auto& p : j.at("poses")) {
    poses.push_back(Pose2::from_xytheta(p.at(0).get<double>(), p.at(1).get<double>(),
                                        p.at(2).get<double>()));
  }
  return {poses, j.at("thetas").get<std::vector<int>>()};
}

}  // namespace dcgm
