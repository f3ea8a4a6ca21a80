#include <gtest/gtest.h>

#include <random>

#include "dcgm/bench.hpp"
#include "dcgm/g2o_io.hpp"
#include "dcgm/pipeline.hpp"
#include "dcgm/synth.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace dcgm {
namespace {

using testing::max_pose_error;
using testing::random_poses;
using testing::random_thetas;

SynthDataset grid(std::uint64_t seed, std::size_t rows, std::size_t cols, double ratio,
                  bool noiseless = false) {
  SynthConfig cfg;
  cfg.rows = rows;
  cfg.cols = cols;
  cfg.outlier_ratio = ratio;
  cfg.group_size = 2;
  cfg.noiseless = noiseless;
  cfg.seed = seed;
  return generate_grid(cfg);
}

TEST(Round, ExactOnFeasibleGram) {
  std::mt19937_64 rng(71);
  for (int k = 0; k < 20; ++k) {
    const auto poses = random_poses(rng, 5);
    const auto th = random_thetas(rng, 4);
    const BlockLayout layout(5, 4);
    const auto r = round_solution(embed_gram(poses, th, layout), layout);
    EXPECT_FALSE(r.used_eigen_fallback);
    EXPECT_EQ(r.thetas, th);
    EXPECT_LE(max_pose_error(r.poses, anchor_at_first(poses)), 1e-12);
  }
}

TEST(Round, SignRuleAndTie) {
  const BlockLayout layout(2, 2);
  Matrix z = embed_gram({Pose2(), Pose2::from_xytheta(1, 0, 0)}, std::vector<int>{1, 1}, layout);
  const auto an = static_cast<Eigen::Index>(layout.anchor_offset());
  const auto t0 = static_cast<Eigen::Index>(layout.theta_offset(0));
  const auto t1 = static_cast<Eigen::Index>(layout.theta_offset(1));
  z.block(an, t0, 2, 2) = -0.9 * Matrix::Identity(2, 2);
  z.block(t0, an, 2, 2) = -0.9 * Matrix::Identity(2, 2);
  z.block(an, t1, 2, 2).setZero();
  z.block(t1, an, 2, 2).setZero();
  const auto r = round_solution(z, layout);
  EXPECT_EQ(r.thetas[0], -1);
  EXPECT_EQ(r.thetas[1], +1);
}

TEST(Round, EigenFallbackWhenAnchorDrifts) {
  std::mt19937_64 rng(72);
  const auto poses = random_poses(rng, 4);
  const std::vector<int> th = {1, -1};
  const BlockLayout layout(4, 2);
  Matrix z = embed_gram(poses, th, layout);
  const auto an = static_cast<Eigen::Index>(layout.anchor_offset());
  z(an, an) += 0.01;
  const auto r = round_solution(z, layout);
  EXPECT_TRUE(r.used_eigen_fallback);
  EXPECT_EQ(r.thetas, th);
  EXPECT_LE(max_pose_error(r.poses, anchor_at_first(poses)), 0.1);
}

TEST(Round, DimensionMismatch) {
  EXPECT_THROW(round_solution(Matrix::Zero(3, 3), BlockLayout(2, 0)), std::invalid_argument);
}

TEST(RemoveEdges, RemapsCorrelations) {
  std::mt19937_64 rng(73);
  auto g = testing::random_graph(rng, 6, 3);
  const auto part = partition_edges(g);
  const auto a = part.loop_closures[0];
  const auto b = part.loop_closures[1];
  const auto c = part.loop_closures[2];
  g.correlations = {{a, b, 0.5}, {b, c, 0.25}};
  const auto out = remove_edges(g, {a});
  EXPECT_EQ(out.edges.size(), g.edges.size() - 1);
  ASSERT_EQ(out.correlations.size(), 1u);
  EXPECT_EQ(out.correlations[0].first, b - 1);
  EXPECT_EQ(out.correlations[0].second, c - 1);
  EXPECT_NO_THROW(validate(out));
}

TEST(DcgmSolve, ZeroNoiseOutlierFree) {
  const auto d = grid(1, 3, 3, 0.0, true);
  const auto res = dcgm_solve(d.graph, thresholds_from_sigmas(0.1, 0.01, 1.0));
  EXPECT_TRUE(res.tight);
  EXPECT_TRUE(res.rejected_edges.empty());
  EXPECT_FALSE(res.second_sdp.has_value());
  EXPECT_NEAR(res.refit_objective, 0.0, 1e-8);
  EXPECT_LE(ate(res.poses, d.truth.poses), 1e-4);
}

TEST(DcgmSolve, TinyThresholdRejectsEverything) {
  const auto d = grid(2, 3, 3, 0.0);
  const auto res = dcgm_solve(d.graph, thresholds_from_sigmas(0.1, 0.01, 0.01));
  EXPECT_EQ(res.rejected_edges.size(), d.truth.inlier_mask.size());
  EXPECT_TRUE(res.tight);
  EXPECT_EQ(res.sdp.numerical_rank, 2);
  EXPECT_LE(max_pose_error(res.poses, integrate_odometry(d.graph)), 1e-6);
}

TEST(DcgmSolve, InvariantsOnNoisyInstances) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto d = grid(seed, 2, 5, 0.5);
    const auto params = thresholds_from_sigmas(0.1, 0.01, 1.0);
    d.graph.correlations = auto_correlations(d.graph, auto_correlation_weight(d.graph, params, 0.1));
    const auto res = dcgm_solve(d.graph, params);
    // rejected_edges mirrors the labels.
    std::vector<std::size_t> expected;
    for (std::size_t e = 0; e < res.thetas.size(); ++e) {
      if (res.thetas[e] < 0) expected.push_back(e);
    }
    EXPECT_EQ(res.rejected_edges, expected);
    EXPECT_EQ(res.poses[0].translation(), Vec2::Zero());
    // The estimate costs at least the relaxation's bound.
    EXPECT_GE(res.refit_objective, res.lower_bound - 1e-4 * (1.0 + std::abs(res.lower_bound)));
    EXPECT_NEAR(res.refit_objective, objective_sum(d.graph, res.poses, res.thetas, params), 1e-9);
  }
}

TEST(DcgmSolve, TightSolutionsAreExact) {
  SdpOptions sdp;
  sdp.tol_feas = 1e-9;
  sdp.tol_obj = 1e-12;
  int tight = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto d = grid(seed, 2, 4, 0.0);
    const auto problem = build_problem(d.graph, thresholds_from_sigmas(0.1, 0.01, 3.0));
    const auto sol = solve_sdp(problem, sdp);
    if (sol.numerical_rank != 2) continue;
    ++tight;
    const auto r = round_solution(sol.Z, problem.layout);
    const double rounded = objective_trace(problem, embed_gram(r.poses, r.thetas, problem.layout));
    EXPECT_NEAR(rounded, sol.objective, 1e-5 * std::abs(sol.objective));
  }
  EXPECT_GT(tight, 0);
}

TEST(DcgmSolve, GaugeInvariantMetrics) {
  const auto d = grid(3, 3, 3, 0.3);
  const auto res = dcgm_solve(d.graph, thresholds_from_sigmas(0.1, 0.01, 1.0));
  const Pose2 g = Pose2::from_xytheta(4.0, -7.0, 1.2);
  std::vector<Pose2> moved;
  for (const auto& p : d.truth.poses) moved.push_back(g * p);
  EXPECT_NEAR(ate(res.poses, moved), ate(res.poses, d.truth.poses), 1e-12);
}

TEST(DcgmSolve, RejectsBrokenGraph) {
  auto d = grid(4, 2, 3, 0.0);
  d.graph.edges.erase(d.graph.edges.begin());
  EXPECT_THROW(dcgm_solve(d.graph, thresholds_from_sigmas(0.1, 0.01, 1.0)), StructuralError);
}

TEST(Classify, Examples) {
  const std::vector<bool> mask = {true, false, true, false};
  auto c = classify_report(std::vector<int>{1, -1, 1, -1}, mask);
  EXPECT_EQ(c.pct_outliers_rejected, 100.0);
  EXPECT_EQ(c.pct_inliers_rejected, 0.0);
  c = classify_report(std::vector<int>{1, 1, 1, 1}, mask);
  EXPECT_EQ(c.pct_outliers_rejected, 0.0);
  EXPECT_EQ(c.pct_inliers_rejected, 0.0);
  c = classify_report(std::vector<int>{1, 1}, std::vector<bool>{true, true});
  EXPECT_EQ(c.pct_outliers_rejected, 100.0);
  c = classify_report(std::vector<int>{-1}, std::vector<bool>{false});
  EXPECT_EQ(c.pct_inliers_rejected, 0.0);
  EXPECT_THROW(classify_report(std::vector<int>{1}, mask), std::invalid_argument);
}

TEST(Classify, RandomLabelingMatchesCounts) {
  std::mt19937_64 rng(74);
  std::bernoulli_distribution b(0.4);
  for (int k = 0; k < 50; ++k) {
    std::vector<bool> mask(30);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = b(rng);
    const auto th = random_thetas(rng, 30);
    int tp = 0, fp = 0, outliers = 0, inliers = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      (mask[i] ? inliers : outliers)++;
      if (th[i] < 0 && !mask[i]) ++tp;
      if (th[i] < 0 && mask[i]) ++fp;
    }
    const auto c = classify_report(th, mask);
    if (outliers) EXPECT_DOUBLE_EQ(c.pct_outliers_rejected, 100.0 * tp / outliers);
    if (inliers) EXPECT_DOUBLE_EQ(c.pct_inliers_rejected, 100.0 * fp / inliers);
  }
}

TEST(ResultJson, RoundTripAndFields) {
  const auto d = grid(5, 2, 3, 0.0);
  const auto res = dcgm_solve(d.graph, thresholds_from_sigmas(0.1, 0.01, 1.0));
  const auto text = result_to_json(res);
  const auto j = nlohmann::json::parse(text);
  for (const char* key : {"poses", "thetas", "rejected_edges", "objective", "lower_bound", "rank",
                          "eigenvalues_head", "timings"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const auto [poses, thetas] = result_from_json(text);
  EXPECT_EQ(thetas, res.thetas);
  EXPECT_LE(max_pose_error(poses, res.poses), 1e-12);
}

}  // namespace
}  // namespace dcgm
