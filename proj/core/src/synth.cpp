#include "dcgm/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace dcgm {

namespace {

using Candidate = std::pair<NodeId, NodeId>;

struct Layout {
  std::vector<Pose2> poses;
  std::vector<Candidate> candidates;
  std::vector<std::vector<std::size_t>> groups;  // indices into candidates
};

std::vector<std::vector<std::size_t>> chunk(std::size_t begin, std::size_t end, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = begin; i < end; i += size) {
    std::vector<std::size_t> g(std::min(size, end - i));
    std::iota(g.begin(), g.end(), i);
    out.push_back(std::move(g));
  }
  return out;
}

Pose2 random_relative_pose(const Vec2& lo, const Vec2& hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(lo.x(), hi.x());
  std::uniform_real_distribution<double> uy(lo.y(), hi.y());
  std::uniform_real_distribution<double> ua(-std::numbers::pi, std::numbers::pi);
  const Pose2 a = Pose2::from_xytheta(ux(rng), uy(rng), wrap_angle(ua(rng)));
  const Pose2 b = Pose2::from_xytheta(ux(rng), uy(rng), wrap_angle(ua(rng)));
  return between(a, b);
}

SynthDataset assemble(const SynthConfig& cfg, Layout layout, std::mt19937_64& rng) {
  // Keep whole groups until the loop-closure budget is met.
  if (cfg.max_loop_closures > 0) {
    std::vector<std::size_t> order(layout.groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> keep(layout.groups.size(), false);
    std::size_t total = 0;
    for (std::size_t g : order) {
      if (total >= cfg.max_loop_closures) break;
      keep[g] = true;
      total += layout.groups[g].size();
    }
    std::vector<Candidate> cands;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t g = 0; g < layout.groups.size(); ++g) {
      if (!keep[g]) continue;
      std::vector<std::size_t> members;
      for (std::size_t c : layout.groups[g]) {
        members.push_back(cands.size());
        cands.push_back(layout.candidates[c]);
      }
      groups.push_back(std::move(members));
    }
    layout.candidates = std::move(cands);
    layout.groups = std::move(groups);
  }

  const std::size_t ell = layout.candidates.size();
  std::vector<bool> inlier(ell, true);
  if (cfg.heterogeneous_groups) {
    const auto n_out = std::min<std::size_t>(
        ell, static_cast<std::size_t>(std::llround(cfg.outlier_ratio * static_cast<double>(ell))));
    std::vector<std::size_t> idx(ell);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < n_out; ++k) inlier[idx[k]] = false;
  } else {
    const auto n_groups = std::min<std::size_t>(
        layout.groups.size(),
        static_cast<std::size_t>(std::llround(cfg.outlier_ratio * static_cast<double>(ell) /
                                              static_cast<double>(cfg.group_size))));
    std::vector<std::size_t> idx(layout.groups.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < n_groups; ++k) {
      for (std::size_t c : layout.groups[idx[k]]) inlier[c] = false;
    }
  }

  Vec2 lo = layout.poses.front().translation();
  Vec2 hi = lo;
  for (const auto& p : layout.poses) {
    lo = lo.cwiseMin(p.translation());
    hi = hi.cwiseMax(p.translation());
  }

  const double st = cfg.noiseless ? 0.0 : cfg.sigma_t;
  const double sr = cfg.noiseless ? 0.0 : cfg.sigma_r;
  const double omega_t = 1.0 / (cfg.sigma_t * cfg.sigma_t);
  const double omega_r = 1.0 / (cfg.sigma_r * cfg.sigma_r);

  SynthDataset out;
  out.graph.num_nodes = layout.poses.size();
  const auto measure = [&](NodeId i, NodeId j, Pose2 rel) {
    RelPoseMeasurement m;
    m.from = i;
    m.to = j;
    m.measured = rel;
    m.omega_t = omega_t;
    m.omega_r = omega_r;
    out.graph.edges.push_back(m);
  };
  for (NodeId k = 0; k + 1 < layout.poses.size(); ++k) {
    measure(k, k + 1,
            perturb_measurement(between(layout.poses[k], layout.poses[k + 1]), st, sr, rng));
  }
  for (std::size_t c = 0; c < ell; ++c) {
    const auto [i, j] = layout.candidates[c];
    if (inlier[c]) {
      measure(i, j, perturb_measurement(between(layout.poses[i], layout.poses[j]), st, sr, rng));
    } else {
      measure(i, j, random_relative_pose(lo, hi, rng));
    }
  }
  out.truth.poses = std::move(layout.poses);
  out.truth.inlier_mask = std::move(inlier);
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (!(sigma_t > 0.0) || !(sigma_r > 0.0)) {
    throw std::invalid_argument("SynthConfig: sigma_t and sigma_r must be positive");
  }
  if (!(outlier_ratio >= 0.0) || !(outlier_ratio < 1.0)) {
    throw std::invalid_argument("SynthConfig: outlier_ratio must be in [0, 1)");
  }
  if (group_size < 1) throw std::invalid_argument("SynthConfig: group_size must be >= 1");
  if (kind == SynthKind::kGrid && rows * cols < 4) {
    throw std::invalid_argument("SynthConfig: grid needs at least 4 nodes");
  }
  if (kind == SynthKind::kManhattan && steps < 1) {
    throw std::invalid_argument("SynthConfig: manhattan walk needs at least one step");
  }
}

SynthDataset generate_grid(const SynthConfig& cfg) {
  cfg.validate();
  if (cfg.kind != SynthKind::kGrid) throw std::invalid_argument("generate_grid: not a grid config");
  const std::size_t rows = cfg.rows;
  const std::size_t cols = cfg.cols;

  // Node index of cell (r, c) along the boustrophedon.
  const auto index = [cols](std::size_t r, std::size_t c) {
    return r * cols + (r % 2 == 0 ? c : cols - 1 - c);
  };
  std::vector<Vec2> cell(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      cell[index(r, c)] = Vec2(static_cast<double>(c), static_cast<double>(r));
    }
  }

  Layout layout;
  const std::size_t n = cell.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 dir = k + 1 < n ? Vec2(cell[k + 1] - cell[k]) : Vec2(cell[k] - cell[k - 1]);
    layout.poses.push_back(
        Pose2::from_xytheta(cell[k].x(), cell[k].y(), std::atan2(dir.y(), dir.x())));
  }

  // Walk each row pair in trajectory order of the lower row so that
  // neighbouring candidates are (i, j), (i + 1, j - 1).
  for (std::size_t r = 0; r + 1 < rows; ++r) {
    const std::size_t begin = layout.candidates.size();
    for (std::size_t step = 0; step < cols; ++step) {
      const std::size_t c = (r % 2 == 0) ? step : cols - 1 - step;
      const NodeId a = index(r, c);
      const NodeId b = index(r + 1, c);
      if (b == a + 1) continue;  // the turn, already odometry
      layout.candidates.emplace_back(a, b);
    }
    for (auto& g : chunk(begin, layout.candidates.size(), cfg.group_size)) {
      layout.groups.push_back(std::move(g));
    }
  }

  std::mt19937_64 rng(cfg.seed);
  return assemble(cfg, std::move(layout), rng);
}

SynthDataset generate_manhattan(const SynthConfig& cfg) {
  cfg.validate();
  if (cfg.kind != SynthKind::kManhattan) {
    throw std::invalid_argument("generate_manhattan: not a manhattan config");
  }
  std::mt19937_64 rng(cfg.seed);
  // Square arena; the walk turns instead of leaving it.
  const long extent = std::max<long>(
      4, static_cast<long>(std::ceil(std::sqrt(static_cast<double>(cfg.steps)) / 2.0)));
  const std::array<std::pair<long, long>, 4> heading_dir = {
      std::pair{1L, 0L}, std::pair{0L, 1L}, std::pair{-1L, 0L}, std::pair{0L, -1L}};

  Layout layout;
  std::map<std::pair<long, long>, NodeId> last_visit;
  long x = 0;
  long y = 0;
  int heading = 0;
  layout.poses.push_back(Pose2::identity());
  last_visit[{x, y}] = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);

  for (std::size_t k = 1; k <= cfg.steps; ++k) {
    const double draw = u(rng);
    int turn = draw < 0.6 ? 0 : (draw < 0.8 ? 1 : 3);  // straight, left, right
    int h = (heading + turn) % 4;
    const auto inside = [&](int hh) {
      const long nx = x + heading_dir[hh].first;
      const long ny = y + heading_dir[hh].second;
      return nx >= 0 && nx < extent && ny >= 0 && ny < extent;
    };
    if (!inside(h)) {
      // Try the remaining 90 degree options in a seeded order, never a U-turn.
      const int alt_first = u(rng) < 0.5 ? 1 : 3;
      const int options[3] = {alt_first, 4 - alt_first, 0};
      bool found = false;
      for (int t : options) {
        if (inside((heading + t) % 4)) {
          h = (heading + t) % 4;
          found = true;
          break;
        }
      }
      if (!found) h = (heading + 2) % 4;  // dead end corner, cannot happen with extent >= 2
    }
    heading = h;
    x += heading_dir[h].first;
    y += heading_dir[h].second;
    const NodeId id = layout.poses.size();
    layout.poses.push_back(Pose2::from_xytheta(static_cast<double>(x), static_cast<double>(y),
                                               wrap_angle(std::numbers::pi / 2.0 * h)));
    const auto it = last_visit.find({x, y});
    if (it != last_visit.end() && it->second + 1 < id) {
      layout.candidates.emplace_back(it->second, id);
    }
    last_visit[{x, y}] = id;
  }
  for (auto& g : chunk(0, layout.candidates.size(), cfg.group_size)) {
    layout.groups.push_back(std::move(g));
  }
  return assemble(cfg, std::move(layout), rng);
}

SynthDataset generate(const SynthConfig& cfg) {
  return cfg.kind == SynthKind::kGrid ? generate_grid(cfg) : generate_manhattan(cfg);
}

Pose2 perturb_measurement(const Pose2& true_rel, double sigma_t, double sigma_r,
                          std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const Vec2 dt(sigma_t * n01(rng), sigma_t * n01(rng));
  const double eps = wrap_angle(sigma_r * n01(rng));
  return Pose2(true_rel.rotation() * rotation_from_angle(eps), true_rel.translation() + dt);
}

SpoiledGraph spoil_with_outliers(const PoseGraph& graph, std::size_t count, std::size_t group_size,
                                 std::uint64_t seed) {
  validate(graph);
  if (group_size < 1) throw std::invalid_argument("spoil_with_outliers: group_size must be >= 1");
  const std::size_t n = graph.num_nodes;
  if (count > 0 && n < 2 * group_size + 2) {
    throw std::invalid_argument("spoil_with_outliers: graph too small for the group size");
  }
  SpoiledGraph out;
  out.graph = graph;
  out.inlier_mask.assign(partition_edges(graph).loop_closures.size(), true);

  // Outliers borrow the median weights and the extent of the odometry estimate.
  std::vector<double> wt;
  std::vector<double> wr;
  for (const auto& m : graph.edges) {
    wt.push_back(m.omega_t);
    wr.push_back(m.omega_r);
  }
  std::nth_element(wt.begin(), wt.begin() + static_cast<long>(wt.size() / 2), wt.end());
  std::nth_element(wr.begin(), wr.begin() + static_cast<long>(wr.size() / 2), wr.end());
  const double omega_t = wt.empty() ? 1.0 : wt[wt.size() / 2];
  const double omega_r = wr.empty() ? 1.0 : wr[wr.size() / 2];
  const auto odom = integrate_odometry(graph);
  Vec2 lo = odom.front().translation();
  Vec2 hi = lo;
  for (const auto& p : odom) {
    lo = lo.cwiseMin(p.translation());
    hi = hi.cwiseMax(p.translation());
  }
  if ((hi - lo).norm() == 0.0) hi += Vec2::Ones();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> start(0, n - group_size);
  std::size_t added = 0;
  while (added < count) {
    const std::size_t len = std::min(group_size, count - added);
    std::size_t i = start(rng);
    std::size_t j = start(rng);
    const std::size_t gap = i > j ? i - j : j - i;
    if (gap <= len) continue;  // members must not touch the odometry chain
    if (i + len > n || j + len > n) continue;
    for (std::size_t k = 0; k < len; ++k) {
      RelPoseMeasurement m;
      m.from = i + k;
      m.to = j + k;
      m.measured = random_relative_pose(lo, hi, rng);
      m.omega_t = omega_t;
      m.omega_r = omega_r;
      out.graph.edges.push_back(m);
      out.inlier_mask.push_back(false);
    }
    added += len;
  }
  return out;
}

std::string mask_to_json(const std::vector<bool>& mask) {
  nlohmann::json j;
  j["inlier_mask"] = mask;
  return j.dump();
}

std::vector<bool> mask_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  return j.at("inlier_mask").get<std::vector<bool>>();
}

}  // namespace dcgm
