#include "dcgm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dcgm/g2o_io.hpp"
#include "json.hpp"

namespace dcgm {

double ate(const std::vector<Pose2>& estimate, const std::vector<Pose2>& reference) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("ate: length mismatch");
  if (estimate.empty()) return 0.0;
  const auto a = anchor_at_first(estimate);
  const auto b = anchor_at_first(reference);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i].translation() - b[i].translation()).norm();
  return sum / static_cast<double>(a.size());
}

RobustParams thresholds_from_sigmas(double sigma_t, double sigma_r, double p) {
  RobustParams params;
  params.cbar_t = p * sigma_t;
  params.cbar_R = p * std::sqrt(2.0) * sigma_r;
  params.validate();
  return params;
}

double auto_correlation_weight(const PoseGraph& graph, const RobustParams& params, double factor) {
  const auto part = partition_edges(graph);
  if (part.loop_closures.empty()) return 0.0;
  const auto probe = auto_correlations(graph, 1.0);
  std::map<std::size_t, std::size_t> degree;
  for (const auto& c : probe) {
    ++degree[c.first];
    ++degree[c.second];
  }
  std::size_t max_degree = 0;
  for (const auto& [e, k] : degree) max_degree = std::max(max_degree, k);
  if (max_degree == 0) return 0.0;
  double cbar = std::numeric_limits<double>::infinity();
  for (std::size_t e : part.loop_closures) cbar = std::min(cbar, params.cbar(graph.edges[e]));
  return factor * cbar / static_cast<double>(max_degree);
}

std::string variant_name(Variant v) { return v == Variant::kCoupled ? "DC-GM" : "DC-GMd"; }

BenchConfig BenchConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  BenchConfig c;
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    const std::string kind = s.value("kind", std::string("grid"));
    if (kind == "grid") {
      c.synth.kind = SynthKind::kGrid;
    } else if (kind == "manhattan") {
      c.synth.kind = SynthKind::kManhattan;
    } else {
      throw std::invalid_argument("bench config: unknown synth kind '" + kind + "'");
    }
    c.synth.rows = s.value("rows", c.synth.rows);
    c.synth.cols = s.value("cols", c.synth.cols);
    c.synth.steps = s.value("steps", c.synth.steps);
    c.synth.sigma_t = s.value("sigma_t", c.synth.sigma_t);
    c.synth.sigma_r = s.value("sigma_r", c.synth.sigma_r);
    c.synth.noiseless = s.value("noiseless", c.synth.noiseless);
    c.synth.group_size = s.value("group_size", c.synth.group_size);
    c.synth.heterogeneous_groups = s.value("heterogeneous_groups", c.synth.heterogeneous_groups);
    c.synth.max_loop_closures = s.value("max_loop_closures", c.synth.max_loop_closures);
  }
  if (j.contains("ratios")) c.ratios = j.at("ratios").get<std::vector<double>>();
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("variants")) {
    c.variants.clear();
    for (const auto& v : j.at("variants")) {
      const auto name = v.get<std::string>();
      if (name == "DC-GM") {
        c.variants.push_back(Variant::kCoupled);
      } else if (name == "DC-GMd") {
        c.variants.push_back(Variant::kDecoupled);
      } else {
        throw std::invalid_argument("bench config: unknown variant '" + name + "'");
      }
    }
  }
  c.cbar_sigmas = j.value("cbar_sigmas", c.cbar_sigmas);
  c.correlation_factor = j.value("correlation_factor", c.correlation_factor);
  c.jobs = j.value("jobs", c.jobs);
  if (j.contains("sdp")) {
    const auto& s = j.at("sdp");
    c.solver.sdp.max_iters = s.value("max_iters", c.solver.sdp.max_iters);
    c.solver.sdp.tol_feas = s.value("tol_feas", c.solver.sdp.tol_feas);
    c.solver.sdp.tol_obj = s.value("tol_obj", c.solver.sdp.tol_obj);
    c.solver.sdp.rho = s.value("rho", c.solver.sdp.rho);
    c.solver.sdp.anchor_gauge = s.value("anchor_gauge", c.solver.sdp.anchor_gauge);
  }
  for (double r : c.ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("bench config: ratio outside [0, 1)");
  }
  if (c.jobs < 1) c.jobs = 1;
  return c;
}

std::vector<RunRow> run_cell(const BenchConfig& config, double ratio, std::uint64_t seed) {
  SynthConfig sc = config.synth;
  sc.outlier_ratio = ratio;
  sc.seed = seed;
  const SynthDataset data = generate(sc);
  const RobustParams params = thresholds_from_sigmas(sc.sigma_t, sc.sigma_r, config.cbar_sigmas);

  // Outlier-free optimum: odometry plus true inliers.
  const auto part = partition_edges(data.graph);
  std::vector<std::size_t> clean = part.odometry;
  for (std::size_t e = 0; e < part.loop_closures.size(); ++e) {
    if (data.truth.inlier_mask[e]) clean.push_back(part.loop_closures[e]);
  }
  std::sort(clean.begin(), clean.end());
  const PoseGraph clean_graph = select_edges(data.graph, clean);
  const auto reference = gauss_newton(clean_graph, chordal_init(clean_graph), config.solver.gn).poses;

  std::vector<RunRow> rows;
  for (Variant v : config.variants) {
    PoseGraph g = data.graph;
    if (v == Variant::kCoupled) {
      g.correlations = auto_correlations(g, auto_correlation_weight(g, params, config.correlation_factor));
    }
    const auto t0 = std::chrono::steady_clock::now();
    const DcgmResult res = dcgm_solve(g, params, config.solver);
    RunRow row;
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.seed = seed;
    row.outlier_ratio = ratio;
    row.variant = v;
    row.avg_translation_error = ate(res.poses, data.truth.poses);
    row.ate_reference = ate(res.poses, reference);
    const auto cls = classify_report(res, data.truth.inlier_mask);
    row.pct_outliers_rejected = cls.pct_outliers_rejected;
    row.pct_inliers_rejected = cls.pct_inliers_rejected;
    row.rank = res.sdp.numerical_rank;
    row.lower_bound = res.lower_bound;
    row.objective = res.refit_objective;
    row.tight = res.tight;
    rows.push_back(row);
  }
  return rows;
}

std::vector<RunRow> run_benchmark(const BenchConfig& config) {
  std::vector<std::pair<double, std::uint64_t>> cells;
  for (double r : config.ratios) {
    for (std::uint64_t s : config.seeds) cells.emplace_back(r, s);
  }
  std::vector<std::vector<RunRow>> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      try {
        results[k] = run_cell(config, cells[k].first, cells[k].second);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::vector<RunRow> rows;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (errors[k]) std::rethrow_exception(errors[k]);
    rows.insert(rows.end(), results[k].begin(), results[k].end());
  }
  return rows;
}

std::string csv_header() {
  return "seed,outlier_ratio,method variant,avg_translation_error,pct_outliers_rejected,"
         "pct_inliers_rejected,rank,lower_bound,objective,wall_time_s";
}

std::string csv_row(const RunRow& r) {
  std::ostringstream os;
  os << r.seed << ',' << format_double(r.outlier_ratio) << ',' << variant_name(r.variant) << ','
     << format_double(r.avg_translation_error) << ',' << format_double(r.pct_outliers_rejected) << ','
     << format_double(r.pct_inliers_rejected) << ',' << r.rank << ',' << format_double(r.lower_bound)
     << ',' << format_double(r.objective) << ',' << format_double(r.wall_time_s);
  return os.str();
}

void write_csv(std::ostream& out, const std::vector<RunRow>& rows) {
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
}

std::string plot_trajectories(const std::vector<Pose2>& estimate, const std::vector<Pose2>& reference,
                              const std::vector<std::pair<NodeId, NodeId>>& rejected) {
  double xmin = std::numeric_limits<double>::infinity();
  double ymin = xmin;
  double xmax = -xmin;
  double ymax = -xmin;
  for (const auto* traj : {&estimate, &reference}) {
    for (const auto& p : *traj) {
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
      ymin = std::min(ymin, p.y());
      ymax = std::max(ymax, p.y());
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = ymin = 0.0;
    xmax = ymax = 1.0;
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
  const double margin = 0.05 * span;
  const double stroke = 0.004 * span;

  // SVG y points down; flip so the plot reads like the map.
  const auto pt = [&](const Pose2& p) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << p.x() << ',' << (ymax + ymin - p.y());
    return os.str();
  };
  const auto polyline = [&](const std::vector<Pose2>& traj, const char* colour) {
    std::string s = "  <polyline fill=\"none\" stroke=\"";
    s += colour;
    s += "\" stroke-width=\"" + format_double(stroke) + "\" points=\"";
    for (std::size_t i = 0; i < traj.size(); ++i) {
      if (i) s += ' ';
      s += pt(traj[i]);
    }
    s += "\"/>\n";
    return s;
  };

  std::ostringstream svg;
  svg.imbue(std::locale::classic());
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\""
      << format_double(xmin - margin) << ' ' << format_double(ymin - margin) << ' '
      << format_double(xmax - xmin + 2 * margin) << ' ' << format_double(ymax - ymin + 2 * margin)
      << "\" preserveAspectRatio=\"xMidYMid meet\">\n";
  svg << polyline(reference, "green");
  svg << polyline(estimate, "black");
  for (const auto& [a, b] : rejected) {
    if (a >= estimate.size() || b >= estimate.size()) continue;
    const Pose2& p = estimate[a];
    const Pose2& q = estimate[b];
    svg << "  <line stroke=\"red\" stroke-width=\"" << format_double(stroke) << "\" x1=\"" << p.x()
        << "\" y1=\"" << (ymax + ymin - p.y()) << "\" x2=\"" << q.x() << "\" y2=\""
        << (ymax + ymin - q.y()) << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dcgm
