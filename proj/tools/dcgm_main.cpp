// dcgm: generate, spoil, solve, evaluate, benchmark and plot robust pose graphs.
//
// Exit codes: 0 success, 1 solver failure, 2 I/O or parse error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcgm/bench.hpp"
#include "dcgm/g2o_io.hpp"
#include "dcgm/pipeline.hpp"
#include "json.hpp"

namespace {

using namespace dcgm;

constexpr int kExitSolve = 1;
constexpr int kExitIo = 2;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Poses from a result JSON or from the vertices of a g2o file.
std::vector<Pose2> load_poses(const std::string& path) {
  if (ends_with(path, ".json")) return result_from_json(read_file(path)).first;
  auto doc = parse_g2o_file(path);
  if (doc.initial_poses.empty()) throw IoError("'" + path + "' has no vertices");
  return doc.initial_poses;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

struct GenerateArgs {
  std::string kind = "grid";
  SynthConfig cfg;
  double cbar_sigmas = 1.0;
  double corr_factor = 0.1;
  std::string out_dir = ".";
};

int run_generate(const GenerateArgs& a) {
  SynthConfig cfg = a.cfg;
  if (a.kind == "grid") {
    cfg.kind = SynthKind::kGrid;
  } else if (a.kind == "manhattan") {
    cfg.kind = SynthKind::kManhattan;
  } else {
    throw std::invalid_argument("unknown kind '" + a.kind + "'");
  }
  SynthDataset data = generate(cfg);
  const RobustParams params = thresholds_from_sigmas(cfg.sigma_t, cfg.sigma_r, a.cbar_sigmas);
  data.graph.correlations =
      auto_correlations(data.graph, auto_correlation_weight(data.graph, params, a.corr_factor));

  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);
  write_file((dir / "graph.g2o").string(), write_g2o(data.graph, {}));
  write_file((dir / "truth.g2o").string(), write_g2o(data.graph, data.truth.poses));
  write_file((dir / "mask.json").string(), mask_to_json(data.truth.inlier_mask) + "\n");
  write_file((dir / "corr.txt").string(), write_correlations(data.graph));
  std::cout << "wrote " << data.graph.num_nodes << " poses, " << data.graph.edges.size()
            << " edges, " << data.truth.inlier_mask.size() << " loop closures to " << a.out_dir << "\n";
  return 0;
}

struct SpoilArgs {
  std::string input;
  std::size_t count = 20;
  std::size_t group_size = 4;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

// Adds grouped outlier loop closures to an existing graph; every original
// loop closure is labelled an inlier.
int run_spoil(const SpoilArgs& a) {
  const G2oDocument doc = parse_g2o_file(a.input);
  const SpoiledGraph sp = spoil_with_outliers(doc.graph, a.count, a.group_size, a.seed);
  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);
  write_file((dir / "graph.g2o").string(), write_g2o(sp.graph, doc.initial_poses));
  write_file((dir / "mask.json").string(), mask_to_json(sp.inlier_mask) + "\n");
  std::cout << "added " << sp.graph.edges.size() - doc.graph.edges.size() << " outliers to " << a.input << "\n";
  return 0;
}

struct SolveArgs {
  std::string input;
  std::string corr = "auto";
  double cbar_sigmas = 1.0;
  double sigma_t = 0.0;
  double sigma_r = 0.0;
  double corr_factor = 0.1;
  DcgmOptions opts;
  bool no_gauge = false;
  std::string out = "result.json";
  std::string poses_out;
  std::string trace;
};

int run_solve(SolveArgs a) {
  G2oDocument doc = parse_g2o_file(a.input);
  PoseGraph graph = std::move(doc.graph);
  validate(graph);

  // Thresholds from the median noise level unless given explicitly.
  std::vector<double> wt;
  std::vector<double> wr;
  for (const auto& m : graph.edges) {
    wt.push_back(m.omega_t);
    wr.push_back(m.omega_r);
  }
  const double sigma_t = a.sigma_t > 0.0 ? a.sigma_t : 1.0 / std::sqrt(median(wt));
  const double sigma_r = a.sigma_r > 0.0 ? a.sigma_r : 1.0 / std::sqrt(median(wr));
  const RobustParams params = thresholds_from_sigmas(sigma_t, sigma_r, a.cbar_sigmas);

  if (a.corr == "auto") {
    graph.correlations = auto_correlations(graph, auto_correlation_weight(graph, params, a.corr_factor));
  } else if (a.corr != "none") {
    graph.correlations = parse_correlations_file(a.corr, graph);
  }

  a.opts.sdp.anchor_gauge = !a.no_gauge;
  std::ofstream trace;
  if (!a.trace.empty()) {
    trace.open(a.trace);
    if (!trace) throw IoError("cannot write '" + a.trace + "'");
    a.opts.sdp.trace = &trace;
  }

  DcgmResult res;
  try {
    res = dcgm_solve(graph, params, a.opts);
  } catch (const SolverError& e) {
    std::cerr << "solve failed: " << e.what() << "\n";
    return kExitSolve;
  }
  write_file(a.out, result_to_json(res) + "\n");
  if (!a.poses_out.empty()) write_file(a.poses_out, write_g2o(graph, res.poses));
  std::cout << "rank " << res.sdp.numerical_rank << (res.tight ? " (tight)" : "") << ", rejected "
            << res.rejected_edges.size() << " of " << res.thetas.size() << " loop closures, objective "
            << res.refit_objective << ", lower bound " << res.lower_bound
            << (res.sdp.converged ? "" : " [solver hit max_iters]") << "\n";
  return 0;
}

struct EvalArgs {
  std::string estimate;
  std::string truth;
  std::string mask;
  std::uint64_t seed = 0;
  double ratio = 0.0;
  std::string variant = "DC-GM";
  bool header = true;
};

int run_eval(const EvalArgs& a) {
  const auto j = nlohmann::json::parse(read_file(a.estimate));
  const auto [poses, thetas] = result_from_json(j.dump());
  const auto truth = load_poses(a.truth);
  const auto mask = mask_from_json(read_file(a.mask));

  RunRow row;
  row.seed = a.seed;
  row.outlier_ratio = a.ratio;
  if (a.variant == "DC-GMd") {
    row.variant = Variant::kDecoupled;
  } else if (a.variant != "DC-GM") {
    throw std::invalid_argument("unknown variant '" + a.variant + "'");
  }
  row.avg_translation_error = ate(poses, truth);
  const auto cls = classify_report(thetas, mask);
  row.pct_outliers_rejected = cls.pct_outliers_rejected;
  row.pct_inliers_rejected = cls.pct_inliers_rejected;
  row.rank = j.value("rank", 0);
  row.lower_bound = j.value("lower_bound", 0.0);
  row.objective = j.value("objective", 0.0);
  if (j.contains("timings")) row.wall_time_s = j["timings"].value("total_s", 0.0);
  if (a.header) std::cout << csv_header() << "\n";
  std::cout << csv_row(row) << "\n";
  return 0;
}

int run_bench(const std::string& config_path, const std::string& out, std::size_t jobs) {
  BenchConfig cfg = BenchConfig::from_json(read_file(config_path));
  if (jobs > 0) cfg.jobs = jobs;
  std::vector<RunRow> rows;
  try {
    rows = run_benchmark(cfg);
  } catch (const SolverError& e) {
    std::cerr << "solve failed: " << e.what() << "\n";
    return kExitSolve;
  }
  std::ostringstream csv;
  write_csv(csv, rows);
  if (out.empty() || out == "-") {
    std::cout << csv.str();
  } else {
    write_file(out, csv.str());
  }
  return 0;
}

struct PlotArgs {
  std::string estimate;
  std::string reference;
  std::string graph;
  std::string out = "plot.svg";
};

int run_plot(const PlotArgs& a) {
  const auto est = load_poses(a.estimate);
  const auto ref = a.reference.empty() ? est : load_poses(a.reference);
  std::vector<std::pair<NodeId, NodeId>> rejected;
  if (ends_with(a.estimate, ".json") && !a.graph.empty()) {
    const auto thetas = result_from_json(read_file(a.estimate)).second;
    const auto doc = parse_g2o_file(a.graph);
    const auto part = partition_edges(doc.graph);
    if (thetas.size() != part.loop_closures.size()) {
      throw IoError("result and graph disagree on the number of loop closures");
    }
    for (std::size_t e = 0; e < thetas.size(); ++e) {
      if (thetas[e] < 0) {
        const auto& m = doc.graph.edges[part.loop_closures[e]];
        rejected.emplace_back(m.from, m.to);
      }
    }
  }
  write_file(a.out, plot_trajectories(est, ref, rejected));
  return 0;
}

void add_solver_flags(CLI::App* cmd, DcgmOptions& o) {
  cmd->add_option("--max-iters", o.sdp.max_iters, "SDP iteration cap");
  cmd->add_option("--tol-feas", o.sdp.tol_feas, "Relative feasibility tolerance");
  cmd->add_option("--tol-obj", o.sdp.tol_obj, "Relative objective-change tolerance");
  cmd->add_option("--rho", o.sdp.rho, "Initial ADMM penalty");
  cmd->add_option("--anderson", o.sdp.anderson_memory, "Anderson memory (0 disables)");
  cmd->add_option("--rank-tol", o.rank_tol, "Relative eigenvalue threshold for the rank");
  cmd->add_flag("!--no-refine", o.refine, "Skip the final Gauss-Newton refinement");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-continuous robust pose graph optimization"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic dataset");
  g->add_option("--kind", gen.kind, "grid or manhattan")->check(CLI::IsMember({"grid", "manhattan"}));
  g->add_option("--rows", gen.cfg.rows);
  g->add_option("--cols", gen.cfg.cols);
  g->add_option("--steps", gen.cfg.steps, "Manhattan walk length");
  g->add_option("--sigma-t", gen.cfg.sigma_t, "Translation noise (m)");
  g->add_option("--sigma-r", gen.cfg.sigma_r, "Rotation noise (rad)");
  g->add_flag("--noiseless", gen.cfg.noiseless, "Exact measurements");
  g->add_option("--outlier-ratio", gen.cfg.outlier_ratio);
  g->add_option("--group-size", gen.cfg.group_size);
  g->add_flag("--heterogeneous", gen.cfg.heterogeneous_groups, "Outliers picked individually");
  g->add_option("--max-loop-closures", gen.cfg.max_loop_closures);
  g->add_option("--seed", gen.cfg.seed);
  g->add_option("--cbar-sigmas", gen.cbar_sigmas, "Threshold multiplier used for the correlation weight");
  g->add_option("--corr-factor", gen.corr_factor, "Correlation weight as a fraction of cbar");
  g->add_option("--out-dir", gen.out_dir);

  SpoilArgs sp;
  auto* sp_cmd = app.add_subcommand("spoil", "Add grouped outlier loop closures to a g2o file");
  sp_cmd->add_option("--input", sp.input)->required()->check(CLI::ExistingFile);
  sp_cmd->add_option("--count", sp.count, "Outliers to add");
  sp_cmd->add_option("--group-size", sp.group_size, "Consecutive outliers per group");
  sp_cmd->add_option("--seed", sp.seed);
  sp_cmd->add_option("--out-dir", sp.out_dir);

  SolveArgs sol;
  auto* s = app.add_subcommand("solve", "Run the robust solver on a g2o file");
  s->add_option("--input", sol.input)->required()->check(CLI::ExistingFile);
  s->add_option("--corr", sol.corr, "auto, none or a correlation file");
  s->add_option("--cbar-sigmas", sol.cbar_sigmas, "Admissible residual in noise standard deviations");
  s->add_option("--sigma-t", sol.sigma_t, "Translation noise (m); default from median information");
  s->add_option("--sigma-r", sol.sigma_r, "Rotation noise (rad); default from median information");
  s->add_option("--corr-factor", sol.corr_factor);
  s->add_flag("--no-gauge", sol.no_gauge, "Drop the pose-0 anchor constraint from the relaxation");
  s->add_option("--out", sol.out, "Result JSON");
  s->add_option("--poses-out", sol.poses_out, "Optional g2o with the estimate");
  s->add_option("--trace", sol.trace, "Per-iteration CSV trace of the SDP solver");
  add_solver_flags(s, sol.opts);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a result against ground truth");
  e->add_option("--estimate", ev.estimate, "Result JSON")->required()->check(CLI::ExistingFile);
  e->add_option("--truth", ev.truth, "g2o with reference vertices")->required()->check(CLI::ExistingFile);
  e->add_option("--mask", ev.mask, "Inlier mask JSON")->required()->check(CLI::ExistingFile);
  e->add_option("--seed", ev.seed);
  e->add_option("--ratio", ev.ratio);
  e->add_option("--variant", ev.variant);
  e->add_flag("!--no-header", ev.header);

  std::string bench_config;
  std::string bench_out;
  std::size_t bench_jobs = 0;
  auto* b = app.add_subcommand("bench", "Run a sweep described by a JSON config");
  b->add_option("--config", bench_config)->required()->check(CLI::ExistingFile);
  b->add_option("--out", bench_out, "CSV path, '-' for stdout");
  b->add_option("--jobs", bench_jobs, "Worker threads (overrides the config)");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Render trajectories to SVG");
  p->add_option("--estimate", pl.estimate, "Result JSON or g2o")->required()->check(CLI::ExistingFile);
  p->add_option("--reference", pl.reference, "g2o with reference vertices");
  p->add_option("--graph", pl.graph, "g2o graph, needed to draw rejected loop closures");
  p->add_option("--out", pl.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitIo;
  }

  try {
    if (*g) return run_generate(gen);
    if (*sp_cmd) return run_spoil(sp);
    if (*s) return run_solve(sol);
    if (*e) return run_eval(ev);
    if (*b) return run_bench(bench_config, bench_out, bench_jobs);
    if (*p) return run_plot(pl);
  } catch (const SolverError& err) {
    std::cerr << "solve failed: " << err.what() << "\n";
    return kExitSolve;
  } catch (const ParseError& err) {
    std::cerr << "parse error: " << err.what() << "\n";
    return kExitIo;
  } catch (const StructuralError& err) {
    std::cerr << "invalid graph: " << err.what() << "\n";
    return kExitIo;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "json error: " << err.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitIo;
  } catch (const std::exception& err) {
    std::cerr << "solve failed: " << err.what() << "\n";
    return kExitSolve;
  }
  return 0;
}
