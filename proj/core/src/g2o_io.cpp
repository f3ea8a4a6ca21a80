#include "dcgm/g2o_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>
#include <utility>

namespace dcgm {

namespace {

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

double to_double(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError("malformed number '" + std::string(tok) + "'", line_no);
  }
  return v;
}

std::size_t to_index(std::string_view tok, std::size_t line_no) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0) {
    throw ParseError("malformed vertex id '" + std::string(tok) + "'", line_no);
  }
  return static_cast<std::size_t>(v);
}

void expect_fields(const std::vector<std::string_view>& tok, std::size_t n, std::size_t line_no) {
  if (tok.size() != n) {
    throw ParseError(std::string(tok[0]) + " expects " + std::to_string(n - 1) + " fields, got " +
                         std::to_string(tok.size() - 1),
                     line_no);
  }
}

}  // namespace

std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << v;
  return os.str();
}

G2oDocument parse_g2o(std::istream& in) {
  G2oDocument doc;
  std::map<std::size_t, Pose2> vertices;
  std::size_t max_edge_node = 0;
  bool any_edge = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = tokenize(line);
    if (tok.empty()) continue;
    if (tok[0] == "VERTEX_SE2") {
      expect_fields(tok, 5, line_no);
      const std::size_t id = to_index(tok[1], line_no);
      const double x = to_double(tok[2], line_no);
      const double y = to_double(tok[3], line_no);
      const double th = wrap_angle(to_double(tok[4], line_no));
      if (!vertices.emplace(id, Pose2::from_xytheta(x, y, th)).second) {
        throw ParseError("duplicate vertex id " + std::to_string(id), line_no);
      }
    } else if (tok[0] == "EDGE_SE2") {
      expect_fields(tok, 12, line_no);
      RelPoseMeasurement m;
      m.from = to_index(tok[1], line_no);
      m.to = to_index(tok[2], line_no);
      double v[9];
      for (int k = 0; k < 9; ++k) v[k] = to_double(tok[3 + k], line_no);
      m.measured = Pose2::from_xytheta(v[0], v[1], wrap_angle(v[2]));
      // v[3..8] = I11 I12 I13 I22 I23 I33
      m.omega_t = 0.5 * (v[3] + v[6]);
      m.omega_r = v[8];
      if (v[4] != 0.0 || v[5] != 0.0 || v[7] != 0.0) ++doc.ignored_off_diagonal;
      if (!(m.omega_t > 0.0) || !(m.omega_r > 0.0)) {
        throw ParseError("information matrix must have a positive diagonal", line_no);
      }
      if (m.from == m.to) throw ParseError("edge connects a vertex to itself", line_no);
      max_edge_node = std::max({max_edge_node, m.from, m.to});
      any_edge = true;
      doc.graph.edges.push_back(m);
    } else {
      ++doc.skipped_lines;
    }
  }

  if (!vertices.empty()) {
    const std::size_t n = vertices.rbegin()->first + 1;
    if (vertices.size() != n) {
      throw StructuralError("vertex ids must be contiguous starting at 0");
    }
    if (any_edge && max_edge_node >= n) {
      throw StructuralError("edge references undeclared vertex " + std::to_string(max_edge_node));
    }
    doc.graph.num_nodes = n;
    doc.initial_poses.reserve(n);
    for (auto& [id, pose] : vertices) doc.initial_poses.push_back(pose);
  } else {
    doc.graph.num_nodes = any_edge ? max_edge_node + 1 : 0;
  }
  return doc;
}

G2oDocument parse_g2o_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  return parse_g2o(in);
}

std::string write_g2o(const PoseGraph& graph, const std::vector<Pose2>& poses) {
  const std::vector<Pose2> vertices = poses.empty() ? integrate_odometry(graph) : poses;
  if (vertices.size() != graph.num_nodes) {
    throw std::invalid_argument("write_g2o: pose count does not match the graph");
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Pose2& p = vertices[i];
    os << "VERTEX_SE2 " << i << ' ' << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
       << format_double(p.angle()) << '\n';
  }
  for (const auto& m : graph.edges) {
    const auto& t = m.translation();
    const std::string wt = format_double(m.omega_t);
    os << "EDGE_SE2 " << m.from << ' ' << m.to << ' ' << format_double(t.x()) << ' '
       << format_double(t.y()) << ' ' << format_double(m.measured.angle()) << ' ' << wt
       << " 0 0 " << wt << " 0 " << format_double(m.omega_r) << '\n';
  }
  return os.str();
}

std::vector<EdgeCorrelation> parse_correlations(std::istream& in, const PoseGraph& graph) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_endpoints;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& m = graph.edges[e];
    by_endpoints[std::minmax(m.from, m.to)].push_back(e);
  }
  const auto resolve = [&](std::size_t i, std::size_t j, std::size_t line_no) {
    const auto it = by_endpoints.find(std::minmax(i, j));
    const std::string name = "(" + std::to_string(i) + "," + std::to_string(j) + ")";
    if (it == by_endpoints.end()) throw ParseError("no edge " + name, line_no);
    if (it->second.size() > 1) throw ParseError("ambiguous edge " + name, line_no);
    const std::size_t e = it->second.front();
    if (graph.edges[e].is_odometry()) {
      throw ParseError("edge " + name + " is odometry, not a loop closure", line_no);
    }
    return e;
  };

  std::vector<EdgeCorrelation> out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = tokenize(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok[0] != "CORR") throw ParseError("unknown record '" + std::string(tok[0]) + "'", line_no);
    expect_fields(tok, 6, line_no);
    const std::size_t a = resolve(to_index(tok[1], line_no), to_index(tok[2], line_no), line_no);
    const std::size_t b = resolve(to_index(tok[3], line_no), to_index(tok[4], line_no), line_no);
    const double w = to_double(tok[5], line_no);
    if (w < 0.0) throw ParseError("negative correlation weight", line_no);
    if (a == b) throw ParseError("an edge cannot be correlated with itself", line_no);
    if (!seen.insert(std::minmax(a, b)).second) throw ParseError("duplicate pair", line_no);
    out.push_back({a, b, w});
  }
  return out;
}

std::vector<EdgeCorrelation> parse_correlations_file(const std::string& path,
                                                     const PoseGraph& graph) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  return parse_correlations(in, graph);
}

std::string write_correlations(const PoseGraph& graph) {
  std::ostringstream os;
  for (const auto& c : graph.correlations) {
    const auto& a = graph.edges[c.first];
    const auto& b = graph.edges[c.second];
    os << "CORR " << a.from << ' ' << a.to << ' ' << b.from << ' ' << b.to << ' '
       << format_double(c.weight) << '\n';
  }
  return os.str();
}

std::vector<EdgeCorrelation> auto_correlations(const PoseGraph& graph, double weight) {
  const auto lc = partition_edges(graph).loop_closures;
  const auto near = [](std::size_t a, std::size_t b) { return (a > b ? a - b : b - a) <= 1; };
  std::vector<EdgeCorrelation> out;
  for (std::size_t p = 0; p < lc.size(); ++p) {
    const auto& a = graph.edges[lc[p]];
    for (std::size_t q = p + 1; q < lc.size(); ++q) {
      const auto& b = graph.edges[lc[q]];
      if (near(a.from, b.from) && near(a.to, b.to)) out.push_back({lc[p], lc[q], weight});
    }
  }
  return out;
}

}  // namespace dcgm
