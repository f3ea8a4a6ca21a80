#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcgm/graph.hpp"

namespace dcgm {

/// Malformed input. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct G2oDocument {
  PoseGraph graph;
  /// One entry per node when the file declares vertices, empty otherwise.
  /// These are never used by the solver.
  std::vector<Pose2> initial_poses;
  std::size_t skipped_lines = 0;          // unknown record types
  std::size_t ignored_off_diagonal = 0;   // edges with non-zero cross information
};

/// Reads VERTEX_SE2 / EDGE_SE2 records. EDGE_SE2 information
/// (I11 I12 I13 I22 I23 I33) is reduced to omega_t = (I11 + I22) / 2 and
/// omega_r = I33. Angles are wrapped to (-pi, pi].
G2oDocument parse_g2o(std::istream& in);
G2oDocument parse_g2o_file(const std::string& path);

/// One VERTEX_SE2 line per node then one EDGE_SE2 line per edge, 17 significant
/// digits. When `poses` is empty the vertices are the odometry integration.
std::string write_g2o(const PoseGraph& graph, const std::vector<Pose2>& poses);

/// Lines "CORR i j i2 j2 w" naming two loop closures by their endpoints.
std::vector<EdgeCorrelation> parse_correlations(std::istream& in, const PoseGraph& graph);
std::vector<EdgeCorrelation> parse_correlations_file(const std::string& path,
                                                     const PoseGraph& graph);

std::string write_correlations(const PoseGraph& graph);

/// Pairs every two loop closures (i, j), (i', j') with |i - i'| <= 1 and
/// |j - j'| <= 1 using `weight`.
std::vector<EdgeCorrelation> auto_correlations(const PoseGraph& graph, double weight);

/// Full-precision decimal used by every text writer in the library.
std::string format_double(double v);

}  // namespace dcgm
