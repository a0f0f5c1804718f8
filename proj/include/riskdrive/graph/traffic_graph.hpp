#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace riskdrive::graph {

inline constexpr double kDefaultMu = 50.0;

struct Edge {
  int i = 0;  // vertex indices, i < j
  int j = 0;
  double distance = 0.0;
};

/// Geometric graph of one tick. A holds Euclidean distances of connected
/// pairs, L holds D on the diagonal and -exp(-d) off the diagonal.
struct TrafficGraph {
  std::int64_t t = 0;
  double mu = kDefaultMu;
  std::vector<int> ids;
  std::vector<Eigen::Vector2d> positions;
  Eigen::MatrixXd adjacency;
  Eigen::VectorXd degree;
  Eigen::MatrixXd laplacian;
  std::vector<Edge> edges;  // every pair with d < mu, including d == 0

  std::size_t size() const { return ids.size(); }
  /// Vertex index of an agent id, or -1.
  int index_of(int agent_id) const;
  bool connected(int i, int j) const;
  Eigen::MatrixXd degree_matrix() const { return degree.asDiagonal(); }
};

/// Builds the graph for one tick. Throws std::invalid_argument for mu <= 0,
/// non-finite positions or mismatched spans.
TrafficGraph build_graph(std::span<const int> ids,
                         std::span<const Eigen::Vector2d> positions, double mu,
                         std::int64_t t = 0);

/// Convenience overload with ids 0..n-1.
TrafficGraph build_graph(std::span<const Eigen::Vector2d> positions, double mu,
                         std::int64_t t = 0);

/// Symmetric eigendecomposition with ascending eigenvalues.
struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;  // columns
};

SpectralDecomposition symmetric_eigen(const Eigen::MatrixXd& m);

/// Column i of L * U. Throws std::invalid_argument if L is not symmetric.
Eigen::VectorXd vertex_topology(const Eigen::MatrixXd& laplacian,
                                const Eigen::MatrixXd& eigenvectors, int i);

/// Debug dump {t, ids, edges:[[i,j,d],...], mu}.
nlohmann::json to_json(const TrafficGraph& g);

// ---------------------------------------------------------------------------

/// Temporal Laplacian over agent ids in order of first appearance. Edges
/// once seen are retained with their last observed distance; the matrix is
/// reset to zero when the number of vertices exceeds the capacity.
class TemporalLaplacian {
 public:
  explicit TemporalLaplacian(std::size_t reset_capacity = 64);

  /// Embeds the current matrix as the leading block, appends rows for new
  /// agents and applies sparse symmetric corrections for every edge whose
  /// weight changed this tick.
  void update(const TrafficGraph& g);

  const Eigen::MatrixXd& matrix() const { return l_; }
  const std::vector<int>& vertex_ids() const { return ids_; }
  const std::set<std::pair<int, int>>& seen_edges() const { return seen_; }
  std::size_t reset_capacity() const { return capacity_; }
  std::size_t resets() const { return resets_; }
  bool reset_last_update() const { return reset_last_; }
  /// Retained distance of a pair of vertex indices (i < j).
  double retained_distance(int i, int j) const;

 private:
  int index_for(int agent_id);
  void refresh_diagonal(int i);

  std::size_t capacity_;
  Eigen::MatrixXd l_;
  std::vector<int> ids_;
  std::set<std::pair<int, int>> seen_;   // vertex-index pairs, i < j
  Eigen::MatrixXd retained_;             // last distance per seen pair
  std::size_t resets_ = 0;
  bool reset_last_ = false;
};

/// Sequence of tick graphs plus the temporal Laplacian they induce.
class GraphHistory {
 public:
  explicit GraphHistory(std::size_t reset_capacity = 64) : temporal_(reset_capacity) {}

  void append(TrafficGraph g);

  const std::vector<TrafficGraph>& graphs() const { return graphs_; }
  const TemporalLaplacian& temporal() const { return temporal_; }
  std::size_t size() const { return graphs_.size(); }
  bool empty() const { return graphs_.empty(); }

 private:
  std::vector<TrafficGraph> graphs_;
  TemporalLaplacian temporal_;
};

/// Functional form of TemporalLaplacian::update.
const Eigen::MatrixXd& update_laplacian(GraphHistory& history, TrafficGraph new_graph);

}  // namespace riskdrive::graph
