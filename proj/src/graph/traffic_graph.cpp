#include "riskdrive/graph/traffic_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riskdrive::graph {

int TrafficGraph::index_of(int agent_id) const {
  const auto it = std::find(ids.begin(), ids.end(), agent_id);
  return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
}

bool TrafficGraph::connected(int i, int j) const {
  if (i == j) return false;
  const int a = std::min(i, j);
  const int b = std::max(i, j);
  return std::any_of(edges.begin(), edges.end(),
                     [&](const Edge& e) { return e.i == a && e.j == b; });
}

TrafficGraph build_graph(std::span<const int> ids,
                         std::span<const Eigen::Vector2d> positions, double mu,
                         std::int64_t t) {
  if (!(mu > 0.0)) throw std::invalid_argument("build_graph: mu must be > 0");
  if (ids.size() != positions.size()) {
    throw std::invalid_argument("build_graph: ids and positions differ in size");
  }
  const auto n = static_cast<Eigen::Index>(positions.size());
  TrafficGraph g;
  g.t = t;
  g.mu = mu;
  g.ids.assign(ids.begin(), ids.end());
  g.positions.assign(positions.begin(), positions.end());
  g.adjacency = Eigen::MatrixXd::Zero(n, n);
  g.laplacian = Eigen::MatrixXd::Zero(n, n);
  for (const auto& p : positions) {
    if (!p.allFinite()) throw std::invalid_argument("build_graph: non-finite position");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (positions[static_cast<std::size_t>(i)] -
                        positions[static_cast<std::size_t>(j)])
                           .norm();
      if (d >= mu) continue;
      g.adjacency(i, j) = g.adjacency(j, i) = d;
      g.laplacian(i, j) = g.laplacian(j, i) = -std::exp(-d);
      g.edges.push_back({static_cast<int>(i), static_cast<int>(j), d});
    }
  }
  g.degree = g.adjacency.rowwise().sum();
  g.laplacian.diagonal() = g.degree;
  return g;
}

TrafficGraph build_graph(std::span<const Eigen::Vector2d> positions, double mu,
                         std::int64_t t) {
  std::vector<int> ids(positions.size());
  for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = static_cast<int>(k);
  return build_graph(ids, positions, mu, t);
}

SpectralDecomposition symmetric_eigen(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("symmetric_eigen: decomposition failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

Eigen::VectorXd vertex_topology(const Eigen::MatrixXd& laplacian,
                                const Eigen::MatrixXd& eigenvectors, int i) {
  if (laplacian.rows() != laplacian.cols() ||
      (laplacian.size() > 0 &&
       (laplacian - laplacian.transpose()).cwiseAbs().maxCoeff() > 1e-12)) {
    throw std::invalid_argument("vertex_topology: Laplacian must be symmetric");
  }
  if (eigenvectors.rows() != laplacian.rows() || i < 0 || i >= eigenvectors.cols()) {
    throw std::invalid_argument("vertex_topology: bad eigenvector column");
  }
  return laplacian * eigenvectors.col(i);
}

nlohmann::json to_json(const TrafficGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges) edges.push_back({e.i, e.j, e.distance});
  return {{"t", g.t}, {"ids", g.ids}, {"edges", edges}, {"mu", g.mu}};
}

// ---------------------------------------------------------------------------

TemporalLaplacian::TemporalLaplacian(std::size_t reset_capacity)
    : capacity_(reset_capacity) {}

double TemporalLaplacian::retained_distance(int i, int j) const {
  return retained_(i, j);
}

int TemporalLaplacian::index_for(int agent_id) {
  const auto it = std::find(ids_.begin(), ids_.end(), agent_id);
  if (it != ids_.end()) return static_cast<int>(it - ids_.begin());
  ids_.push_back(agent_id);
  return static_cast<int>(ids_.size()) - 1;
}

void TemporalLaplacian::refresh_diagonal(int i) {
  // Ascending-order sum so a from-scratch rebuild reproduces the same bits.
  double sum = 0.0;
  for (Eigen::Index k = 0; k < retained_.cols(); ++k) {
    if (k != i) sum += retained_(i, k);
  }
  l_(i, i) = sum;
}

void TemporalLaplacian::update(const TrafficGraph& g) {
  reset_last_ = false;
  std::size_t fresh = 0;
  for (int id : g.ids) {
    if (std::find(ids_.begin(), ids_.end(), id) == ids_.end()) ++fresh;
  }
  if (ids_.size() + fresh > capacity_) {
    ids_ = g.ids;
    const auto n = static_cast<Eigen::Index>(ids_.size());
    l_ = Eigen::MatrixXd::Zero(n, n);
    retained_ = Eigen::MatrixXd::Zero(n, n);
    seen_.clear();
    ++resets_;
    reset_last_ = true;
    return;
  }

  const auto old_n = l_.rows();
  std::vector<int> map(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) map[k] = index_for(g.ids[k]);
  const auto n = static_cast<Eigen::Index>(ids_.size());
  if (n != old_n) {
    Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(n, n);
    grown.topLeftCorner(old_n, old_n) = l_;
    l_ = std::move(grown);
    Eigen::MatrixXd grown_r = Eigen::MatrixXd::Zero(n, n);
    grown_r.topLeftCorner(old_n, old_n) = retained_;
    retained_ = std::move(grown_r);
  }

  std::vector<int> touched;
  for (const auto& e : g.edges) {
    int p = map[static_cast<std::size_t>(e.i)];
    int q = map[static_cast<std::size_t>(e.j)];
    if (p > q) std::swap(p, q);
    const bool fresh_edge = seen_.insert({p, q}).second;
    if (!fresh_edge && retained_(p, q) == e.distance) continue;
    retained_(p, q) = retained_(q, p) = e.distance;
    l_(p, q) = l_(q, p) = -std::exp(-e.distance);
    touched.push_back(p);
    touched.push_back(q);
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (int i : touched) refresh_diagonal(i);
}

void GraphHistory::append(TrafficGraph g) {
  temporal_.update(g);
  graphs_.push_back(std::move(g));
}

const Eigen::MatrixXd& update_laplacian(GraphHistory& history, TrafficGraph new_graph) {
  history.append(std::move(new_graph));
  return history.temporal().matrix();
}

}  // namespace riskdrive::graph
