#include "riskdrive/behavior/cmetric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace riskdrive::behavior {

namespace {

// Dense Dijkstra from one source; the graphs are small.
std::vector<double> shortest_paths(const graph::TrafficGraph& g, int source) {
  const std::size_t n = g.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const auto& e : g.edges) {
    adj[static_cast<std::size_t>(e.i)].push_back({e.j, e.distance});
    adj[static_cast<std::size_t>(e.j)].push_back({e.i, e.distance});
  }
  std::vector<double> dist(n, inf);
  std::vector<bool> done(n, false);
  dist[static_cast<std::size_t>(source)] = 0.0;
  for (std::size_t iter = 0; iter < n; ++iter) {
    int u = -1;
    for (std::size_t k = 0; k < n; ++k) {
      if (!done[k] && dist[k] < inf && (u < 0 || dist[k] < dist[static_cast<std::size_t>(u)])) {
        u = static_cast<int>(k);
      }
    }
    if (u < 0) break;
    done[static_cast<std::size_t>(u)] = true;
    for (const auto& [w, d] : adj[static_cast<std::size_t>(u)]) {
      const double cand = dist[static_cast<std::size_t>(u)] + d;
      if (cand < dist[static_cast<std::size_t>(w)]) dist[static_cast<std::size_t>(w)] = cand;
    }
  }
  return dist;
}

std::vector<std::optional<double>> derivative_series(
    const std::vector<std::optional<double>>& series, double dt, bool second) {
  std::vector<std::optional<double>> out(series.size());
  std::size_t k = 0;
  while (k < series.size()) {
    if (!series[k]) {
      ++k;
      continue;
    }
    std::size_t end = k;
    while (end < series.size() && series[end]) ++end;
    if (end - k >= 3) {
      std::vector<double> run;
      for (std::size_t m = k; m < end; ++m) run.push_back(*series[m]);
      const auto li = sle_sie(run, dt);
      const auto& src = second ? li.sie : li.sle;
      for (std::size_t m = k; m < end; ++m) out[m] = src[m - k];
    }
    k = end;
  }
  return out;
}

std::vector<std::optional<double>> as_optional(const std::vector<double>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

graph::TrafficGraph graph_of(const sim::World& world, double mu) {
  std::vector<int> ids;
  std::vector<Eigen::Vector2d> pos;
  ids.reserve(world.vehicles.size());
  pos.reserve(world.vehicles.size());
  for (const auto& v : world.vehicles) {
    ids.push_back(v.state.id);
    pos.emplace_back(v.state.x, v.state.y);
  }
  return graph::build_graph(ids, pos, mu, world.frame);
}

std::vector<graph::TrafficGraph> graphs_from_rows(const std::vector<sim::TrajectoryRow>& rows,
                                                  double mu) {
  std::vector<graph::TrafficGraph> out;
  std::size_t k = 0;
  while (k < rows.size()) {
    const std::int64_t frame = rows[k].frame;
    std::vector<int> ids;
    std::vector<Eigen::Vector2d> pos;
    for (; k < rows.size() && rows[k].frame == frame; ++k) {
      ids.push_back(rows[k].agent_id);
      pos.emplace_back(rows[k].x_m, rows[k].y_m);
    }
    out.push_back(graph::build_graph(ids, pos, mu, frame));
  }
  return out;
}

namespace {

double closeness_of(const graph::TrafficGraph& g, std::size_t i, double unreachable_factor) {
  const std::size_t n = g.size();
  const double cap = unreachable_factor * g.mu;
  const auto dist = shortest_paths(g, static_cast<int>(i));
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    total += std::isfinite(dist[j]) ? dist[j] : cap;
  }
  // All other vertices coincident with this one: largest finite value.
  return total > 0.0 ? static_cast<double>(n - 1) / total : std::numeric_limits<double>::max();
}

}  // namespace

std::vector<std::optional<double>> closeness_centrality(const graph::TrafficGraph& g,
                                                        double unreachable_factor) {
  const std::size_t n = g.size();
  std::vector<std::optional<double>> out(n);
  if (n < 2) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = closeness_of(g, i, unreachable_factor);
  return out;
}

Eigen::VectorXd eigenvector_centrality(const graph::TrafficGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  if (n == 0) return {};
  if (g.adjacency.isZero(0.0)) {
    return Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g.adjacency);
  Eigen::VectorXd v = solver.eigenvectors().col(n - 1);
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;
  return v.normalized();
}

std::vector<std::optional<double>> closeness_series(
    std::span<const graph::TrafficGraph> window, int agent_id,
    double unreachable_factor) {
  std::vector<std::optional<double>> out;
  for (const auto& g : window) {
    const int i = g.index_of(agent_id);
    if (i < 0) continue;
    if (g.size() < 2) {
      out.push_back(std::nullopt);
    } else {
      out.push_back(closeness_of(g, static_cast<std::size_t>(i), unreachable_factor));
    }
  }
  return out;
}

std::vector<double> degree_series(std::span<const graph::TrafficGraph> window,
                                  int agent_id) {
  std::vector<double> out;
  std::set<int> seen;
  for (const auto& g : window) {
    const int i = g.index_of(agent_id);
    if (i < 0) continue;
    for (const auto& e : g.edges) {
      if (e.i == i) seen.insert(g.ids[static_cast<std::size_t>(e.j)]);
      if (e.j == i) seen.insert(g.ids[static_cast<std::size_t>(e.i)]);
    }
    out.push_back(static_cast<double>(seen.size()));
  }
  return out;
}

std::vector<double> eigenvector_series(std::span<const graph::TrafficGraph> window,
                                       int agent_id) {
  std::vector<double> out;
  for (const auto& g : window) {
    const int i = g.index_of(agent_id);
    if (i < 0) continue;
    out.push_back(eigenvector_centrality(g)(i));
  }
  return out;
}

LikelihoodIntensity sle_sie(std::span<const double> f, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("sle_sie: dt must be > 0");
  const std::size_t n = f.size();
  if (n < 3) throw std::invalid_argument("sle_sie: need at least 3 samples");
  LikelihoodIntensity out;
  out.sle.resize(n);
  out.sie.resize(n);
  out.sle[0] = std::abs(f[1] - f[0]) / dt;
  out.sle[n - 1] = std::abs(f[n - 1] - f[n - 2]) / dt;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    out.sle[k] = std::abs(f[k + 1] - f[k - 1]) / (2.0 * dt);
    out.sie[k] = std::abs(f[k + 1] - 2.0 * f[k] + f[k - 1]) / (dt * dt);
  }
  out.sie[0] = std::abs(f[2] - 2.0 * f[1] + f[0]) / (dt * dt);
  out.sie[n - 1] = std::abs(f[n - 1] - 2.0 * f[n - 2] + f[n - 3]) / (dt * dt);
  return out;
}

BehaviorProfile compute_profile(std::span<const graph::TrafficGraph> window,
                                int agent_id, double dt, double unreachable_factor) {
  BehaviorProfile p;
  p.agent_id = agent_id;
  p.dt = dt;
  for (const auto& g : window) {
    if (g.index_of(agent_id) >= 0) p.frames.push_back(g.t);
  }
  p.zeta_c = closeness_series(window, agent_id, unreachable_factor);
  p.zeta_d = degree_series(window, agent_id);
  p.zeta_e = eigenvector_series(window, agent_id);

  const std::array<std::vector<std::optional<double>>, 3> series{
      p.zeta_c, as_optional(p.zeta_d), as_optional(p.zeta_e)};
  for (std::size_t k = 0; k < 3; ++k) {
    p.sle[k] = derivative_series(series[k], dt, false);
    p.sie[k] = derivative_series(series[k], dt, true);
  }
  const auto& sle_c = p.sle[static_cast<int>(Centrality::closeness)];
  if (std::any_of(sle_c.begin(), sle_c.end(), [](const auto& v) { return v.has_value(); })) {
    p.zeta_scalar = cmetric_scalar(p);
  }
  return p;
}

std::int64_t sle_peak_frame(const BehaviorProfile& profile) {
  const auto& sle = profile.sle[static_cast<int>(Centrality::closeness)];
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < sle.size(); ++k) {
    if (!sle[k]) continue;
    if (!best || *sle[k] > *sle[*best]) best = k;
  }
  if (!best) throw std::invalid_argument("cmetric: empty window");
  return profile.frames[*best];
}

double cmetric_scalar(const BehaviorProfile& profile) {
  const auto& sle = profile.sle[static_cast<int>(Centrality::closeness)];
  std::optional<double> best;
  for (const auto& v : sle) {
    if (v && (!best || *v > *best)) best = *v;
  }
  if (!best) throw std::invalid_argument("cmetric: empty window");
  return *best;
}

nlohmann::json to_json(const BehaviorProfile& p) {
  auto opt = [](const std::vector<std::optional<double>>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& x : v) a.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
    return a;
  };
  static constexpr std::array<const char*, 3> names{"closeness", "degree", "eigenvector"};
  nlohmann::json sle, sie;
  for (std::size_t k = 0; k < 3; ++k) {
    sle[names[k]] = opt(p.sle[k]);
    sie[names[k]] = opt(p.sie[k]);
  }
  return {{"agent_id", p.agent_id},
          {"dt", p.dt},
          {"frames", p.frames},
          {"zeta_c", opt(p.zeta_c)},
          {"zeta_d", p.zeta_d},
          {"zeta_e", p.zeta_e},
          {"sle", sle},
          {"sie", sie},
          {"zeta", p.zeta_scalar ? nlohmann::json(*p.zeta_scalar) : nlohmann::json(nullptr)},
          {"window", {p.window_begin(), p.window_end()}}};
}

// ---------------------------------------------------------------------------

void AnnotationSet::validate() const {
  if (start.empty()) throw std::invalid_argument("annotations: empty set");
  if (start.size() != end.size()) {
    throw std::invalid_argument("annotations: |S| != |E|");
  }
  for (std::size_t m = 0; m < start.size(); ++m) {
    if (start[m] > end[m]) {
      throw std::invalid_argument("annotations: start after end for annotator " +
                                  std::to_string(m));
    }
  }
}

FrameDistribution aggressive_frame_distribution(const AnnotationSet& ann) {
  ann.validate();
  FrameDistribution d;
  d.first_frame = *std::min_element(ann.start.begin(), ann.start.end());
  const std::int64_t last = *std::max_element(ann.end.begin(), ann.end.end());
  d.counts.assign(static_cast<std::size_t>(last - d.first_frame + 1), 0.0);
  for (std::size_t m = 0; m < ann.annotators(); ++m) {
    for (std::int64_t t = ann.start[m]; t <= ann.end[m]; ++t) {
      d.counts[static_cast<std::size_t>(t - d.first_frame)] += 1.0;
    }
  }
  double total = 0.0;
  for (double c : d.counts) total += c;
  d.probability.resize(d.counts.size());
  for (std::size_t k = 0; k < d.counts.size(); ++k) d.probability[k] = d.counts[k] / total;
  return d;
}

double expected_aggressive_frame(const AnnotationSet& ann) {
  const auto d = aggressive_frame_distribution(ann);
  double e = 0.0;
  for (std::size_t k = 0; k < d.probability.size(); ++k) {
    e += static_cast<double>(d.first_frame + static_cast<std::int64_t>(k)) * d.probability[k];
  }
  // Guard the frame bounds against rounding in the weighted sum.
  const double lo = static_cast<double>(d.first_frame);
  const double hi = static_cast<double>(d.first_frame) + static_cast<double>(d.counts.size() - 1);
  return std::clamp(e, lo, hi);
}

double tde(const BehaviorProfile& profile, const AnnotationSet& ann) {
  const double expected = expected_aggressive_frame(ann);
  return std::abs(static_cast<double>(sle_peak_frame(profile)) - expected);
}

AnnotationSet read_annotations_csv(std::istream& in) {
  AnnotationSet ann;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("annotator_id", 0) == 0) continue;
    std::stringstream ss(line);
    std::string id, s, e;
    if (!std::getline(ss, id, ',') || !std::getline(ss, s, ',') || !std::getline(ss, e, ',')) {
      throw std::runtime_error("annotations line " + std::to_string(line_no) +
                               ": expected 3 fields");
    }
    try {
      ann.start.push_back(std::stoll(s));
      ann.end.push_back(std::stoll(e));
    } catch (const std::exception&) {
      throw std::runtime_error("annotations line " + std::to_string(line_no) +
                               ": bad frame number");
    }
  }
  ann.validate();
  return ann;
}

AnnotationSet read_annotations_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_annotations_csv(in);
}

}  // namespace riskdrive::behavior
