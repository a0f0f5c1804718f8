#include "riskdrive/risk/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

namespace riskdrive::risk {

RiskMapping fit(const std::vector<TrainingPair>& pairs) {
  if (pairs.size() < 2) throw std::invalid_argument("fit: need at least two pairs");
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  bool distinct = false;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& p = pairs[static_cast<std::size_t>(k)];
    if (!std::isfinite(p.zeta) || !std::isfinite(p.theta)) {
      throw std::invalid_argument("fit: non-finite training pair");
    }
    X(k, 0) = 1.0;
    X(k, 1) = p.zeta;
    y(k) = p.theta;
    distinct = distinct || p.zeta != pairs[0].zeta;
  }
  if (!distinct) throw std::invalid_argument("fit: all zeta identical, slope undetermined");
  const Eigen::Vector2d beta = X.colPivHouseholderQr().solve(y);
  RiskMapping m;
  m.beta0 = beta(0);
  m.beta1 = beta(1);
  m.training_pairs = pairs;
  return m;
}

double raw_theta(const RiskMapping& m, double zeta) { return m.beta1 * zeta + m.beta0; }

MappedTheta map_to_theta(const RiskMapping& m, double zeta) {
  const double t = raw_theta(m, zeta);
  if (t < m.theta_lo) return {m.theta_lo, true};
  if (t > m.theta_hi) return {m.theta_hi, true};
  return {t, false};
}

std::string_view to_string(RiskLabel l) {
  switch (l) {
    case RiskLabel::very_conservative: return "very conservative";
    case RiskLabel::conservative: return "conservative";
    case RiskLabel::aggressive: return "aggressive";
    case RiskLabel::very_aggressive: return "very aggressive";
  }
  return "unknown";
}

RiskLabel risk_label_from_string(std::string_view s) {
  for (int c = 0; c < kClusters; ++c) {
    if (to_string(static_cast<RiskLabel>(c)) == s) return static_cast<RiskLabel>(c);
  }
  throw std::invalid_argument("unknown risk label: " + std::string(s));
}

int RiskClusters::nearest(double theta) const {
  int best = 0;
  for (int c = 1; c < kClusters; ++c) {
    if (std::abs(theta - centroids[c]) < std::abs(theta - centroids[best])) best = c;
  }
  return best;
}

namespace {

using Centers = std::array<double, kClusters>;

int nearest_center(const Centers& c, double x) {
  int best = 0;
  for (int k = 1; k < kClusters; ++k) {
    if (std::abs(x - c[k]) < std::abs(x - c[best])) best = k;
  }
  return best;
}

Centers plus_plus(const std::vector<double>& xs, std::mt19937_64& rng) {
  Centers c{};
  std::uniform_int_distribution<std::size_t> first(0, xs.size() - 1);
  c[0] = xs[first(rng)];
  std::vector<double> d2(xs.size());
  for (int k = 1; k < kClusters; ++k) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) best = std::min(best, (xs[i] - c[j]) * (xs[i] - c[j]));
      d2[i] = best;
    }
    std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
    c[k] = xs[pick(rng)];
  }
  return c;
}

// Optimal 1-D split: clusters are contiguous runs of the sorted values, so
// a dynamic program over split points finds the global minimum.
Centers contiguous_optimum(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  std::vector<double> s(n + 1, 0.0), q(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s[i + 1] = s[i] + xs[i];
    q[i + 1] = q[i] + xs[i] * xs[i];
  }
  auto sse = [&](std::size_t a, std::size_t b) {  // values [a, b)
    const double m = static_cast<double>(b - a);
    return q[b] - q[a] - (s[b] - s[a]) * (s[b] - s[a]) / m;
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  // cost[k][j]: best for the first j values in k + 1 clusters.
  std::vector<std::vector<double>> cost(kClusters, std::vector<double>(n + 1, inf));
  std::vector<std::vector<std::size_t>> cut(kClusters, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t j = 1; j <= n; ++j) cost[0][j] = sse(0, j);
  for (int k = 1; k < kClusters; ++k) {
    for (std::size_t j = static_cast<std::size_t>(k) + 1; j <= n; ++j) {
      for (std::size_t i = static_cast<std::size_t>(k); i < j; ++i) {
        const double v = cost[k - 1][i] + sse(i, j);
        if (v < cost[k][j]) {
          cost[k][j] = v;
          cut[k][j] = i;
        }
      }
    }
  }
  Centers c{};
  std::size_t end = n;
  for (int k = kClusters - 1; k >= 0; --k) {
    const std::size_t begin = k == 0 ? 0 : cut[k][end];
    c[k] = (s[end] - s[begin]) / static_cast<double>(end - begin);
    end = begin;
  }
  return c;
}

// Single-point transfers that lower the within-cluster sum of squares;
// escapes Lloyd fixed points where a boundary point sits between clusters.
void hartigan(const std::vector<double>& xs, Centers& c, std::vector<int>& assign) {
  std::array<double, kClusters> count{};
  for (int a : assign) count[a] += 1.0;
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const int from = assign[i];
      if (count[from] < 2.0) continue;
      const double d_from = xs[i] - c[from];
      const double loss = count[from] / (count[from] - 1.0) * d_from * d_from;
      int to = from;
      double gain = 0.0;
      for (int k = 0; k < kClusters; ++k) {
        if (k == from) continue;
        const double d = xs[i] - c[k];
        const double g = loss - count[k] / (count[k] + 1.0) * d * d;
        if (g > gain + 1e-12 * (1.0 + loss)) {
          gain = g;
          to = k;
        }
      }
      if (to == from) continue;
      c[from] = (c[from] * count[from] - xs[i]) / (count[from] - 1.0);
      c[to] = (c[to] * count[to] + xs[i]) / (count[to] + 1.0);
      count[from] -= 1.0;
      count[to] += 1.0;
      assign[i] = to;
      moved = true;
    }
  }
  // Recompute means exactly after incremental updates.
  std::array<double, kClusters> sum{};
  for (std::size_t i = 0; i < xs.size(); ++i) sum[assign[i]] += xs[i];
  for (int k = 0; k < kClusters; ++k) c[k] = sum[k] / count[k];
}

struct LloydResult {
  Centers centers;
  std::vector<int> assignment;
  double inertia;
};

LloydResult lloyd(const std::vector<double>& xs, Centers c, int max_iterations) {
  std::vector<int> assign(xs.size(), -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const int k = nearest_center(c, xs[i]);
      changed = changed || k != assign[i];
      assign[i] = k;
    }
    Centers sum{};
    std::array<std::size_t, kClusters> count{};
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sum[assign[i]] += xs[i];
      ++count[assign[i]];
    }
    for (int k = 0; k < kClusters; ++k) {
      if (count[k] > 0) continue;
      // Empty cluster: move it onto the point farthest from its center.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = std::abs(xs[i] - c[assign[i]]);
        if (count[assign[i]] > 1 && d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --count[assign[far]];
      sum[assign[far]] -= xs[far];
      assign[far] = k;
      sum[k] = xs[far];
      count[k] = 1;
      changed = true;
    }
    for (int k = 0; k < kClusters; ++k) c[k] = sum[k] / static_cast<double>(count[k]);
    if (!changed) break;
  }
  hartigan(xs, c, assign);
  double inertia = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    inertia += (xs[i] - c[assign[i]]) * (xs[i] - c[assign[i]]);
  }
  return {c, assign, inertia};
}

}  // namespace

RiskClusters cluster(const std::vector<double>& thetas, const ClusterOptions& options) {
  std::set<double> distinct;
  for (double t : thetas) {
    if (!std::isfinite(t)) throw std::invalid_argument("cluster: non-finite theta");
    distinct.insert(t);
  }
  if (distinct.size() < static_cast<std::size_t>(kClusters)) {
    throw std::invalid_argument("cluster: need at least 4 distinct theta values");
  }
  if (options.restarts < 1) throw std::invalid_argument("cluster: restarts must be >= 1");
  std::mt19937_64 rng(options.seed);
  LloydResult best{{}, {}, std::numeric_limits<double>::infinity()};
  for (int r = 0; r < options.restarts; ++r) {
    auto res = lloyd(thetas, plus_plus(thetas, rng), options.max_iterations);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  // One extra start from the exact split; k-means++ alone can stall in a
  // local optimum even on a dozen points.
  auto exact = lloyd(thetas, contiguous_optimum(thetas), options.max_iterations);
  if (exact.inertia < best.inertia) best = std::move(exact);
  std::array<int, kClusters> by_theta{};
  std::iota(by_theta.begin(), by_theta.end(), 0);
  std::sort(by_theta.begin(), by_theta.end(),
            [&](int a, int b) { return best.centers[a] > best.centers[b]; });
  std::array<int, kClusters> rank{};
  RiskClusters out;
  for (int r = 0; r < kClusters; ++r) {
    rank[by_theta[r]] = r;
    out.centroids[r] = best.centers[by_theta[r]];
  }
  out.assignment.reserve(thetas.size());
  for (int a : best.assignment) {
    out.assignment.push_back(rank[a]);
    ++out.sizes[rank[a]];
  }
  out.inertia = best.inertia;
  return out;
}

nlohmann::json to_json(const RiskMapping& m) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : m.training_pairs) pairs.push_back({p.zeta, p.theta});
  return {{"beta0", m.beta0},
          {"beta1", m.beta1},
          {"bounds", {m.theta_lo, m.theta_hi}},
          {"training_pairs", pairs}};
}

RiskMapping mapping_from_json(const nlohmann::json& j) {
  RiskMapping m;
  m.beta0 = j.at("beta0").get<double>();
  m.beta1 = j.at("beta1").get<double>();
  const auto b = j.at("bounds").get<std::vector<double>>();
  if (b.size() != 2 || !(b[0] < b[1]) || !std::isfinite(b[0]) || !std::isfinite(b[1])) {
    throw std::invalid_argument("mapping: bounds must be a finite [lo, hi] pair");
  }
  m.theta_lo = b[0];
  m.theta_hi = b[1];
  if (j.contains("training_pairs")) {
    for (const auto& p : j.at("training_pairs")) {
      m.training_pairs.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
  }
  return m;
}

RiskMapping load_mapping(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return mapping_from_json(nlohmann::json::parse(in));
}

void save_mapping(const std::filesystem::path& path, const RiskMapping& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

void write_cluster_report(std::ostream& out, const RiskClusters& c) {
  out << "cluster,label,centroid,size\n";
  for (int k = 0; k < kClusters; ++k) {
    out << k << ',' << to_string(RiskClusters::label_of(k)) << ','
        << nlohmann::json(c.centroids[k]).dump() << ',' << c.sizes[k] << '\n';
  }
}

}  // namespace riskdrive::risk
