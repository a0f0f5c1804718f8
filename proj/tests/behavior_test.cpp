#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "behavior_oracles.hpp"
#include "riskdrive/behavior/cmetric.hpp"

using namespace riskdrive;
using namespace riskdrive::behavior;
using Eigen::MatrixXd;
using Eigen::Vector2d;

namespace {

graph::TrafficGraph graph_at(std::vector<int> ids, std::vector<Vector2d> pos, double mu,
                             std::int64_t t = 0) {
  return graph::build_graph(ids, pos, mu, t);
}

// All-pairs shortest paths by Floyd-Warshall.
MatrixXd floyd(const graph::TrafficGraph& g, double cap) {
  const auto n = static_cast<Eigen::Index>(g.size());
  const double inf = std::numeric_limits<double>::infinity();
  MatrixXd d = MatrixXd::Constant(n, n, inf);
  for (Eigen::Index i = 0; i < n; ++i) d(i, i) = 0.0;
  for (const auto& e : g.edges) d(e.i, e.j) = d(e.j, e.i) = e.distance;
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
  return d.unaryExpr([cap](double v) { return std::isinf(v) ? cap : v; });
}

// Shifted power iteration for the Perron vector of a non-negative matrix.
Eigen::VectorXd power_iteration(const MatrixXd& a) {
  const auto n = a.rows();
  const MatrixXd shifted = a + a.cwiseAbs().rowwise().sum().maxCoeff() * MatrixXd::Identity(n, n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd next = (shifted * v).normalized();
    if ((next - v).norm() < 1e-14) return next;
    v = next;
  }
  return v;
}

}  // namespace

TEST(Closeness, TwoVehiclesAtDistanceFive) {
  const auto c = closeness_centrality(graph_at({0, 1}, {{0, 0}, {5, 0}}, 10.0));
  EXPECT_DOUBLE_EQ(*c[0], 0.2);
  EXPECT_DOUBLE_EQ(*c[1], 0.2);
}

TEST(Closeness, EquilateralTriangle) {
  const double h = 4.0 * std::sqrt(3.0) / 2.0;
  const auto c = closeness_centrality(graph_at({0, 1, 2}, {{0, 0}, {4, 0}, {2, h}}, 10.0));
  for (const auto& v : c) EXPECT_NEAR(*v, 0.25, 1e-15);
}

TEST(Closeness, PathGraphMatchesFloydWarshall) {
  const auto g = graph_at({0, 1, 2, 3}, {{0, 0}, {3, 0}, {7, 0}, {12, 0}}, 6.0);
  const auto d = floyd(g, 60.0);
  const auto c = closeness_centrality(g);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(*c[i], 3.0 / d.row(i).sum(), 1e-15);
}

TEST(Closeness, RandomGraphsWithUnreachablePairsMatchOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 80.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> ids;
    std::vector<Vector2d> pos;
    for (int k = 0; k < 7; ++k) {
      ids.push_back(k);
      pos.emplace_back(u(rng), u(rng) * 0.1);
    }
    const auto g = graph_at(ids, pos, 15.0);
    const auto d = floyd(g, 150.0);
    const auto c = closeness_centrality(g);
    for (int i = 0; i < 7; ++i) EXPECT_NEAR(*c[i], 6.0 / d.row(i).sum(), 1e-14);
  }
}

TEST(Closeness, SingleVehicleIsAbsent) {
  const auto c = closeness_centrality(graph_at({3}, {{0, 0}}, 10.0));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_FALSE(c[0].has_value());
}

TEST(Degree, StaticCompleteNeighborhoodIsConstant) {
  std::vector<graph::TrafficGraph> h;
  for (int t = 0; t < 5; ++t) h.push_back(graph_at({0, 1, 2}, {{0, 0}, {3, 0}, {6, 0}}, 10.0, t));
  for (double v : degree_series(h, 0)) EXPECT_EQ(v, 2.0);
}

TEST(Degree, OvertakingOneNewVehiclePerTick) {
  // Parked vehicles every 20 m; the agent jumps 20 m per tick and only sees
  // the vehicle beside it (mu = 5).
  std::vector<int> ids{0};
  std::vector<Vector2d> pos{{0, 2}};
  for (int k = 1; k <= 6; ++k) {
    ids.push_back(k);
    pos.emplace_back(20.0 * k, 0.0);
  }
  std::vector<graph::TrafficGraph> h;
  for (int t = 1; t <= 6; ++t) {
    pos[0] = Vector2d(20.0 * t, 2.0);
    h.push_back(graph_at(ids, pos, 5.0, t));
  }
  const auto d = degree_series(h, 0);
  for (int t = 0; t < 6; ++t) EXPECT_EQ(d[static_cast<std::size_t>(t)], t + 1.0);
}

TEST(Degree, IsolatedAgentStaysZero) {
  std::vector<graph::TrafficGraph> h;
  for (int t = 0; t < 4; ++t) h.push_back(graph_at({0, 1}, {{0, 0}, {100, 0}}, 10.0, t));
  for (double v : degree_series(h, 0)) EXPECT_EQ(v, 0.0);
}

TEST(Eigenvector, SymmetricPairIsEqual) {
  const auto e = eigenvector_centrality(graph_at({0, 1}, {{0, 0}, {4, 0}}, 10.0));
  EXPECT_NEAR(e(0), e(1), 1e-15);
  EXPECT_NEAR(e.norm(), 1.0, 1e-15);
}

TEST(Eigenvector, StarHubDominates) {
  const auto e = eigenvector_centrality(
      graph_at({0, 1, 2, 3, 4}, {{0, 0}, {4, 0}, {-4, 0}, {0, 4}, {0, -4}}, 5.0));
  for (int k = 1; k < 5; ++k) EXPECT_GT(e(0), e(k));
}

TEST(Eigenvector, ZeroAdjacencyGivesUniformVector) {
  const auto e = eigenvector_centrality(graph_at({0, 1, 2}, {{0, 0}, {50, 0}, {100, 0}}, 10.0));
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(e(k), 1.0 / std::sqrt(3.0));
}

TEST(Eigenvector, RandomGraphsMatchPowerIteration) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  int checked = 0;
  while (checked < 50) {
    std::vector<int> ids;
    std::vector<Vector2d> pos;
    for (int k = 0; k < 5; ++k) {
      ids.push_back(k);
      pos.emplace_back(u(rng), u(rng));
    }
    const auto g = graph_at(ids, pos, 18.0);
    // The Perron vector is unique only on a connected graph.
    const MatrixXd reach = floyd(g, -1.0);
    if ((reach.array() < 0).any()) continue;
    const auto e = eigenvector_centrality(g);
    EXPECT_LT((e - power_iteration(g.adjacency)).norm(), 1e-9);
    const double lambda = e.dot(g.adjacency * e);
    EXPECT_LT((g.adjacency * e - lambda * e).norm(), 1e-8);
    ++checked;
  }
}

TEST(SleSie, ConstantSeriesIsZero) {
  const std::vector<double> f(6, 3.5);
  const auto r = sle_sie(f, 0.1);
  for (double v : r.sle) EXPECT_EQ(v, 0.0);
  for (double v : r.sie) EXPECT_EQ(v, 0.0);
}

TEST(SleSie, LinearRampHasConstantSlope) {
  std::vector<double> f;
  for (int k = 0; k < 7; ++k) f.push_back(2.0 * k);
  const auto r = sle_sie(f, 1.0);
  for (double v : r.sle) EXPECT_DOUBLE_EQ(v, 2.0);
  for (double v : r.sie) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(SleSie, QuadraticHasSecondDifferenceTwo) {
  std::vector<double> f;
  for (int k = 0; k < 8; ++k) f.push_back(double(k) * k);
  const auto r = sle_sie(f, 1.0);
  for (std::size_t k = 1; k + 1 < f.size(); ++k) {
    EXPECT_DOUBLE_EQ(r.sie[k], 2.0);
    EXPECT_DOUBLE_EQ(r.sle[k], 2.0 * k);
  }
}

TEST(SleSie, ShortSeriesRejected) {
  const std::vector<double> f{1.0, 2.0};
  EXPECT_THROW(sle_sie(f, 0.1), std::invalid_argument);
}

TEST(CmetricScalar, ConstantCentralitiesGiveZero) {
  std::vector<graph::TrafficGraph> h;
  for (int t = 0; t < 10; ++t) {
    h.push_back(graph_at({0, 1, 2}, {{5.0 * t, 0}, {5.0 * t + 10, 0}, {5.0 * t + 20, 4}}, 50.0, t));
  }
  const auto p = compute_profile(h, 0, 0.1);
  EXPECT_EQ(cmetric_scalar(p), 0.0);
}

TEST(CmetricScalar, EmptyWindowRejected) {
  BehaviorProfile p;
  EXPECT_THROW(cmetric_scalar(p), std::invalid_argument);
}

TEST(CmetricScalar, OvertakeExceedsLaneKeeping) {
  // Four vehicles in lane 0 at 20 m/s. The keeper holds a fixed offset in
  // lane 1; the overtaker drives at 30 m/s past all of them.
  const double dt = 0.1;
  auto run = [&](double ego_speed) {
    std::vector<graph::TrafficGraph> h;
    for (int t = 0; t < 60; ++t) {
      std::vector<int> ids{0, 1, 2, 3, 4};
      std::vector<Vector2d> pos{{ego_speed * t * dt - 10.0, 4.0}};
      for (int k = 0; k < 4; ++k) pos.emplace_back(20.0 * t * dt + 20.0 * k, 0.0);
      h.push_back(graph_at(ids, pos, 50.0, t));
    }
    return compute_profile(h, 0, dt);
  };
  const auto keep = run(20.0);
  const auto overtake = run(30.0);
  EXPECT_NEAR(cmetric_scalar(keep), 0.0, 1e-12);
  EXPECT_GT(cmetric_scalar(overtake), cmetric_scalar(keep) + 1e-3);
}

TEST(CmetricScalar, DominatedWindowHasSmallerValue) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    BehaviorProfile a, b;
    for (int k = 0; k < 10; ++k) {
      const double base = u(rng);
      b.sle[0].push_back(base);
      a.sle[0].push_back(base + u(rng));
      a.frames.push_back(k);
      b.frames.push_back(k);
    }
    EXPECT_GE(cmetric_scalar(a), cmetric_scalar(b));
  }
}

TEST(Profile, InvariantsOnSimulatedTraffic) {
  sim::ScenarioConfig c;
  c.class_mix = 0.5;
  c.n_vehicles = 18;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    c.seed = seed;
    auto w = sim::spawn_population(c);
    std::vector<graph::TrafficGraph> h, shifted;
    for (int t = 0; t < 80; ++t) {
      h.push_back(graph_of(w));
      auto moved = w;
      for (auto& v : moved.vehicles) {
        v.state.x += 1234.5;
        v.state.y -= 7.25;
      }
      shifted.push_back(graph_of(moved));
      w = sim::step(w, {}, c.tick_dt).world;
    }
    for (int id : {0, 5, 11}) {
      const auto p = compute_profile(h, id, c.tick_dt);
      const auto q = compute_profile(shifted, id, c.tick_dt);
      for (std::size_t k = 1; k < p.zeta_d.size(); ++k) EXPECT_GE(p.zeta_d[k], p.zeta_d[k - 1]);
      for (const auto& series : p.sle)
        for (const auto& v : series) if (v) EXPECT_GE(*v, 0.0);
      for (const auto& series : p.sie)
        for (const auto& v : series) if (v) EXPECT_GE(*v, 0.0);
      for (const auto& v : p.zeta_c) if (v) EXPECT_GE(*v, 0.0);
      EXPECT_EQ(p.zeta_d, q.zeta_d);
      ASSERT_EQ(p.zeta_c.size(), q.zeta_c.size());
      for (std::size_t k = 0; k < p.zeta_c.size(); ++k) {
        EXPECT_NEAR(*p.zeta_c[k], *q.zeta_c[k], 1e-12);
        EXPECT_NEAR(p.zeta_e[k], q.zeta_e[k], 1e-9);
      }
    }
    for (const auto& g : h) {
      if (g.adjacency.isZero(0.0)) continue;
      const auto e = eigenvector_centrality(g);
      EXPECT_NEAR(e.norm(), 1.0, 1e-12);
      const double lambda = e.dot(g.adjacency * e);
      EXPECT_LT((g.adjacency * e - lambda * e).norm(), 1e-8);
    }
  }
}

TEST(Profile, OfflineRecomputationFromCsvMatches) {
  sim::ScenarioConfig c;
  c.class_mix = 0.3;
  auto w = sim::spawn_population(c);
  std::vector<graph::TrafficGraph> live;
  std::vector<sim::TrajectoryRow> rows;
  for (int t = 0; t < 50; ++t) {
    live.push_back(graph_of(w));
    auto r = sim::rows_of(w);
    rows.insert(rows.end(), r.begin(), r.end());
    w = sim::step(w, {}, c.tick_dt).world;
  }
  std::stringstream ss;
  sim::write_trajectory_header(ss);
  sim::write_trajectory_rows(ss, rows);
  const auto offline = graphs_from_rows(sim::read_trajectory_csv(ss));
  ASSERT_EQ(offline.size(), live.size());
  EXPECT_EQ(compute_profile(live, 2, 0.1).zeta_scalar,
            compute_profile(offline, 2, 0.1).zeta_scalar);
}

TEST(Profile, JsonHasAllSeries) {
  std::vector<graph::TrafficGraph> h;
  for (int t = 0; t < 4; ++t) h.push_back(graph_at({0, 1}, {{0, 0}, {5.0 + t, 0}}, 50.0, t));
  const auto j = to_json(compute_profile(h, 0, 0.1));
  for (const char* key : {"zeta_c", "zeta_d", "zeta_e", "sle", "sie", "zeta", "window"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j.at("sle").at("closeness").size(), 4u);
}

TEST(ExpectedFrame, SingleAnnotatorIsMidpoint) {
  EXPECT_DOUBLE_EQ(expected_aggressive_frame({{10}, {12}}), 11.0);
}

TEST(ExpectedFrame, OverlappingIntervalsTally) {
  const AnnotationSet ann{{10, 12}, {12, 14}};
  const auto d = aggressive_frame_distribution(ann);
  EXPECT_EQ(d.counts, (std::vector<double>{1, 1, 2, 1, 1}));
  EXPECT_DOUBLE_EQ(expected_aggressive_frame(ann), 12.0);
}

TEST(ExpectedFrame, PointMass) {
  EXPECT_DOUBLE_EQ(expected_aggressive_frame({{7, 7, 7}, {7, 7, 7}}), 7.0);
}

TEST(ExpectedFrame, InvalidSetsRejected) {
  EXPECT_THROW(expected_aggressive_frame({}), std::invalid_argument);
  EXPECT_THROW(expected_aggressive_frame({{5}, {4}}), std::invalid_argument);
  EXPECT_THROW(expected_aggressive_frame({{5, 6}, {7}}), std::invalid_argument);
}

TEST(ExpectedFrame, RandomSetsMatchBruteForceAndStayInBounds) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> m(1, 8), s(0, 500), len(0, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    AnnotationSet ann;
    const int n = m(rng);
    for (int k = 0; k < n; ++k) {
      const int a = s(rng);
      ann.start.push_back(a);
      ann.end.push_back(a + len(rng));
    }
    const double e = expected_aggressive_frame(ann);
    EXPECT_NEAR(e, oracle::brute_expected_frame(ann), 1e-9);
    EXPECT_GE(e, *std::min_element(ann.start.begin(), ann.start.end()));
    EXPECT_LE(e, *std::max_element(ann.end.begin(), ann.end.end()));
  }
}

TEST(Tde, AbsoluteFrameDifference) {
  BehaviorProfile p;
  p.frames = {9, 10, 11, 12, 13, 14, 15, 16};
  p.sle[0] = {0.1, 0.2, 0.9, 0.3, 0.2, 0.1, 0.1, 0.1};
  EXPECT_DOUBLE_EQ(tde(p, {{10}, {12}}), 0.0);
  p.sle[0] = {0.1, 0.2, 0.3, 0.3, 0.2, 0.1, 0.9, 0.1};
  EXPECT_DOUBLE_EQ(tde(p, {{10}, {12}}), 4.0);
}

TEST(Tde, PeakTieTakesEarliestFrame) {
  BehaviorProfile p;
  p.frames = {0, 1, 2, 3};
  p.sle[0] = {0.5, 0.9, 0.9, 0.1};
  EXPECT_EQ(sle_peak_frame(p), 1);
}

TEST(Tde, ScriptedManeuverEndToEnd) {
  // Two vehicles at 10 m, the agent closes to 8 m at frame 15 and 6 m from
  // frame 16. Closeness 1/d peaks in slope at frame 15:
  //   (1/6 - 1/10) / 0.2 = 1/3.
  // Annotators [14,20] and [13,17] give E[T] = 194/12, so TDE = 7/6.
  std::vector<graph::TrafficGraph> h;
  for (int t = 0; t < 30; ++t) {
    const double d = t <= 14 ? 10.0 : (t == 15 ? 8.0 : 6.0);
    h.push_back(graph_at({0, 1}, {{0, 0}, {d, 0}}, 50.0, t));
  }
  const auto p = compute_profile(h, 1, 0.1);
  EXPECT_EQ(sle_peak_frame(p), 15);
  EXPECT_NEAR(cmetric_scalar(p), 1.0 / 3.0, 1e-12);
  const AnnotationSet ann{{14, 13}, {20, 17}};
  EXPECT_NEAR(expected_aggressive_frame(ann), 194.0 / 12.0, 1e-12);
  EXPECT_NEAR(tde(p, ann), 7.0 / 6.0, 1e-12);
}

TEST(Annotations, CsvParsing) {
  std::stringstream ss("annotator_id,start_frame,end_frame\n1,10,12\n2,12,14\n");
  const auto ann = read_annotations_csv(ss);
  EXPECT_EQ(ann.start, (std::vector<std::int64_t>{10, 12}));
  EXPECT_EQ(ann.end, (std::vector<std::int64_t>{12, 14}));
  std::stringstream bad("annotator_id,start_frame,end_frame\n1,10\n");
  EXPECT_THROW(read_annotations_csv(bad), std::runtime_error);
}
