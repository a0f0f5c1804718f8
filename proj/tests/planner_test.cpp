#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "riskdrive/game/planner.hpp"

using namespace riskdrive;
using namespace riskdrive::game;

namespace {

sim::World road(int lanes) {
  sim::World w;
  w.n_lanes = lanes;
  return w;
}

void add(sim::World& w, int id, int lane, double x, double v, bool external = false) {
  sim::Vehicle veh;
  veh.state.id = id;
  veh.state.lane = lane;
  veh.state.x = x;
  veh.state.y = w.lane_center(lane);
  veh.state.v = v;
  veh.params = sim::DriverParams::conservative();
  if (external) veh.state.class_tag = sim::DriverClass::external;
  w.vehicles.push_back(veh);
}

struct Rollout {
  int lane_changes = 0;
  double final_speed = 0.0;
  std::size_t warnings = 0;
};

Rollout drive(sim::World w, const PlannerConfig& cfg, int ticks, int replan_every = 5) {
  RecedingHorizonDriver driver(0, cfg, replan_every);
  Rollout out;
  for (int k = 0; k < ticks; ++k) {
    const std::vector<sim::ExternalControl> c{driver.control(w)};
    auto r = sim::step(w, c, 0.1);
    for (const auto& e : r.events) {
      if (e.agent_id == 0 && e.kind == sim::EventKind::lane_change) ++out.lane_changes;
    }
    w = std::move(r.world);
  }
  out.final_speed = w.find(0)->state.v;
  out.warnings = driver.warnings().size();
  return out;
}

// Hand evaluation of one stage cost for a two-agent problem.
double stage_cost_oracle(const PlanningProblem& p, const Eigen::VectorXd& x, int owner, int t) {
  const auto& a = p.agents[static_cast<std::size_t>(owner)];
  const int o = 4 * owner;
  double c = a.speed_weight * std::pow(x(o + 2) - a.v_ref, 2) +
             a.lateral_weight * std::pow(x(o + 1) - a.y_ref_at(t), 2) +
             a.lateral_rate_weight * std::pow(x(o + 3), 2);
  for (const auto& g : p.gaps) {
    if (g.owner != owner) continue;
    c += g.weight * std::pow(x(4 * g.leader) - x(4 * g.follower) - g.distance, 2);
  }
  return c;
}

}  // namespace

TEST(BuildGame, StageCostsMatchHandEvaluation) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    PlanningProblem p;
    p.horizon = 4;
    for (int i = 0; i < 2; ++i) {
      AgentModel a;
      a.id = i;
      a.v_ref = 20.0 + u(rng);
      a.y_ref = {u(rng), u(rng)};
      a.speed_weight = std::abs(u(rng));
      a.lateral_weight = std::abs(u(rng));
      a.lateral_rate_weight = std::abs(u(rng));
      p.agents.push_back(a);
    }
    p.gaps.push_back({0, 0, 1, 10.0 + u(rng), std::abs(u(rng))});
    p.gaps.push_back({1, 0, 1, 12.0, 0.5});
    const auto g = build_game(p);
    Eigen::VectorXd x(8);
    for (int k = 0; k < 8; ++k) x(k) = 5.0 * u(rng);
    for (int t = 1; t <= p.horizon; ++t) {
      for (int i = 0; i < 2; ++i) {
        const double got = 0.5 * x.dot(g.Q[t][i] * x) + g.l[t][i].dot(x) + g.c[t][i];
        EXPECT_NEAR(got, stage_cost_oracle(p, x, i, t), 1e-9 * (1.0 + std::abs(got)));
      }
    }
    // x_0 is given, not chosen: no stage cost at t = 0.
    EXPECT_TRUE(g.Q[0][0].isZero(0.0));
    EXPECT_TRUE(g.l[0][0].isZero(0.0));
  }
}

TEST(BuildGame, NoiseEntersThroughAccelerationAndDrift) {
  PlanningProblem p;
  p.dt = 0.5;
  AgentModel a;
  a.sigma_long = 0.2;
  a.sigma_lat = 0.3;
  a.sigma_drift = 0.4;
  p.agents.push_back(a);
  const auto g = build_game(p);
  const double h = 0.5 * p.dt * p.dt;
  EXPECT_NEAR(g.W[0](0, 0), h * h * 0.04, 1e-15);
  EXPECT_NEAR(g.W[0](0, 2), h * p.dt * 0.04, 1e-15);
  EXPECT_NEAR(g.W[0](1, 1), h * h * 0.09 + 0.16, 1e-15);
  EXPECT_NEAR(g.W[0](3, 3), p.dt * p.dt * 0.09, 1e-15);
  EXPECT_DOUBLE_EQ(g.W[0](0, 1), 0.0);
}

TEST(BuildGame, RejectsBadGapTerms) {
  PlanningProblem p;
  p.agents.resize(2);
  p.gaps.push_back({0, 1, 1, 5.0, 1.0});
  EXPECT_THROW(build_game(p), std::invalid_argument);
  p.gaps = {{2, 0, 1, 5.0, 1.0}};
  EXPECT_THROW(build_game(p), std::invalid_argument);
}

TEST(LaneProblem, LeaderIncludedOnlyWhenItConstrainsTheEgo) {
  PlannerConfig cfg;
  auto w = road(2);
  add(w, 0, 0, 0.0, 25.0, true);
  add(w, 1, 0, 300.0, 25.0);
  auto p = lane_problem(w, 0, 0, cfg, {});
  ASSERT_TRUE(p);
  EXPECT_EQ(p->agents.size(), 1u);
  EXPECT_TRUE(p->gaps.empty());

  w.vehicles[1].state.x = 30.0;
  p = lane_problem(w, 0, 0, cfg, {{1, -2.0}});
  ASSERT_TRUE(p);
  ASSERT_EQ(p->agents.size(), 2u);
  EXPECT_DOUBLE_EQ(p->agents[1].theta, -2.0);
  EXPECT_DOUBLE_EQ(p->agents[1].x0(0), 30.0);
  ASSERT_EQ(p->gaps.size(), 1u);
  EXPECT_DOUBLE_EQ(p->gaps[0].distance,
                   sim::kVehicleLength + cfg.standstill_gap + cfg.time_headway * 25.0);

  EXPECT_FALSE(lane_problem(w, 0, 2, cfg, {}));
  EXPECT_FALSE(lane_problem(w, 0, -1, cfg, {}));
  EXPECT_THROW(lane_problem(w, 9, 0, cfg, {}), std::invalid_argument);
}

TEST(CruiseSpeed, DecreasesWithThetaWithinBounds) {
  PlannerConfig cfg;
  double prev = cfg.v_ref;
  for (double th = -5.0; th <= 5.0; th += 0.5) {
    cfg.theta = th;
    const double m = cruise_speed(cfg);
    EXPECT_GE(m, cfg.cruise_min);
    EXPECT_LE(m, cfg.v_ref);
    EXPECT_LE(m, prev) << th;
    EXPECT_DOUBLE_EQ(std::fmod(m * 4.0, 1.0), 0.0);
    prev = m;
  }
  cfg.theta = -5.0;
  const double seeking = cruise_speed(cfg);
  cfg.theta = 5.0;
  EXPECT_GT(seeking, cruise_speed(cfg) + 5.0);
}

TEST(CruiseSpeed, NoiselessCruiseIsTheDesiredSpeed) {
  // Without speed noise the risk term is flat in m, so progress decides.
  PlannerConfig cfg;
  cfg.sigma_long_per_speed = 0.0;
  for (double th : {-4.0, 0.0, 4.0}) {
    cfg.theta = th;
    EXPECT_EQ(cruise_speed(cfg), cfg.v_ref);
  }
  cfg.cruise_min = cfg.v_ref + 1.0;
  EXPECT_THROW(cruise_speed(cfg), std::invalid_argument);
}

TEST(Planner, SolitaryEgoConvergesToCruiseSpeed) {
  PlannerConfig cfg;
  auto w = road(3);
  add(w, 0, 1, 0.0, 18.0, true);
  const auto r = drive(w, cfg, 600);
  EXPECT_NEAR(r.final_speed, cruise_speed(cfg), 0.5);
  EXPECT_EQ(r.lane_changes, 0);
  EXPECT_EQ(r.warnings, 0u);
}

TEST(Planner, AverseEgoOnEmptyRoadKeepsItsLane) {
  PlannerConfig cfg;
  cfg.theta = 5.0;
  auto w = road(3);
  add(w, 0, 0, 0.0, 25.0, true);
  EXPECT_EQ(drive(w, cfg, 400).lane_changes, 0);
}

TEST(Planner, SeekingEgoLeavesSlowLeader) {
  PlannerConfig cfg;
  cfg.theta = -3.0;
  auto w = road(2);
  add(w, 0, 0, 0.0, 20.0, true);
  add(w, 1, 0, 25.0, 12.0);
  w.vehicles[1].params.v0 = 12.0;
  const auto d = plan_receding_horizon(w, 0, cfg);
  EXPECT_EQ(d.lane, sim::LaneDecision::change_left);
  EXPECT_EQ(d.target_lane, 1);
  EXPECT_EQ(d.candidates.size(), 2u);
}

TEST(Planner, AccelerationRespectsBoundsAndCarFollowingFloor) {
  PlannerConfig cfg;
  auto w = road(1);
  add(w, 0, 0, 0.0, 30.0, true);
  add(w, 1, 0, 12.0, 5.0);
  const auto d = plan_receding_horizon(w, 0, cfg);
  EXPECT_GE(d.acceleration, cfg.a_min);
  EXPECT_LE(d.acceleration, cfg.a_max);
  sim::DriverParams guard = sim::DriverParams::aggressive();
  guard.v0 = 1e3;
  const auto idm = sim::idm_acceleration(w.vehicles[0].state, guard, &w.vehicles[1].state);
  EXPECT_LE(d.acceleration, std::max(cfg.a_min, idm.acceleration));
}

TEST(Planner, BreakdownFallsBackToNeutralAndWarns) {
  PlannerConfig cfg;
  cfg.theta = 5.0;
  cfg.cost_scale = 1.0;
  auto w = road(2);
  add(w, 0, 0, 0.0, 25.0, true);
  add(w, 1, 0, 30.0, 22.0);
  const auto d = plan_receding_horizon(w, 0, cfg);
  EXPECT_TRUE(d.fallback);
  EXPECT_FALSE(d.warnings.empty());
  EXPECT_TRUE(std::isfinite(d.acceleration));
  EXPECT_TRUE(std::isfinite(d.risk));
  bool flagged = false;
  for (const auto& c : d.candidates) flagged = flagged || (c.fallback && c.status != SolveStatus::converged);
  EXPECT_TRUE(flagged);
}

TEST(Planner, DecisionsAreDeterministic) {
  PlannerConfig cfg;
  cfg.theta = 1.5;
  auto w = road(3);
  add(w, 0, 1, 0.0, 24.0, true);
  add(w, 1, 1, 35.0, 20.0);
  add(w, 2, 2, 10.0, 26.0);
  const auto a = plan_receding_horizon(w, 0, cfg);
  const auto b = plan_receding_horizon(w, 0, cfg);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(RecedingHorizonDriver, LaneRequestsOnlyOnReplanTicks) {
  PlannerConfig cfg;
  auto w = road(2);
  add(w, 0, 0, 0.0, 25.0, true);
  RecedingHorizonDriver driver(0, cfg, 4);
  for (int k = 0; k < 12; ++k) {
    const auto c = driver.control(w);
    EXPECT_EQ(c.lane_request.has_value(), k % 4 == 0) << k;
    EXPECT_TRUE(c.acceleration.has_value());
  }
  EXPECT_THROW(RecedingHorizonDriver(0, cfg, 0), std::invalid_argument);
}

TEST(PlannerConfig, JsonRoundTripAndValidation) {
  PlannerConfig c;
  c.theta = -2.5;
  c.cost_scale = 0.02;
  c.sigma_drift = 0.25;
  c.lane_change_margin = 0.9;
  c.sigma_long_per_speed = 0.05;
  c.progress_weight = 0.3;
  const auto back = planner_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(planner_config_from_json(nlohmann::json::object()).lane_change_margin, 0.6);

  PlannerConfig bad;
  bad.horizon = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = {};
  bad.a_min = 0.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = {};
  bad.sigma_drift = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(planner_config_from_json({{"cost_scale", 0.0}}), std::invalid_argument);
  EXPECT_THROW(planner_config_from_json({{"progress_weight", 0.0}}), std::invalid_argument);
}
