#pragma once

// Game construction for driving agents and the receding-horizon planner.
//
// Every agent is a planar double integrator with state [px, py, vx, vy] and
// control [ax, ay]. Positions are relative to a frame origin chosen by the
// caller (the ego's position at planning time). Noise enters through the
// accelerations, W_t = B diag(sigma_long^2, sigma_lat^2) B' per agent, plus
// an optional lateral position drift.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "riskdrive/game/lq_game.hpp"
#include "riskdrive/sim/world.hpp"

namespace riskdrive::game {

struct AgentModel {
  int id = 0;
  Eigen::Vector4d x0 = Eigen::Vector4d::Zero();
  double theta = 0.0;
  double v_ref = 25.0;
  // Lateral reference per stage t = 0..T; a single entry is held constant.
  std::vector<double> y_ref{0.0};
  double speed_weight = 1.0;
  double lateral_weight = 0.5;
  double lateral_rate_weight = 1.0;
  double accel_weight = 1.0;
  double lateral_accel_weight = 1.0;
  double sigma_long = 0.3;  // acceleration noise std (m/s^2)
  double sigma_lat = 0.3;
  double sigma_drift = 0.0;  // lateral position noise std per step (m)

  double y_ref_at(int t) const;
};

/// Cost weight * (px_leader - px_follower - distance)^2 charged to `owner`.
struct GapTerm {
  int owner = 0;
  int follower = 0;
  int leader = 0;
  double distance = 0.0;
  double weight = 0.0;
};

struct PlanningProblem {
  std::vector<AgentModel> agents;
  std::vector<GapTerm> gaps;  // agent indices, not ids
  int horizon = 10;
  double dt = 0.3;
};

/// Stage costs apply at t = 1..T; the cost of x_0 is not a decision.
LQGame<double> build_game(const PlanningProblem& p);
Eigen::VectorXd stacked_state(const PlanningProblem& p);

struct PlannerConfig {
  double theta = 0.0;
  int horizon = 10;
  double dt = 0.3;
  double v_ref = 40.0;  // desired speed; the ego cruises at cruise_speed()
  double time_headway = 1.2;
  double standstill_gap = 4.0;
  // Multiplies every cost weight; sets how far theta is from breakdown.
  double cost_scale = 0.01;
  double speed_weight = 1.0;
  double lateral_weight = 8.0;
  double lateral_rate_weight = 1.0;
  double gap_weight = 0.5;
  double accel_weight = 1.0;
  double lateral_accel_weight = 1.0;
  double sigma_long = 0.1;
  double sigma_long_per_speed = 0.12;  // acceleration noise grows with speed
  double progress_weight = 0.1;        // on (v_ref - cruise)^2
  double cruise_min = 15.0;
  double sigma_lat = 0.3;
  double sigma_drift = 0.4;
  double perception_range = 80.0;
  // Required risk improvement before leaving the current lane.
  double lane_change_margin = 0.6;
  double a_min = -6.0;
  double a_max = 3.0;

  void validate() const;
};

struct LaneCandidate {
  int lane = 0;
  double risk = 0.0;
  SolveStatus status = SolveStatus::converged;
  bool fallback = false;
  double acceleration = 0.0;
};

struct PlanDecision {
  double acceleration = 0.0;
  sim::LaneDecision lane = sim::LaneDecision::stay;
  int target_lane = 0;
  double risk = 0.0;
  std::vector<LaneCandidate> candidates;
  bool fallback = false;  // some candidate needed the theta = 0 re-solve
  std::vector<std::string> warnings;
};

/// Cruise speed in [cruise_min, v_ref] on a 0.25 m/s grid minimizing
/// progress_weight * (v_ref - m)^2 plus the risk of a solitary ego holding
/// m with speed-dependent noise. Decreases as theta grows.
double cruise_speed(const PlannerConfig& cfg);

/// Game over the ego and the nearest leader of `lane` for a planning
/// snapshot; nullopt when the lane does not exist for the ego.
std::optional<PlanningProblem> lane_problem(const sim::World& world, int ego_id, int lane,
                                            const PlannerConfig& cfg,
                                            const std::map<int, double>& human_thetas);

/// Solves one game per candidate lane (current, left, right), picks the
/// minimum ego risk, and returns the first ego control. A candidate whose
/// solve breaks down is re-solved with every theta set to 0 and flagged.
PlanDecision plan_receding_horizon(const sim::World& world, int ego_id, const PlannerConfig& cfg,
                                   const std::map<int, double>& human_thetas = {});

/// Holds the last decision between re-plans and turns it into controls.
class RecedingHorizonDriver {
 public:
  RecedingHorizonDriver(int ego_id, PlannerConfig cfg, int replan_every = 1);

  sim::ExternalControl control(const sim::World& world,
                               const std::map<int, double>& human_thetas = {});
  const std::optional<PlanDecision>& last() const { return last_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const PlannerConfig& config() const { return cfg_; }
  PlannerConfig& config() { return cfg_; }

 private:
  int ego_id_;
  PlannerConfig cfg_;
  int replan_every_;
  long ticks_ = 0;
  std::optional<PlanDecision> last_;
  std::vector<std::string> warnings_;
};

nlohmann::json to_json(const PlannerConfig& c);
PlannerConfig planner_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PlanDecision& d);

}  // namespace riskdrive::game
