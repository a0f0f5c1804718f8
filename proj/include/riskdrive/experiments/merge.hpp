#pragma once

// Two planner-controlled agents meeting at a merge point: agent 0 on the
// on-ramp, agent 1 on the main lane. Each agent bids its behavior value,
// recovered from its risk parameter through the risk mapping, and the
// ordering auction fixes who crosses first. Equal bids go to the agent
// nearer the merge point. Both agents then re-plan every tick against that
// order; the gap reference of the game encodes it.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskdrive/game/planner.hpp"
#include "riskdrive/risk/calibration.hpp"
#include "riskdrive/sim/io.hpp"

namespace riskdrive::experiments {

struct MergeConfig {
  double merge_x = 0.0;
  double zone_length = 60.0;  // ramp blends into the main lane over this
  double lane_width = 4.0;
  double duration = 20.0;
  double tick_dt = 0.1;
  double v_cruise = 22.0;
  double speed_delta = 3.0;  // first +delta, second -delta
  double gap_base = 8.0;
  double time_headway = 1.0;
  double gap_weight = 1.0;
  double sigma0 = 0.1;           // acceleration noise std at standstill
  double sigma_per_speed = 0.05; // growth per m/s
  double start_min = 85.0;       // distance before the merge point
  double start_max = 95.0;
  double speed_min = 21.0;
  double speed_max = 23.0;
  std::array<double, 2> turn_times{1.0, 2.0};
  int horizon = 12;
  double plan_dt = 0.5;
  double cost_scale = 0.03;
  double speed_weight = 1.0;
  double accel_weight = 1.0;

  void validate() const;
  double noise_std(double speed) const { return sigma0 + sigma_per_speed * std::abs(speed); }
};

struct MergeAgent {
  double theta = 0.0;
  double bid = 0.0;
  int slot = 0;
  std::optional<double> crossing_time;
};

struct MergeResult {
  std::array<MergeAgent, 2> agents;
  std::array<int, 2> order{0, 1};  // slot -> agent
  double min_distance = 0.0;       // over frames where both are in the zone or past it
  std::optional<int> yielded;      // agent that crossed second
  bool fallback = false;
  std::vector<sim::TrajectoryRow> rows;
};

struct MergeOptions {
  // beliefs[i][j]: theta agent i assumes for agent j; defaults to the truth.
  std::optional<std::array<std::array<double, 2>, 2>> beliefs;
  // Skip the auction and impose this order.
  std::optional<std::array<int, 2>> order;
  // Inverts theta into the behavior value each agent bids; without one the
  // bid is -theta, which orders agents like any mapping with beta1 < 0.
  std::optional<risk::RiskMapping> mapping;
  // Swap the initial states and noise streams of the two agents.
  bool mirror = false;
  bool keep_rows = false;
};

/// Behavior value whose mapped risk parameter is `theta`.
double behavior_bid(double theta, const std::optional<risk::RiskMapping>& mapping);

/// Initial [x, v] per agent drawn from `seed`.
std::array<std::array<double, 2>, 2> merge_initial_state(std::uint64_t seed, const MergeConfig& c);

/// Ramp lateral position at abscissa x.
double ramp_y(double x, const MergeConfig& c);

/// Game seen by `planner` when `order` (slot -> agent) is imposed.
game::PlanningProblem merge_problem(const std::array<double, 2>& x, const std::array<double, 2>& v,
                                    const std::array<double, 2>& thetas,
                                    const std::array<int, 2>& order, const MergeConfig& c);

MergeResult run_merge(double theta_ramp, double theta_main, std::uint64_t seed,
                      const MergeConfig& c = {}, const MergeOptions& opt = {});

nlohmann::json to_json(const MergeConfig& c);
MergeConfig merge_config_from_json(const nlohmann::json& j);

}  // namespace riskdrive::experiments
