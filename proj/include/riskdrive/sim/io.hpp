#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskdrive/sim/world.hpp"

namespace riskdrive::sim {

// Scenario config file: a JSON object
//   {
//     "n_lanes": 3, "n_vehicles": 12, "lane_width": 4.0, "tick_dt": 0.1,
//     "duration": 30.0, "seed": 1, "class_mix": 0.0,
//     "scenario_kind": "highway" | "merge",
//     "spawn_length": 400.0, "merge_x": 300.0,
//     "lane_change_duration": 1.0, "near_collision_gap": 1.0,
//     "conservative": { "v0": 25, "T_headway": 1.5, "s0": 2, "a_max": 1,
//                       "b_comf": 2, "p": 0.5, "b_safe": 4, "delta_a_th": 0.2 },
//     "aggressive":   { ... same keys ... }
//   }
// Every key is optional; missing keys keep their defaults.

nlohmann::json to_json(const DriverParams& p);
DriverParams driver_params_from_json(const nlohmann::json& j,
                                     DriverParams defaults);

nlohmann::json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

nlohmann::json to_json(const Event& e);

// Trajectory CSV, one row per agent per tick:
//   frame,time_s,agent_id,lane,x_m,y_m,speed_mps,class
// Reals are written in shortest round-trip form so re-import is bit-exact.

inline constexpr const char* kTrajectoryHeader =
    "frame,time_s,agent_id,lane,x_m,y_m,speed_mps,class";

struct TrajectoryRow {
  std::int64_t frame = 0;
  double time_s = 0.0;
  int agent_id = 0;
  int lane = 0;
  double x_m = 0.0;
  double y_m = 0.0;
  double speed_mps = 0.0;
  DriverClass class_tag = DriverClass::conservative;

  bool operator==(const TrajectoryRow&) const = default;
};

std::vector<TrajectoryRow> rows_of(const World& world);

void write_trajectory_header(std::ostream& out);
void write_trajectory_rows(std::ostream& out, const std::vector<TrajectoryRow>& rows);
void write_trajectory_csv(const std::filesystem::path& path,
                          const std::vector<TrajectoryRow>& rows);

/// Throws std::runtime_error naming the offending line on malformed input.
std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in);
std::vector<TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path);

std::string format_real(double v);

}  // namespace riskdrive::sim
