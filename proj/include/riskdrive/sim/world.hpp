#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "riskdrive/sim/driver.hpp"

namespace riskdrive::sim {

enum class ScenarioKind { highway, merge };

std::string_view to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(std::string_view s);

struct ScenarioConfig {
  int n_lanes = 3;
  int n_vehicles = 12;
  double lane_width = 4.0;
  double tick_dt = 0.1;
  double duration = 30.0;
  std::uint64_t seed = 1;
  double class_mix = 0.0;  // fraction of aggressive vehicles
  ScenarioKind scenario_kind = ScenarioKind::highway;

  // Road segment used for spawning; vehicles keep driving past its end.
  double spawn_length = 400.0;
  // In merge scenarios lane 0 is an on-ramp that ends at this abscissa.
  double merge_x = 300.0;
  // Duration of the lateral interpolation once a lane change starts.
  double lane_change_duration = 1.0;
  // Bumper gap below which a near-collision event is logged.
  double near_collision_gap = 1.0;

  DriverParams conservative = DriverParams::conservative();
  DriverParams aggressive = DriverParams::aggressive();

  void validate() const;
  int ticks() const;
};

struct Vehicle {
  VehicleState state;
  DriverParams params;
  // Lateral interpolation of an ongoing lane change.
  double lc_from_y = 0.0;
  double lc_progress = 1.0;  // 1 = no lane change in progress

  bool changing_lane() const { return lc_progress < 1.0; }
};

struct World {
  std::int64_t frame = 0;
  double time = 0.0;
  int n_lanes = 3;
  double lane_width = 4.0;
  double lane_change_duration = 1.0;
  double near_collision_gap = 1.0;
  std::optional<double> ramp_end;  // merge scenarios: end of lane 0
  std::vector<Vehicle> vehicles;
  // Pairs (lower id, higher id) currently in contact; used to log
  // collisions and near-collisions once per encounter.
  std::set<std::pair<int, int>> contacts;
  std::set<std::pair<int, int>> overlaps;

  double lane_center(int lane) const { return lane * lane_width; }
  const Vehicle* find(int id) const;
  Vehicle* find(int id);
};

enum class EventKind {
  lane_change,
  rejected_unsafe,
  near_collision,
  collision,
  collision_imminent,
};

std::string_view to_string(EventKind k);

struct Event {
  EventKind kind = EventKind::lane_change;
  std::int64_t frame = 0;
  int agent_id = 0;
  int other_id = -1;
  int from_lane = -1;
  int to_lane = -1;
};

/// Control for an externally driven vehicle (planner or human). Without a
/// control an external vehicle follows its own IDM and never changes lane.
struct ExternalControl {
  int agent_id = 0;
  std::optional<double> acceleration;
  std::optional<LaneDecision> lane_request;
};

struct StepResult {
  World world;
  std::vector<Event> events;
};

/// Spawns a deterministic population. Throws std::invalid_argument when the
/// vehicles do not fit the spawn segment.
World spawn_population(const ScenarioConfig& config);

/// Road capacity of the spawn segment (vehicles).
int road_capacity(const ScenarioConfig& config);

/// Leader/follower of `lane` around position x, excluding `self_id`.
LaneNeighbors lane_neighbors(const World& world, int lane, double x,
                             int self_id);

MobilNeighborhood neighborhood_of(const World& world, const Vehicle& ego);

/// Leader seen by a vehicle, including the virtual obstacle at the end of a
/// merge ramp.
std::optional<Neighbor> effective_leader(const World& world,
                                         const Vehicle& vehicle);

/// One fixed step. Pure in (world, controls, dt).
StepResult step(const World& world, std::span<const ExternalControl> controls,
                double dt);

}  // namespace riskdrive::sim
