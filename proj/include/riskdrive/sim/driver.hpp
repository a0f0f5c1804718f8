#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace riskdrive::sim {

inline constexpr double kVehicleLength = 5.0;

enum class DriverClass { conservative, aggressive, external };

std::string_view to_string(DriverClass c);
DriverClass driver_class_from_string(std::string_view s);

struct VehicleState {
  int id = 0;
  double x = 0.0;        // longitudinal position (m)
  double y = 0.0;        // lateral position (m)
  int lane = 0;          // 0 = rightmost
  double v = 0.0;        // speed (m/s), never negative
  double heading = 0.0;  // radians
  DriverClass class_tag = DriverClass::conservative;
};

/// IDM and MOBIL parameters for one driver. Decelerations are positive scalars.
struct DriverParams {
  double v0 = 25.0;
  double time_headway = 1.5;
  double s0 = 2.0;
  double a_max = 1.0;
  double b_comf = 2.0;
  double politeness = 0.5;
  double b_safe = 4.0;
  double delta_a_th = 0.2;

  static DriverParams conservative();
  static DriverParams aggressive();

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

struct IdmResult {
  double acceleration = 0.0;
  bool collision_imminent = false;
};

/// Bumper-to-bumper gap between a follower and its leader.
inline double net_gap(const VehicleState& follower, const VehicleState& leader) {
  return leader.x - follower.x - kVehicleLength;
}

/// Low-level IDM: speed, net gap and approach rate (v - v_leader) when a
/// leader exists.
IdmResult idm_acceleration(double v, const DriverParams& params,
                           std::optional<double> gap,
                           double approach_rate = 0.0);

IdmResult idm_acceleration(const VehicleState& ego, const DriverParams& params,
                           const VehicleState* leader);

/// Desired dynamic gap s*(v, dv).
double desired_gap(double v, double approach_rate, const DriverParams& params);

// ---------------------------------------------------------------------------
// MOBIL

enum class LaneDecision { stay, change_left, change_right };

std::string_view to_string(LaneDecision d);

/// A surrounding vehicle together with the parameters that drive it.
struct Neighbor {
  VehicleState state;
  DriverParams params;
};

/// Leader and follower of one lane relative to the ego vehicle. Absent
/// vehicles are treated as an infinite gap.
struct LaneNeighbors {
  std::optional<Neighbor> leader;
  std::optional<Neighbor> follower;
};

struct MobilNeighborhood {
  LaneNeighbors current;
  std::optional<LaneNeighbors> left;   // nullopt when the lane does not exist
  std::optional<LaneNeighbors> right;  // nullopt when the lane does not exist
};

struct MobilEvaluation {
  bool safe = false;
  double incentive = 0.0;  // left-hand side of the incentive criterion
  double new_follower_acceleration = 0.0;
  bool accepted = false;
};

/// Evaluates a hypothetical change from `current` into `target`.
MobilEvaluation mobil_evaluate(const VehicleState& ego,
                               const DriverParams& params,
                               const LaneNeighbors& current,
                               const LaneNeighbors& target);

/// Safety criterion only (used to gate externally requested lane changes).
bool mobil_safe(const VehicleState& ego, const DriverParams& params,
                const LaneNeighbors& target);

/// Left is evaluated first; the first candidate passing both criteria wins.
LaneDecision mobil_decide(const VehicleState& ego, const DriverParams& params,
                          const MobilNeighborhood& neighborhood);

}  // namespace riskdrive::sim
