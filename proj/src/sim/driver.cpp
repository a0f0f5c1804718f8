#include "riskdrive/sim/driver.hpp"

#include <cmath>
#include <stdexcept>

namespace riskdrive::sim {

std::string_view to_string(DriverClass c) {
  switch (c) {
    case DriverClass::conservative: return "conservative";
    case DriverClass::aggressive: return "aggressive";
    case DriverClass::external: return "external";
  }
  return "unknown";
}

DriverClass driver_class_from_string(std::string_view s) {
  if (s == "conservative") return DriverClass::conservative;
  if (s == "aggressive") return DriverClass::aggressive;
  if (s == "external") return DriverClass::external;
  throw std::invalid_argument("unknown driver class: " + std::string(s));
}

std::string_view to_string(LaneDecision d) {
  switch (d) {
    case LaneDecision::stay: return "stay";
    case LaneDecision::change_left: return "change_left";
    case LaneDecision::change_right: return "change_right";
  }
  return "unknown";
}

DriverParams DriverParams::conservative() {
  return DriverParams{25.0, 1.5, 2.0, 1.0, 2.0, 0.5, 4.0, 0.2};
}

DriverParams DriverParams::aggressive() {
  return DriverParams{40.0, 0.8, 1.0, 2.5, 4.0, 0.0, 6.0, 0.1};
}

void DriverParams::validate() const {
  if (!(v0 > 0 && time_headway > 0 && s0 > 0 && a_max > 0 && b_comf > 0 &&
        b_safe > 0)) {
    throw std::invalid_argument(
        "driver params: v0, T, s0, a_max, b_comf, b_safe must be positive");
  }
  if (!(politeness >= 0.0 && politeness <= 1.0)) {
    throw std::invalid_argument("driver params: politeness must be in [0,1]");
  }
  if (!(delta_a_th >= 0.0)) {
    throw std::invalid_argument("driver params: delta_a_th must be >= 0");
  }
}

double desired_gap(double v, double approach_rate, const DriverParams& p) {
  return p.s0 + v * p.time_headway +
         v * approach_rate / (2.0 * std::sqrt(p.a_max * p.b_comf));
}

IdmResult idm_acceleration(double v, const DriverParams& p,
                           std::optional<double> gap, double approach_rate) {
  const double speed_ratio = v / p.v0;
  const double free_term = 1.0 - std::pow(speed_ratio, 4);
  if (!gap) return {p.a_max * free_term, false};
  if (*gap <= 0.0) return {-2.0 * p.b_comf, true};
  const double ratio = desired_gap(v, approach_rate, p) / *gap;
  return {p.a_max * (free_term - ratio * ratio), false};
}

IdmResult idm_acceleration(const VehicleState& ego, const DriverParams& params,
                           const VehicleState* leader) {
  if (leader == nullptr) return idm_acceleration(ego.v, params, std::nullopt);
  return idm_acceleration(ego.v, params, net_gap(ego, *leader),
                          ego.v - leader->v);
}

namespace {

IdmResult accel_behind(const Neighbor& follower, const VehicleState* leader) {
  return idm_acceleration(follower.state, follower.params, leader);
}

const VehicleState* state_of(const std::optional<Neighbor>& n) {
  return n ? &n->state : nullptr;
}

}  // namespace

bool mobil_safe(const VehicleState& ego, const DriverParams& params,
                const LaneNeighbors& target) {
  if (target.leader && net_gap(ego, target.leader->state) <= 0.0) return false;
  if (!target.follower) return true;
  const IdmResult after = accel_behind(*target.follower, &ego);
  return !after.collision_imminent && after.acceleration >= -params.b_safe;
}

MobilEvaluation mobil_evaluate(const VehicleState& ego,
                               const DriverParams& params,
                               const LaneNeighbors& current,
                               const LaneNeighbors& target) {
  MobilEvaluation out;

  // Safety: the would-be follower in the target lane must not brake harder
  // than b_safe, and neither body may overlap.
  bool overlap = target.leader && net_gap(ego, target.leader->state) <= 0.0;
  double new_follower_after = 0.0;
  double new_follower_before = 0.0;
  if (target.follower) {
    const IdmResult after = accel_behind(*target.follower, &ego);
    overlap = overlap || after.collision_imminent;
    new_follower_after = after.acceleration;
    new_follower_before =
        accel_behind(*target.follower, state_of(target.leader)).acceleration;
  }
  out.new_follower_acceleration = new_follower_after;
  out.safe = !overlap && new_follower_after >= -params.b_safe;

  const double ego_before =
      idm_acceleration(ego, params, state_of(current.leader)).acceleration;
  const double ego_after =
      idm_acceleration(ego, params, state_of(target.leader)).acceleration;

  double old_follower_before = 0.0;
  double old_follower_after = 0.0;
  if (current.follower) {
    old_follower_before = accel_behind(*current.follower, &ego).acceleration;
    old_follower_after =
        accel_behind(*current.follower, state_of(current.leader)).acceleration;
  }

  out.incentive = ego_after - ego_before +
                  params.politeness * (new_follower_after - new_follower_before +
                                       old_follower_after - old_follower_before);
  out.accepted = out.safe && out.incentive > params.delta_a_th;
  return out;
}

LaneDecision mobil_decide(const VehicleState& ego, const DriverParams& params,
                          const MobilNeighborhood& nb) {
  if (nb.left && mobil_evaluate(ego, params, nb.current, *nb.left).accepted) {
    return LaneDecision::change_left;
  }
  if (nb.right && mobil_evaluate(ego, params, nb.current, *nb.right).accepted) {
    return LaneDecision::change_right;
  }
  return LaneDecision::stay;
}

}  // namespace riskdrive::sim
