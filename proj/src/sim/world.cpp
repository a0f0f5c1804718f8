#include "riskdrive/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace riskdrive::sim {

namespace {

constexpr double kSlotLength = 25.0;
constexpr double kRampClearance = 50.0;

}  // namespace

std::string_view to_string(ScenarioKind k) {
  return k == ScenarioKind::merge ? "merge" : "highway";
}

ScenarioKind scenario_kind_from_string(std::string_view s) {
  if (s == "highway") return ScenarioKind::highway;
  if (s == "merge") return ScenarioKind::merge;
  throw std::invalid_argument("unknown scenario kind: " + std::string(s));
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::lane_change: return "lane_change";
    case EventKind::rejected_unsafe: return "rejected_unsafe";
    case EventKind::near_collision: return "near_collision";
    case EventKind::collision: return "collision";
    case EventKind::collision_imminent: return "collision_imminent";
  }
  return "unknown";
}

void ScenarioConfig::validate() const {
  if (n_lanes < 1) throw std::invalid_argument("scenario: n_lanes must be >= 1");
  if (n_vehicles < 0) {
    throw std::invalid_argument("scenario: n_vehicles must be >= 0");
  }
  if (!(tick_dt > 0.0)) throw std::invalid_argument("scenario: tick_dt must be > 0");
  if (!(class_mix >= 0.0 && class_mix <= 1.0)) {
    throw std::invalid_argument("scenario: class_mix must be in [0,1]");
  }
  if (!(lane_width > 0.0) || !(duration >= 0.0) || !(spawn_length > 0.0)) {
    throw std::invalid_argument("scenario: lane_width, duration, spawn_length");
  }
  if (scenario_kind == ScenarioKind::merge && n_lanes < 2) {
    throw std::invalid_argument("scenario: merge needs at least 2 lanes");
  }
  conservative.validate();
  aggressive.validate();
}

int ScenarioConfig::ticks() const {
  return static_cast<int>(std::llround(duration / tick_dt));
}

const Vehicle* World::find(int id) const {
  for (const auto& v : vehicles) {
    if (v.state.id == id) return &v;
  }
  return nullptr;
}

Vehicle* World::find(int id) {
  for (auto& v : vehicles) {
    if (v.state.id == id) return &v;
  }
  return nullptr;
}

int road_capacity(const ScenarioConfig& c) {
  const int per_lane = static_cast<int>(c.spawn_length / kSlotLength);
  if (c.scenario_kind == ScenarioKind::highway) return per_lane * c.n_lanes;
  const double ramp_len = std::min(c.spawn_length, c.merge_x - kRampClearance);
  const int ramp_slots =
      ramp_len > 0 ? static_cast<int>(ramp_len / kSlotLength) : 0;
  return per_lane * (c.n_lanes - 1) + ramp_slots;
}

World spawn_population(const ScenarioConfig& config) {
  config.validate();
  if (config.n_vehicles > road_capacity(config)) {
    throw std::invalid_argument("scenario: " +
                                std::to_string(config.n_vehicles) +
                                " vehicles exceed road capacity " +
                                std::to_string(road_capacity(config)));
  }

  std::mt19937_64 rng(config.seed);

  struct Slot {
    int lane;
    double x;
  };
  std::vector<Slot> slots;
  const int per_lane = static_cast<int>(config.spawn_length / kSlotLength);
  for (int lane = 0; lane < config.n_lanes; ++lane) {
    int n = per_lane;
    if (config.scenario_kind == ScenarioKind::merge && lane == 0) {
      const double ramp_len =
          std::min(config.spawn_length, config.merge_x - kRampClearance);
      n = ramp_len > 0 ? static_cast<int>(ramp_len / kSlotLength) : 0;
    }
    for (int k = 0; k < n; ++k) slots.push_back({lane, k * kSlotLength});
  }
  std::shuffle(slots.begin(), slots.end(), rng);
  slots.resize(static_cast<std::size_t>(config.n_vehicles));
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    return a.x != b.x ? a.x < b.x : a.lane < b.lane;
  });

  const int n_aggressive =
      static_cast<int>(std::llround(config.class_mix * config.n_vehicles));
  std::vector<int> order(slots.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> aggressive(slots.size(), false);
  for (int k = 0; k < n_aggressive; ++k) {
    aggressive[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
  }

  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  std::uniform_real_distribution<double> offset(0.0, 5.0);
  std::uniform_real_distribution<double> speed(20.0, 23.0);

  World world;
  world.n_lanes = config.n_lanes;
  world.lane_width = config.lane_width;
  world.lane_change_duration = config.lane_change_duration;
  world.near_collision_gap = config.near_collision_gap;
  if (config.scenario_kind == ScenarioKind::merge) world.ramp_end = config.merge_x;

  for (std::size_t k = 0; k < slots.size(); ++k) {
    Vehicle veh;
    if (aggressive[k]) {
      veh.params = config.aggressive;
      veh.state.class_tag = DriverClass::aggressive;
    } else {
      veh.params = config.conservative;
      veh.params.v0 = config.conservative.v0 * jitter(rng);
      veh.state.class_tag = DriverClass::conservative;
    }
    veh.state.id = static_cast<int>(k);
    veh.state.lane = slots[k].lane;
    veh.state.x = slots[k].x + offset(rng);
    veh.state.y = world.lane_center(slots[k].lane);
    veh.state.v = std::min(veh.params.v0, speed(rng));
    veh.lc_from_y = veh.state.y;
    world.vehicles.push_back(veh);
  }
  return world;
}

LaneNeighbors lane_neighbors(const World& world, int lane, double x,
                             int self_id) {
  LaneNeighbors out;
  const Vehicle* leader = nullptr;
  const Vehicle* follower = nullptr;
  for (const auto& v : world.vehicles) {
    if (v.state.id == self_id || v.state.lane != lane) continue;
    if (v.state.x >= x) {
      if (!leader || v.state.x < leader->state.x) leader = &v;
    } else if (!follower || v.state.x > follower->state.x) {
      follower = &v;
    }
  }
  if (leader) out.leader = Neighbor{leader->state, leader->params};
  if (follower) out.follower = Neighbor{follower->state, follower->params};
  if (lane == 0 && world.ramp_end && x < *world.ramp_end) {
    // End of the on-ramp acts as a stopped vehicle.
    VehicleState wall;
    wall.id = -1;
    wall.lane = 0;
    wall.x = *world.ramp_end + kVehicleLength;
    wall.v = 0.0;
    if (!out.leader || wall.x < out.leader->state.x) {
      out.leader = Neighbor{wall, DriverParams::conservative()};
    }
  }
  return out;
}

std::optional<Neighbor> effective_leader(const World& world,
                                         const Vehicle& vehicle) {
  return lane_neighbors(world, vehicle.state.lane, vehicle.state.x,
                        vehicle.state.id)
      .leader;
}

MobilNeighborhood neighborhood_of(const World& world, const Vehicle& ego) {
  MobilNeighborhood nb;
  const auto& s = ego.state;
  nb.current = lane_neighbors(world, s.lane, s.x, s.id);
  if (s.lane + 1 < world.n_lanes) {
    nb.left = lane_neighbors(world, s.lane + 1, s.x, s.id);
  }
  // Main-road vehicles never enter the on-ramp.
  const bool right_allowed = s.lane - 1 >= 0 && !(world.ramp_end && s.lane - 1 == 0);
  if (right_allowed) nb.right = lane_neighbors(world, s.lane - 1, s.x, s.id);
  return nb;
}

namespace {

const ExternalControl* control_for(std::span<const ExternalControl> controls,
                                   int id) {
  const ExternalControl* found = nullptr;
  for (const auto& c : controls) {
    if (c.agent_id == id) found = &c;
  }
  return found;
}

void start_lane_change(Vehicle& v, int target_lane) {
  v.lc_from_y = v.state.y;
  v.lc_progress = 0.0;
  v.state.lane = target_lane;
}

}  // namespace

StepResult step(const World& world, std::span<const ExternalControl> controls,
                double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");

  StepResult result;
  World& next = result.world;
  next = world;
  next.frame = world.frame + 1;
  next.time = static_cast<double>(next.frame) * dt;
  auto& events = result.events;

  // Longitudinal accelerations from the start-of-tick state.
  std::vector<double> accel(world.vehicles.size(), 0.0);
  for (std::size_t k = 0; k < world.vehicles.size(); ++k) {
    const Vehicle& veh = world.vehicles[k];
    const ExternalControl* ctl = control_for(controls, veh.state.id);
    if (veh.state.class_tag == DriverClass::external && ctl && ctl->acceleration) {
      accel[k] = *ctl->acceleration;
      continue;
    }
    const auto leader = effective_leader(world, veh);
    const IdmResult r = idm_acceleration(
        veh.state, veh.params, leader ? &leader->state : nullptr);
    accel[k] = r.acceleration;
    if (r.collision_imminent) {
      events.push_back({EventKind::collision_imminent, next.frame, veh.state.id,
                        leader ? leader->state.id : -1, -1, -1});
    }
  }

  // Lane decisions, sequential in vehicle order against the working world so
  // that every executed change is safe with respect to earlier ones.
  for (auto& veh : next.vehicles) {
    if (veh.changing_lane()) continue;
    const int from = veh.state.lane;
    if (veh.state.class_tag == DriverClass::external) {
      const ExternalControl* ctl = control_for(controls, veh.state.id);
      if (!ctl || !ctl->lane_request ||
          *ctl->lane_request == LaneDecision::stay) {
        continue;
      }
      const MobilNeighborhood nb = neighborhood_of(next, veh);
      const bool left = *ctl->lane_request == LaneDecision::change_left;
      const auto& target = left ? nb.left : nb.right;
      if (target && mobil_safe(veh.state, veh.params, *target)) {
        start_lane_change(veh, left ? from + 1 : from - 1);
        events.push_back({EventKind::lane_change, next.frame, veh.state.id, -1,
                          from, veh.state.lane});
      } else {
        events.push_back({EventKind::rejected_unsafe, next.frame, veh.state.id,
                          -1, from, left ? from + 1 : from - 1});
      }
      continue;
    }
    const MobilNeighborhood nb = neighborhood_of(next, veh);
    const LaneDecision d = mobil_decide(veh.state, veh.params, nb);
    if (d == LaneDecision::stay) continue;
    start_lane_change(veh, d == LaneDecision::change_left ? from + 1 : from - 1);
    events.push_back({EventKind::lane_change, next.frame, veh.state.id, -1, from,
                      veh.state.lane});
  }

  // Semi-implicit Euler.
  for (std::size_t k = 0; k < next.vehicles.size(); ++k) {
    auto& veh = next.vehicles[k];
    veh.state.v = std::max(0.0, veh.state.v + accel[k] * dt);
    veh.state.x += veh.state.v * dt;
    const double target_y = next.lane_center(veh.state.lane);
    if (veh.changing_lane()) {
      veh.lc_progress += dt / next.lane_change_duration;
      if (veh.lc_progress > 1.0 - 1e-9) veh.lc_progress = 1.0;
      veh.state.y = veh.lc_from_y + (target_y - veh.lc_from_y) * veh.lc_progress;
      veh.state.heading =
          veh.lc_progress < 1.0
              ? std::atan2((target_y - veh.lc_from_y) / next.lane_change_duration,
                           std::max(veh.state.v, 1e-6))
              : 0.0;
    } else {
      veh.state.y = target_y;
      veh.state.heading = 0.0;
    }
  }

  // Contacts per lane; each encounter is logged once per severity.
  std::set<std::pair<int, int>> contacts;
  std::set<std::pair<int, int>> overlaps;
  for (std::size_t a = 0; a < next.vehicles.size(); ++a) {
    for (std::size_t b = a + 1; b < next.vehicles.size(); ++b) {
      const auto& va = next.vehicles[a].state;
      const auto& vb = next.vehicles[b].state;
      if (va.lane != vb.lane) continue;
      const double gap = std::abs(va.x - vb.x) - kVehicleLength;
      if (gap >= next.near_collision_gap) continue;
      const std::pair<int, int> key{std::min(va.id, vb.id), std::max(va.id, vb.id)};
      contacts.insert(key);
      if (!world.contacts.contains(key)) {
        events.push_back({EventKind::near_collision, next.frame, key.first,
                          key.second, va.lane, va.lane});
      }
      if (gap < 0.0) {
        overlaps.insert(key);
        if (!world.overlaps.contains(key)) {
          events.push_back({EventKind::collision, next.frame, key.first,
                            key.second, va.lane, va.lane});
        }
      }
    }
  }
  next.contacts = std::move(contacts);
  next.overlaps = std::move(overlaps);
  return result;
}

}  // namespace riskdrive::sim
