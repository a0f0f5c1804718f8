#include "riskdrive/experiments/merge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "riskdrive/auction/ordering.hpp"

namespace riskdrive::experiments {

void MergeConfig::validate() const {
  if (!(tick_dt > 0.0) || !(plan_dt > 0.0) || !(duration > 0.0)) {
    throw std::invalid_argument("merge: time steps and duration must be > 0");
  }
  if (horizon < 1) throw std::invalid_argument("merge: horizon must be >= 1");
  if (!(zone_length > 0.0) || !(lane_width > 0.0)) {
    throw std::invalid_argument("merge: zone_length and lane_width must be > 0");
  }
  if (!(start_min <= start_max) || !(speed_min <= speed_max) || !(speed_min >= 0.0)) {
    throw std::invalid_argument("merge: start and speed ranges must be ordered");
  }
  if (!(turn_times[0] > 0.0) || !(turn_times[1] > turn_times[0])) {
    throw std::invalid_argument("merge: turn times must be positive and increasing");
  }
  if (sigma0 < 0.0 || sigma_per_speed < 0.0 || !(cost_scale > 0.0) || !(accel_weight > 0.0)) {
    throw std::invalid_argument("merge: bad noise or weights");
  }
}

double behavior_bid(double theta, const std::optional<risk::RiskMapping>& mapping) {
  if (!mapping) return -theta;
  if (mapping->beta1 == 0.0) throw std::invalid_argument("merge: mapping slope is zero");
  return (theta - mapping->beta0) / mapping->beta1;
}

std::array<std::array<double, 2>, 2> merge_initial_state(std::uint64_t seed,
                                                         const MergeConfig& c) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> start(c.start_min, c.start_max);
  std::uniform_real_distribution<double> speed(c.speed_min, c.speed_max);
  std::array<std::array<double, 2>, 2> s{};
  for (auto& agent : s) {
    agent[0] = c.merge_x - start(rng);
    agent[1] = speed(rng);
  }
  return s;
}

double ramp_y(double x, const MergeConfig& c) {
  const double begin = c.merge_x - c.zone_length;
  if (x <= begin) return -c.lane_width;
  if (x >= c.merge_x) return 0.0;
  return -c.lane_width * (c.merge_x - x) / c.zone_length;
}

game::PlanningProblem merge_problem(const std::array<double, 2>& x, const std::array<double, 2>& v,
                                    const std::array<double, 2>& thetas,
                                    const std::array<int, 2>& order, const MergeConfig& c) {
  game::PlanningProblem p;
  p.horizon = c.horizon;
  p.dt = c.plan_dt;
  for (int i = 0; i < 2; ++i) {
    game::AgentModel a;
    a.id = i;
    a.x0 << x[i], 0.0, v[i], 0.0;
    a.theta = thetas[i];
    const bool first = order[0] == i;
    a.v_ref = c.v_cruise + (first ? c.speed_delta : -c.speed_delta);
    a.y_ref = {0.0};
    a.speed_weight = c.cost_scale * c.speed_weight;
    a.lateral_weight = c.cost_scale;
    a.lateral_rate_weight = c.cost_scale;
    a.accel_weight = c.cost_scale * c.accel_weight;
    a.lateral_accel_weight = c.cost_scale;
    a.sigma_long = c.noise_std(a.v_ref);
    a.sigma_lat = 0.0;
    p.agents.push_back(a);
  }
  const double d = c.gap_base + c.time_headway * c.v_cruise;
  for (int owner = 0; owner < 2; ++owner) {
    p.gaps.push_back({owner, order[1], order[0], d, c.cost_scale * c.gap_weight});
  }
  return p;
}

namespace {

struct Plan {
  std::array<double, 2> accel{};
  double risk = 0.0;
  bool fallback = false;
};

Plan solve(const game::PlanningProblem& p) {
  auto g = game::build_game(p);
  auto sol = game::solve_nash(g);
  Plan out;
  if (!sol.ok()) {
    for (auto& th : g.theta) th = 0.0;
    sol = game::solve_nash(g);
    sol.require_ok();
    out.fallback = true;
  }
  const auto x0 = game::stacked_state(p);
  for (int i = 0; i < 2; ++i) out.accel[i] = sol.policy.control(0, i, x0)(0);
  return out;
}

}  // namespace

MergeResult run_merge(double theta_ramp, double theta_main, std::uint64_t seed,
                      const MergeConfig& c, const MergeOptions& opt) {
  c.validate();
  MergeResult r;
  const std::array<double, 2> truth{theta_ramp, theta_main};
  std::array<std::array<double, 2>, 2> beliefs{truth, truth};
  if (opt.beliefs) {
    beliefs = *opt.beliefs;
    beliefs[0][0] = truth[0];
    beliefs[1][1] = truth[1];
  }
  auto init = merge_initial_state(seed, c);
  if (opt.mirror) std::swap(init[0], init[1]);
  std::array<double, 2> x{init[0][0], init[1][0]};
  std::array<double, 2> v{init[0][1], init[1][1]};
  for (int i = 0; i < 2; ++i) r.agents[i].theta = truth[i];

  if (opt.order) {
    r.order = *opt.order;
  } else {
    auction::AuctionInstance inst;
    inst.times = {c.turn_times[0], c.turn_times[1]};
    const bool ramp_nearer = x[0] >= x[1];
    inst.ids = {ramp_nearer ? 0 : 1, ramp_nearer ? 1 : 0};
    for (int i = 0; i < 2; ++i) {
      r.agents[i].bid = behavior_bid(beliefs[i][i], opt.mapping);
      inst.bids.push_back(r.agents[i].bid);
    }
    const auto alloc = auction::allocate(inst);
    r.order = {alloc.order[0], alloc.order[1]};
  }
  r.agents[r.order[0]].slot = 0;
  r.agents[r.order[1]].slot = 1;

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> z(0.0, 1.0);
  const int ticks = static_cast<int>(std::llround(c.duration / c.tick_dt));
  const double zone_begin = c.merge_x - c.zone_length;
  r.min_distance = std::numeric_limits<double>::infinity();
  auto record = [&](int frame) {
    const std::array<double, 2> y{ramp_y(x[0], c), 0.0};
    if (x[0] >= zone_begin && x[1] >= zone_begin) {
      r.min_distance = std::min(r.min_distance, std::hypot(x[0] - x[1], y[0] - y[1]));
    }
    if (!opt.keep_rows) return;
    for (int i = 0; i < 2; ++i) {
      sim::TrajectoryRow row;
      row.frame = frame;
      row.time_s = frame * c.tick_dt;
      row.agent_id = i;
      row.lane = (i == 0 && x[0] < c.merge_x) ? 0 : 1;
      row.x_m = x[i];
      row.y_m = y[i] + c.lane_width;
      row.speed_mps = v[i];
      row.class_tag = sim::DriverClass::external;
      r.rows.push_back(row);
    }
  };
  record(0);
  for (int k = 1; k <= ticks; ++k) {
    std::array<double, 2> a{};
    // Agents sharing a belief vector solve the same game.
    std::array<std::optional<Plan>, 2> plans;
    for (int i = 0; i < 2; ++i) {
      if (i == 1 && beliefs[1] == beliefs[0]) {
        plans[1] = plans[0];
      } else {
        plans[i] = solve(merge_problem(x, v, beliefs[i], r.order, c));
      }
      r.fallback = r.fallback || plans[i]->fallback;
      a[i] = plans[i]->accel[i];
    }
    std::array<double, 2> draw{z(rng), z(rng)};
    if (opt.mirror) std::swap(draw[0], draw[1]);
    for (int i = 0; i < 2; ++i) {
      const double noisy = a[i] + c.noise_std(v[i]) * draw[i];
      const double v_next = std::max(0.0, v[i] + noisy * c.tick_dt);
      x[i] += v_next * c.tick_dt;
      v[i] = v_next;
      if (!r.agents[i].crossing_time && x[i] >= c.merge_x) r.agents[i].crossing_time = k * c.tick_dt;
    }
    record(k);
  }
  const auto& t0 = r.agents[0].crossing_time;
  const auto& t1 = r.agents[1].crossing_time;
  if (t0 && t1) {
    // Same-tick crossings go to the agent further ahead.
    if (*t0 != *t1) r.yielded = *t0 > *t1 ? 0 : 1;
    else r.yielded = x[0] < x[1] ? 0 : 1;
  } else if (t0) {
    r.yielded = 1;
  } else if (t1) {
    r.yielded = 0;
  }
  if (!std::isfinite(r.min_distance)) r.min_distance = std::hypot(x[0] - x[1], ramp_y(x[0], c));
  return r;
}

nlohmann::json to_json(const MergeConfig& c) {
  return {{"merge_x", c.merge_x},           {"zone_length", c.zone_length},
          {"lane_width", c.lane_width},     {"duration", c.duration},
          {"tick_dt", c.tick_dt},           {"v_cruise", c.v_cruise},
          {"speed_delta", c.speed_delta},   {"gap_base", c.gap_base},
          {"time_headway", c.time_headway}, {"gap_weight", c.gap_weight},
          {"sigma0", c.sigma0},             {"sigma_per_speed", c.sigma_per_speed},
          {"start_min", c.start_min},       {"start_max", c.start_max},
          {"speed_min", c.speed_min},       {"speed_max", c.speed_max},
          {"turn_times", c.turn_times},     {"horizon", c.horizon},
          {"plan_dt", c.plan_dt},           {"cost_scale", c.cost_scale},
          {"speed_weight", c.speed_weight}, {"accel_weight", c.accel_weight}};
}

MergeConfig merge_config_from_json(const nlohmann::json& j) {
  MergeConfig c;
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) j.at(k).get_to(field);
  };
  get("merge_x", c.merge_x);
  get("zone_length", c.zone_length);
  get("lane_width", c.lane_width);
  get("duration", c.duration);
  get("tick_dt", c.tick_dt);
  get("v_cruise", c.v_cruise);
  get("speed_delta", c.speed_delta);
  get("gap_base", c.gap_base);
  get("time_headway", c.time_headway);
  get("gap_weight", c.gap_weight);
  get("sigma0", c.sigma0);
  get("sigma_per_speed", c.sigma_per_speed);
  get("start_min", c.start_min);
  get("start_max", c.start_max);
  get("speed_min", c.speed_min);
  get("speed_max", c.speed_max);
  get("turn_times", c.turn_times);
  get("horizon", c.horizon);
  get("plan_dt", c.plan_dt);
  get("cost_scale", c.cost_scale);
  get("speed_weight", c.speed_weight);
  get("accel_weight", c.accel_weight);
  c.validate();
  return c;
}

}  // namespace riskdrive::experiments
