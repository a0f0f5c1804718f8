#include "riskdrive/game/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace riskdrive::game {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double AgentModel::y_ref_at(int t) const {
  if (y_ref.empty()) return 0.0;
  return y_ref[std::min<std::size_t>(static_cast<std::size_t>(t), y_ref.size() - 1)];
}

namespace {

// weight * (a'x - r)^2 = 1/2 x'(2 w a a')x - 2 w r a'x + w r^2
void add_square(MatrixXd& Q, VectorXd& l, double& c, const VectorXd& a, double r, double w) {
  Q += 2.0 * w * a * a.transpose();
  l -= 2.0 * w * r * a;
  c += w * r * r;
}

VectorXd unit(int n, int k) {
  VectorXd e = VectorXd::Zero(n);
  e(k) = 1.0;
  return e;
}

}  // namespace

LQGame<double> build_game(const PlanningProblem& p) {
  const int N = static_cast<int>(p.agents.size());
  if (N < 1) throw std::invalid_argument("build_game: no agents");
  if (!(p.dt > 0.0)) throw std::invalid_argument("build_game: dt must be > 0");
  const int n = 4 * N;
  const int T = p.horizon;
  auto g = LQGame<double>::zeros(n, std::vector<int>(static_cast<std::size_t>(N), 2), T);
  const double dt = p.dt;
  Eigen::Matrix4d Ai;
  Ai << 1, 0, dt, 0, 0, 1, 0, dt, 0, 0, 1, 0, 0, 0, 0, 1;
  Eigen::Matrix<double, 4, 2> Bi;
  Bi << 0.5 * dt * dt, 0, 0, 0.5 * dt * dt, dt, 0, 0, dt;
  for (int t = 0; t < T; ++t) {
    g.A[t] = MatrixXd::Zero(n, n);
    g.W[t] = MatrixXd::Zero(n, n);
    for (int i = 0; i < N; ++i) {
      const auto& a = p.agents[static_cast<std::size_t>(i)];
      g.A[t].block<4, 4>(4 * i, 4 * i) = Ai;
      g.B[t][i] = MatrixXd::Zero(n, 2);
      g.B[t][i].block<4, 2>(4 * i, 0) = Bi;
      const Eigen::Vector2d var(a.sigma_long * a.sigma_long, a.sigma_lat * a.sigma_lat);
      g.W[t].block<4, 4>(4 * i, 4 * i) = Bi * var.asDiagonal() * Bi.transpose();
      g.W[t](4 * i + 1, 4 * i + 1) += a.sigma_drift * a.sigma_drift;
      g.R[t][i][i] = Eigen::Vector2d(a.accel_weight, a.lateral_accel_weight).asDiagonal();
    }
  }
  for (int i = 0; i < N; ++i) {
    const auto& a = p.agents[static_cast<std::size_t>(i)];
    g.theta[i] = a.theta;
    for (int t = 1; t <= T; ++t) {
      auto& Q = g.Q[t][i];
      auto& l = g.l[t][i];
      auto& c = g.c[t][i];
      add_square(Q, l, c, unit(n, 4 * i + 2), a.v_ref, a.speed_weight);
      add_square(Q, l, c, unit(n, 4 * i + 1), a.y_ref_at(t), a.lateral_weight);
      add_square(Q, l, c, unit(n, 4 * i + 3), 0.0, a.lateral_rate_weight);
    }
  }
  for (const auto& gap : p.gaps) {
    if (gap.owner < 0 || gap.owner >= N || gap.follower < 0 || gap.follower >= N ||
        gap.leader < 0 || gap.leader >= N || gap.follower == gap.leader) {
      throw std::invalid_argument("build_game: bad gap term");
    }
    const VectorXd a = unit(n, 4 * gap.leader) - unit(n, 4 * gap.follower);
    for (int t = 1; t <= T; ++t) {
      add_square(g.Q[t][gap.owner], g.l[t][gap.owner], g.c[t][gap.owner], a, gap.distance,
                 gap.weight);
    }
  }
  return g;
}

VectorXd stacked_state(const PlanningProblem& p) {
  VectorXd x(4 * static_cast<Eigen::Index>(p.agents.size()));
  for (std::size_t i = 0; i < p.agents.size(); ++i) {
    x.segment<4>(4 * static_cast<Eigen::Index>(i)) = p.agents[i].x0;
  }
  return x;
}

void PlannerConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("planner: horizon must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("planner: dt must be > 0");
  if (!(v_ref > 0.0)) throw std::invalid_argument("planner: v_ref must be > 0");
  if (!(cost_scale > 0.0)) throw std::invalid_argument("planner: cost_scale must be > 0");
  if (!(accel_weight > 0.0) || !(lateral_accel_weight > 0.0)) {
    throw std::invalid_argument("planner: control weights must be > 0");
  }
  if (speed_weight < 0 || lateral_weight < 0 || lateral_rate_weight < 0 || gap_weight < 0 ||
      sigma_long < 0 || sigma_long_per_speed < 0 || sigma_lat < 0 || sigma_drift < 0 ||
      lane_change_margin < 0) {
    throw std::invalid_argument("planner: weights and noise must be >= 0");
  }
  if (!(a_min < 0.0) || !(a_max > 0.0)) throw std::invalid_argument("planner: bad accel bounds");
  if (!std::isfinite(theta)) throw std::invalid_argument("planner: theta not finite");
  if (!(progress_weight > 0.0)) throw std::invalid_argument("planner: progress_weight must be > 0");
  if (!(cruise_min > 0.0) || cruise_min > v_ref) {
    throw std::invalid_argument("planner: need 0 < cruise_min <= v_ref");
  }
}

namespace {

double cruise_objective(const PlannerConfig& cfg, double m, double theta) {
  const double k = cfg.cost_scale;
  PlanningProblem p;
  p.horizon = cfg.horizon;
  p.dt = cfg.dt;
  AgentModel a;
  a.x0 << 0.0, 0.0, m, 0.0;
  a.theta = theta;
  a.v_ref = m;
  a.speed_weight = k * cfg.speed_weight;
  a.lateral_weight = k * cfg.lateral_weight;
  a.lateral_rate_weight = k * cfg.lateral_rate_weight;
  a.accel_weight = k * cfg.accel_weight;
  a.lateral_accel_weight = k * cfg.lateral_accel_weight;
  a.sigma_long = cfg.sigma_long + cfg.sigma_long_per_speed * m;
  a.sigma_lat = cfg.sigma_lat;
  a.sigma_drift = cfg.sigma_drift;
  p.agents.push_back(a);
  const auto sol = solve_nash(build_game(p));
  if (!sol.ok()) return std::numeric_limits<double>::infinity();
  return sol.risk(0, stacked_state(p)) + k * cfg.progress_weight * (cfg.v_ref - m) * (cfg.v_ref - m);
}

double search_cruise(const PlannerConfig& cfg, double theta) {
  constexpr double step = 0.25;
  double best = cfg.v_ref;
  double best_j = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(std::floor((cfg.v_ref - cfg.cruise_min) / step + 1e-9));
  for (int i = 0; i <= n; ++i) {
    const double m = cfg.v_ref - step * i;
    const double j = cruise_objective(cfg, m, theta);
    if (j < best_j) {
      best_j = j;
      best = m;
    }
  }
  return best;
}

}  // namespace

double cruise_speed(const PlannerConfig& cfg) {
  cfg.validate();
  const std::string key = to_json(cfg).dump();
  thread_local std::map<std::string, double> memo;
  if (const auto it = memo.find(key); it != memo.end()) return it->second;
  double m = search_cruise(cfg, cfg.theta);
  // Every speed breaks down at this theta: plan with the neutral cruise.
  if (!std::isfinite(cruise_objective(cfg, m, cfg.theta))) m = search_cruise(cfg, 0.0);
  memo.emplace(key, m);
  return m;
}

std::optional<PlanningProblem> lane_problem(const sim::World& world, int ego_id, int lane,
                                            const PlannerConfig& cfg,
                                            const std::map<int, double>& human_thetas) {
  const sim::Vehicle* ego = world.find(ego_id);
  if (ego == nullptr) throw std::invalid_argument("planner: unknown ego id");
  if (lane < 0 || lane >= world.n_lanes) return std::nullopt;
  if (world.ramp_end && lane == 0 && ego->state.lane != 0) return std::nullopt;
  const auto& es = ego->state;
  const double cruise = cruise_speed(cfg);

  PlanningProblem p;
  p.horizon = cfg.horizon;
  p.dt = cfg.dt;
  AgentModel me;
  me.id = es.id;
  me.x0 << 0.0, es.y, es.v, 0.0;
  me.theta = cfg.theta;
  me.v_ref = cruise;
  me.y_ref = {world.lane_center(lane)};
  const double k = cfg.cost_scale;
  me.speed_weight = k * cfg.speed_weight;
  me.lateral_weight = k * cfg.lateral_weight;
  me.lateral_rate_weight = k * cfg.lateral_rate_weight;
  me.accel_weight = k * cfg.accel_weight;
  me.lateral_accel_weight = k * cfg.lateral_accel_weight;
  me.sigma_long = cfg.sigma_long + cfg.sigma_long_per_speed * cruise;
  me.sigma_lat = cfg.sigma_lat;
  me.sigma_drift = cfg.sigma_drift;
  p.agents.push_back(me);

  const auto nb = sim::lane_neighbors(world, lane, es.x, es.id);
  if (nb.leader) {
    const auto& ls = nb.leader->state;
    const double gap = ls.x - es.x;
    const double want = sim::kVehicleLength + cfg.standstill_gap + cfg.time_headway * ls.v;
    // The leader matters once ego at its reference speed would close in on
    // the desired gap within the horizon.
    const double closing = std::max(0.0, cruise - ls.v) * cfg.horizon * cfg.dt;
    if (gap <= cfg.perception_range && gap - closing < want) {
      AgentModel other;
      other.id = ls.id;
      other.x0 << gap, ls.y, ls.v, 0.0;
      const auto th = human_thetas.find(ls.id);
      other.theta = th == human_thetas.end() ? 0.0 : th->second;
      other.v_ref = ls.v;
      other.y_ref = {world.lane_center(ls.lane)};
      other.speed_weight *= k;
      other.lateral_weight *= k;
      other.lateral_rate_weight *= k;
      other.accel_weight *= k;
      other.lateral_accel_weight *= k;
      other.sigma_long = cfg.sigma_long + cfg.sigma_long_per_speed * ls.v;
      other.sigma_lat = cfg.sigma_lat;
      other.sigma_drift = cfg.sigma_drift;
      p.agents.push_back(other);
      p.gaps.push_back({0, 0, 1, want, k * cfg.gap_weight});
    }
  }
  return p;
}

namespace {

LaneCandidate solve_candidate(const PlanningProblem& p, int lane) {
  LaneCandidate c;
  c.lane = lane;
  const auto x0 = stacked_state(p);
  auto g = build_game(p);
  auto sol = solve_nash(g);
  c.status = sol.status;
  if (!sol.ok()) {
    for (auto& th : g.theta) th = 0.0;
    sol = solve_nash(g);
    c.fallback = true;
    sol.require_ok();
  }
  c.risk = sol.risk(0, x0);
  c.acceleration = sol.policy.control(0, 0, x0)(0);
  return c;
}

}  // namespace

PlanDecision plan_receding_horizon(const sim::World& world, int ego_id, const PlannerConfig& cfg,
                                   const std::map<int, double>& human_thetas) {
  cfg.validate();
  const sim::Vehicle* ego = world.find(ego_id);
  if (ego == nullptr) throw std::invalid_argument("planner: unknown ego id");
  const int cur = ego->state.lane;
  PlanDecision d;
  d.target_lane = cur;
  std::vector<int> lanes{cur};
  if (!ego->changing_lane()) {
    lanes.push_back(cur + 1);
    lanes.push_back(cur - 1);
  }
  for (int lane : lanes) {
    const auto p = lane_problem(world, ego_id, lane, cfg, human_thetas);
    if (!p) continue;
    auto c = solve_candidate(*p, lane);
    if (c.fallback) {
      d.fallback = true;
      d.warnings.push_back("lane " + std::to_string(lane) + ": " + to_string(c.status) +
                           ", re-solved with theta = 0");
    }
    d.candidates.push_back(c);
  }
  const LaneCandidate* best = &d.candidates.front();
  for (const auto& c : d.candidates) {
    if (c.lane != cur && c.risk + cfg.lane_change_margin < best->risk) best = &c;
  }
  d.target_lane = best->lane;
  d.risk = best->risk;
  d.lane = best->lane == cur       ? sim::LaneDecision::stay
           : best->lane > cur      ? sim::LaneDecision::change_left
                                   : sim::LaneDecision::change_right;
  d.acceleration = std::clamp(best->acceleration, cfg.a_min, cfg.a_max);
  // Hard floor from car following on the lane actually occupied.
  const auto leader = sim::effective_leader(world, *ego);
  if (leader) {
    sim::DriverParams guard = sim::DriverParams::aggressive();
    guard.v0 = 1e3;
    const auto idm = sim::idm_acceleration(ego->state, guard, &leader->state);
    d.acceleration = std::max(cfg.a_min, std::min(d.acceleration, idm.acceleration));
  }
  return d;
}

RecedingHorizonDriver::RecedingHorizonDriver(int ego_id, PlannerConfig cfg, int replan_every)
    : ego_id_(ego_id), cfg_(std::move(cfg)), replan_every_(replan_every) {
  cfg_.validate();
  if (replan_every_ < 1) throw std::invalid_argument("driver: replan_every must be >= 1");
}

sim::ExternalControl RecedingHorizonDriver::control(const sim::World& world,
                                                    const std::map<int, double>& human_thetas) {
  sim::ExternalControl ctl;
  ctl.agent_id = ego_id_;
  if (ticks_++ % replan_every_ == 0 || !last_) {
    last_ = plan_receding_horizon(world, ego_id_, cfg_, human_thetas);
    for (const auto& w : last_->warnings) warnings_.push_back(w);
    ctl.lane_request = last_->lane;
  }
  ctl.acceleration = last_->acceleration;
  return ctl;
}

nlohmann::json to_json(const PlannerConfig& c) {
  return {{"theta", c.theta},
          {"horizon", c.horizon},
          {"dt", c.dt},
          {"v_ref", c.v_ref},
          {"time_headway", c.time_headway},
          {"standstill_gap", c.standstill_gap},
          {"cost_scale", c.cost_scale},
          {"speed_weight", c.speed_weight},
          {"lateral_weight", c.lateral_weight},
          {"lateral_rate_weight", c.lateral_rate_weight},
          {"gap_weight", c.gap_weight},
          {"accel_weight", c.accel_weight},
          {"lateral_accel_weight", c.lateral_accel_weight},
          {"sigma_long", c.sigma_long},
          {"sigma_long_per_speed", c.sigma_long_per_speed},
          {"progress_weight", c.progress_weight},
          {"cruise_min", c.cruise_min},
          {"sigma_lat", c.sigma_lat},
          {"sigma_drift", c.sigma_drift},
          {"perception_range", c.perception_range},
          {"lane_change_margin", c.lane_change_margin},
          {"a_min", c.a_min},
          {"a_max", c.a_max}};
}

PlannerConfig planner_config_from_json(const nlohmann::json& j) {
  PlannerConfig c;
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) j.at(k).get_to(field);
  };
  get("theta", c.theta);
  get("horizon", c.horizon);
  get("dt", c.dt);
  get("v_ref", c.v_ref);
  get("time_headway", c.time_headway);
  get("standstill_gap", c.standstill_gap);
  get("cost_scale", c.cost_scale);
  get("speed_weight", c.speed_weight);
  get("lateral_weight", c.lateral_weight);
  get("lateral_rate_weight", c.lateral_rate_weight);
  get("gap_weight", c.gap_weight);
  get("accel_weight", c.accel_weight);
  get("lateral_accel_weight", c.lateral_accel_weight);
  get("sigma_long", c.sigma_long);
  get("sigma_long_per_speed", c.sigma_long_per_speed);
  get("progress_weight", c.progress_weight);
  get("cruise_min", c.cruise_min);
  get("sigma_lat", c.sigma_lat);
  get("sigma_drift", c.sigma_drift);
  get("perception_range", c.perception_range);
  get("lane_change_margin", c.lane_change_margin);
  get("a_min", c.a_min);
  get("a_max", c.a_max);
  c.validate();
  return c;
}

nlohmann::json to_json(const PlanDecision& d) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : d.candidates) {
    cands.push_back({{"lane", c.lane},
                     {"risk", c.risk},
                     {"status", to_string(c.status)},
                     {"fallback", c.fallback},
                     {"acceleration", c.acceleration}});
  }
  return {{"acceleration", d.acceleration},
          {"lane", sim::to_string(d.lane)},
          {"target_lane", d.target_lane},
          {"risk", d.risk},
          {"fallback", d.fallback},
          {"candidates", cands},
          {"warnings", d.warnings}};
}

}  // namespace riskdrive::game
