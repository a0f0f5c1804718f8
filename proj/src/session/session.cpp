#include "riskdrive/session/session.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace riskdrive::session {

risk::RiskMapping default_mapping() {
  risk::RiskMapping m;
  m.beta0 = 0.34744116130454739;
  m.beta1 = -129.51842856137102;
  return m;
}

std::array<double, risk::kClusters> default_centroids() {
  return {0.25017958296804116, 0.015062467970390014, -0.35673701083355053,
          -0.70878339282738845};
}

SessionConfig::SessionConfig() {
  scenario.tick_dt = 1.0 / 15.0;
  scenario.n_vehicles = 12;
}

int SessionConfig::window_ticks() const {
  return static_cast<int>(std::llround(window_s / scenario.tick_dt));
}

void SessionConfig::validate() const {
  scenario.validate();
  planner.validate();
  if (human_id < 0 || human_id >= scenario.n_vehicles) {
    throw std::invalid_argument("session: human_id must name a spawned vehicle");
  }
  if (ego_id >= scenario.n_vehicles || ego_id == human_id || ego_id < -1) {
    throw std::invalid_argument("session: ego_id must be -1 or another spawned vehicle");
  }
  if (replan_every < 1 || refresh_every < 1) {
    throw std::invalid_argument("session: replan_every and refresh_every must be >= 1");
  }
  if (window_ticks() < 3) throw std::invalid_argument("session: window shorter than 3 ticks");
  if (!(control_accel > 0.0)) throw std::invalid_argument("session: control_accel must be > 0");
  if (!(accel_min < 0.0) || !(accel_max > 0.0)) {
    throw std::invalid_argument("session: bad acceleration bounds");
  }
  if (!std::isfinite(mapping.beta0) || !std::isfinite(mapping.beta1)) {
    throw std::invalid_argument("session: mapping not finite");
  }
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    if (!(centroids[c] < centroids[c - 1])) {
      throw std::invalid_argument("session: centroids must be strictly descending");
    }
  }
}

nlohmann::json to_json(const SessionConfig& c) {
  return {{"scenario", sim::to_json(c.scenario)},
          {"human_id", c.human_id},
          {"ego_id", c.ego_id},
          {"planner", game::to_json(c.planner)},
          {"replan_every", c.replan_every},
          {"window_s", c.window_s},
          {"refresh_every", c.refresh_every},
          {"control_accel", c.control_accel},
          {"accel_min", c.accel_min},
          {"accel_max", c.accel_max},
          {"mapping",
           {{"beta0", c.mapping.beta0},
            {"beta1", c.mapping.beta1},
            {"bounds", {c.mapping.theta_lo, c.mapping.theta_hi}}}},
          {"centroids", c.centroids},
          {"export_dir", c.export_dir.string()}};
}

SessionConfig session_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("session config must be an object");
  SessionConfig c;
  if (j.contains("scenario")) {
    // Keep the session tick rate unless the caller sets one.
    auto s = sim::to_json(c.scenario);
    s.merge_patch(j.at("scenario"));
    c.scenario = sim::scenario_config_from_json(s);
  }
  if (j.contains("planner")) c.planner = game::planner_config_from_json(j.at("planner"));
  if (j.contains("mapping")) {
    auto m = j.at("mapping");
    if (!m.contains("bounds")) m["bounds"] = {risk::kThetaMin, risk::kThetaMax};
    c.mapping = risk::mapping_from_json(m);
  }
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) j.at(k).get_to(field);
  };
  get("human_id", c.human_id);
  get("ego_id", c.ego_id);
  get("replan_every", c.replan_every);
  get("window_s", c.window_s);
  get("refresh_every", c.refresh_every);
  get("control_accel", c.control_accel);
  get("accel_min", c.accel_min);
  get("accel_max", c.accel_max);
  get("centroids", c.centroids);
  if (j.contains("export_dir")) c.export_dir = j.at("export_dir").get<std::string>();
  c.validate();
  return c;
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::accelerate: return "accelerate";
    case Action::brake: return "brake";
    case Action::lane_left: return "lane_left";
    case Action::lane_right: return "lane_right";
  }
  return "?";
}

std::optional<Action> action_from_string(std::string_view s) {
  for (auto a : {Action::accelerate, Action::brake, Action::lane_left, Action::lane_right}) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

Session::Session(std::uint64_t id, SessionConfig config) : id_(id), cfg_(std::move(config)) {
  cfg_.validate();
  world_ = sim::spawn_population(cfg_.scenario);
  world_.find(cfg_.human_id)->state.class_tag = sim::DriverClass::external;
  if (cfg_.ego_id >= 0) {
    world_.find(cfg_.ego_id)->state.class_tag = sim::DriverClass::external;
    ego_.emplace(cfg_.ego_id, cfg_.planner, cfg_.replan_every);
  }
}

const std::vector<std::string>& Session::planner_warnings() const {
  static const std::vector<std::string> none;
  return ego_ ? ego_->warnings() : none;
}

void Session::submit(const Control& c) {
  std::lock_guard lock(pending_mutex_);
  if (c.seq <= last_seq_) {
    throw std::invalid_argument("control seq " + std::to_string(c.seq) + " not above " +
                                std::to_string(last_seq_));
  }
  last_seq_ = c.seq;
  pending_.push_back(c);
}

std::vector<Control> Session::take_pending() {
  std::lock_guard lock(pending_mutex_);
  std::vector<Control> out;
  out.swap(pending_);
  return out;
}

TickReport Session::tick() {
  TickReport report;
  const auto controls = take_pending();
  const sim::Vehicle& human = *world_.find(cfg_.human_id);

  // Longitudinal inputs add up; the last lane input of the tick wins.
  double offset = 0.0;
  std::optional<sim::LaneDecision> lane;
  for (const auto& c : controls) {
    switch (c.action) {
      case Action::accelerate: offset += cfg_.control_accel; break;
      case Action::brake: offset -= cfg_.control_accel; break;
      case Action::lane_left: lane = sim::LaneDecision::change_left; break;
      case Action::lane_right: lane = sim::LaneDecision::change_right; break;
    }
  }
  std::vector<sim::ExternalControl> ext;
  if (offset != 0.0 || lane) {
    sim::ExternalControl hc;
    hc.agent_id = cfg_.human_id;
    if (offset != 0.0) {
      const auto leader = sim::effective_leader(world_, human);
      const double idm =
          sim::idm_acceleration(human.state, human.params, leader ? &leader->state : nullptr)
              .acceleration;
      hc.acceleration = std::clamp(idm + offset, cfg_.accel_min, cfg_.accel_max);
    }
    hc.lane_request = lane;
    ext.push_back(hc);
  }
  if (ego_) {
    std::map<int, double> beliefs;
    if (metrics_.theta) beliefs[cfg_.human_id] = *metrics_.theta;
    ext.push_back(ego_->control(world_, beliefs));
  }

  auto step = sim::step(world_, ext, cfg_.scenario.tick_dt);
  world_ = std::move(step.world);
  ++tick_;
  report.events = std::move(step.events);
  report.tick = tick_;
  report.sim_time = world_.time;

  const auto rows = sim::rows_of(world_);
  rows_.insert(rows_.end(), rows.begin(), rows.end());
  window_.push_back(behavior::graph_of(world_));
  while (window_.size() > static_cast<std::size_t>(cfg_.window_ticks())) window_.pop_front();
  if (tick_ % cfg_.refresh_every == 0) refresh();
  return report;
}

behavior::BehaviorProfile Session::profile() const {
  const std::vector<graph::TrafficGraph> w(window_.begin(), window_.end());
  return behavior::compute_profile(w, cfg_.human_id, cfg_.scenario.tick_dt);
}

void Session::refresh() {
  metrics_.refreshed_at = tick_;
  if (window_.size() < 3) return;
  const auto p = profile();
  metrics_.zeta = p.zeta_scalar;
  const auto& sle = p.sle[static_cast<int>(behavior::Centrality::closeness)];
  const auto& sie = p.sie[static_cast<int>(behavior::Centrality::closeness)];
  metrics_.sle = sle.empty() ? std::nullopt : sle.back();
  metrics_.sie = sie.empty() ? std::nullopt : sie.back();
  zeta_history_.emplace_back(world_.frame, p.zeta_scalar);
  if (p.zeta_scalar) {
    const auto m = risk::map_to_theta(cfg_.mapping, *p.zeta_scalar);
    metrics_.theta = m.theta;
    metrics_.theta_clamped = m.clamped;
    risk::RiskClusters cl;
    cl.centroids = cfg_.centroids;
    metrics_.cluster = risk::RiskClusters::label_of(cl.nearest(m.theta));
  }
}

namespace {

template <class T>
nlohmann::json or_null(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json Session::state_message(const TickReport& report) const {
  nlohmann::json vehicles = nlohmann::json::array();
  for (const auto& v : world_.vehicles) {
    std::string cls(sim::to_string(v.state.class_tag));
    if (v.state.id == cfg_.human_id) cls = "human";
    if (v.state.id == cfg_.ego_id) cls = "ego";
    vehicles.push_back({{"id", v.state.id},
                        {"lane", v.state.lane},
                        {"x_m", v.state.x},
                        {"y_m", v.state.y},
                        {"speed_mps", v.state.v},
                        {"class", cls}});
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : report.events) events.push_back(sim::to_json(e));
  const auto cluster = metrics_.cluster
                           ? nlohmann::json(std::string(risk::to_string(*metrics_.cluster)))
                           : nlohmann::json(nullptr);
  return {{"v", kProtocolVersion},
          {"type", "state"},
          {"session", id_},
          {"tick", report.tick},
          {"sim_time_s", report.sim_time},
          {"vehicles", vehicles},
          {"metrics",
           {{"zeta", or_null(metrics_.zeta)},
            {"theta", or_null(metrics_.theta)},
            {"cluster", cluster},
            {"sle", or_null(metrics_.sle)},
            {"sie", or_null(metrics_.sie)}}},
          {"events", events}};
}

StopResult Session::export_files() const {
  std::filesystem::create_directories(cfg_.export_dir);
  const std::string stem = "session_" + std::to_string(id_);
  StopResult out;
  out.ticks = tick_;
  out.trajectory = cfg_.export_dir / (stem + "_trajectory.csv");
  out.profile = cfg_.export_dir / (stem + "_profile.json");
  sim::write_trajectory_csv(out.trajectory, rows_);

  nlohmann::json j;
  if (window_.empty()) {
    behavior::BehaviorProfile empty;
    empty.agent_id = cfg_.human_id;
    empty.dt = cfg_.scenario.tick_dt;
    j["profile"] = behavior::to_json(empty);
  } else {
    j["profile"] = behavior::to_json(profile());
  }
  j["v"] = kProtocolVersion;
  j["session"] = id_;
  j["ticks"] = tick_;
  j["human_id"] = cfg_.human_id;
  j["theta"] = or_null(metrics_.theta);
  j["cluster"] = metrics_.cluster
                     ? nlohmann::json(std::string(risk::to_string(*metrics_.cluster)))
                     : nlohmann::json(nullptr);
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [frame, z] : zeta_history_) hist.push_back({{"frame", frame}, {"zeta", or_null(z)}});
  j["zeta_history"] = hist;
  std::ofstream f(out.profile);
  if (!f) throw std::runtime_error("cannot write " + out.profile.string());
  f << j.dump(2) << '\n';
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t SessionManager::start(const SessionConfig& config) {
  std::lock_guard lock(mutex_);
  const std::uint64_t id = next_id_;
  sessions_.emplace(id, std::make_shared<Session>(id, config));
  ++next_id_;
  return id;
}

std::shared_ptr<Session> SessionManager::get(std::uint64_t id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw std::out_of_range("unknown session " + std::to_string(id));
  return it->second;
}

StopResult SessionManager::stop(std::uint64_t id) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw std::out_of_range("unknown session " + std::to_string(id));
    s = it->second;
    sessions_.erase(it);
  }
  return s->export_files();
}

std::vector<std::uint64_t> SessionManager::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::uint64_t> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json error_message(std::string_view code, std::string_view message) {
  return {{"v", kProtocolVersion},
          {"type", "error"},
          {"code", std::string(code)},
          {"message", std::string(message)}};
}

std::vector<nlohmann::json> handle_message(SessionManager& manager, std::string_view text,
                                           std::optional<std::uint64_t>* started) {
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    return {error_message("bad_json", e.what())};
  }
  if (!msg.is_object() || !msg.contains("type") || !msg.at("type").is_string()) {
    return {error_message("bad_message", "frame must be an object with a string type")};
  }
  const auto type = msg.at("type").get<std::string>();
  if (type != "start" && type != "control" && type != "stop") {
    return {error_message("unknown_type", "unknown message type " + type)};
  }
  if (!msg.contains("v") || msg.at("v") != kProtocolVersion) {
    return {error_message("bad_version", "expected \"v\": 1")};
  }
  auto session_id = [&]() -> std::optional<std::uint64_t> {
    if (!msg.contains("session") || !msg.at("session").is_number_unsigned()) return std::nullopt;
    return msg.at("session").get<std::uint64_t>();
  };

  if (type == "start") {
    try {
      const auto cfg =
          session_config_from_json(msg.contains("config") ? msg.at("config") : nlohmann::json::object());
      const auto id = manager.start(cfg);
      if (started) *started = id;
      return {{{"v", kProtocolVersion},
               {"type", "started"},
               {"session", id},
               {"human_id", cfg.human_id},
               {"ego_id", cfg.ego_id},
               {"tick_dt", cfg.scenario.tick_dt},
               {"config", to_json(cfg)}}};
    } catch (const std::exception& e) {
      return {error_message("bad_config", e.what())};
    }
  }
  if (type == "control") {
    const auto id = session_id();
    if (!id) return {error_message("bad_message", "control needs a session id")};
    if (!msg.contains("action") || !msg.at("action").is_string()) {
      return {error_message("invalid_control", "control needs an action")};
    }
    const auto action = action_from_string(msg.at("action").get<std::string>());
    if (!action) return {error_message("invalid_control", "unknown action")};
    if (!msg.contains("seq") || !msg.at("seq").is_number_integer()) {
      return {error_message("invalid_control", "control needs an integer seq")};
    }
    std::shared_ptr<Session> s;
    try {
      s = manager.get(*id);
    } catch (const std::out_of_range& e) {
      return {error_message("unknown_session", e.what())};
    }
    try {
      s->submit({*action, msg.at("seq").get<std::int64_t>()});
    } catch (const std::invalid_argument& e) {
      return {error_message("invalid_control", e.what())};
    }
    return {};
  }
  if (type == "stop") {
    const auto id = session_id();
    if (!id) return {error_message("bad_message", "stop needs a session id")};
    try {
      const auto r = manager.stop(*id);
      return {{{"v", kProtocolVersion},
               {"type", "stopped"},
               {"session", *id},
               {"ticks", r.ticks},
               {"trajectory", r.trajectory.string()},
               {"profile", r.profile.string()}}};
    } catch (const std::out_of_range& e) {
      return {error_message("unknown_session", e.what())};
    }
  }
  return {error_message("unknown_type", "unknown message type " + type)};
}

}  // namespace riskdrive::session
