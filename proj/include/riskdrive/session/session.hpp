#pragma once

// Live driving sessions: one human-controlled vehicle, an optional
// planner-controlled ego, and a behavior estimate of the human refreshed
// over a sliding window.
//
// Protocol v1 frames are JSON objects carrying "v": 1.
//   client -> server
//     {"v":1,"type":"start","config":{...}}
//     {"v":1,"type":"control","session":id,"action":"accelerate"|"brake"|"lane_left"|"lane_right","seq":n}
//     {"v":1,"type":"stop","session":id}
//   server -> client
//     {"v":1,"type":"started","session":id,"human_id":h,"ego_id":e,"tick_dt":dt,"config":{...}}
//     {"v":1,"type":"state","session":id,"tick":n,"sim_time_s":t,"vehicles":[...],"metrics":{...},"events":[...]}
//     {"v":1,"type":"stopped","session":id,"ticks":n,"trajectory":path,"profile":path}
//     {"v":1,"type":"error","code":c,"message":m}

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskdrive/behavior/cmetric.hpp"
#include "riskdrive/game/planner.hpp"
#include "riskdrive/risk/calibration.hpp"
#include "riskdrive/sim/io.hpp"
#include "riskdrive/sim/world.hpp"

namespace riskdrive::session {

inline constexpr int kProtocolVersion = 1;

/// Mapping and cluster centroids fitted by the kmeans_fit experiment at its
/// default settings.
risk::RiskMapping default_mapping();
std::array<double, risk::kClusters> default_centroids();

struct SessionConfig {
  sim::ScenarioConfig scenario;  // tick_dt defaults to 1/15 s
  int human_id = 0;
  int ego_id = 1;  // -1: no planner-controlled ego
  game::PlannerConfig planner;
  int replan_every = 15;
  double window_s = 5.0;
  int refresh_every = 15;  // ticks between behavior refreshes
  double control_accel = 2.0;  // m/s^2 added to or removed from the human's IDM
  double accel_min = -6.0;
  double accel_max = 3.0;
  risk::RiskMapping mapping = default_mapping();
  std::array<double, risk::kClusters> centroids = default_centroids();
  std::filesystem::path export_dir = "sessions";

  SessionConfig();
  void validate() const;
  int window_ticks() const;
};

nlohmann::json to_json(const SessionConfig& c);
/// Keys: "scenario" (scenario JSON), "planner" (planner JSON), "mapping"
/// ({beta0, beta1, ...}), "centroids" and the scalar fields above.
SessionConfig session_config_from_json(const nlohmann::json& j);

enum class Action { accelerate, brake, lane_left, lane_right };
std::string_view to_string(Action a);
std::optional<Action> action_from_string(std::string_view s);

struct Control {
  Action action = Action::accelerate;
  std::int64_t seq = 0;
};

struct LiveMetrics {
  std::optional<double> zeta;
  std::optional<double> theta;
  bool theta_clamped = false;
  std::optional<risk::RiskLabel> cluster;
  std::optional<double> sle;  // closeness SLE at the newest window sample
  std::optional<double> sie;
  std::int64_t refreshed_at = -1;  // tick of the last refresh
};

struct TickReport {
  std::int64_t tick = 0;
  double sim_time = 0.0;
  std::vector<sim::Event> events;  // includes rejected_unsafe lane requests
};

struct StopResult {
  std::int64_t ticks = 0;
  std::filesystem::path trajectory;
  std::filesystem::path profile;
};

/// Single-threaded world owner. submit() may be called from another thread;
/// every other member must be called from the session loop.
class Session {
 public:
  Session(std::uint64_t id, SessionConfig config);

  std::uint64_t id() const { return id_; }
  const SessionConfig& config() const { return cfg_; }
  const sim::World& world() const { return world_; }
  std::int64_t ticks() const { return tick_; }
  const LiveMetrics& metrics() const { return metrics_; }
  const std::vector<sim::TrajectoryRow>& trajectory() const { return rows_; }
  /// Tick graphs currently in the behavior window, oldest first.
  const std::deque<graph::TrafficGraph>& window() const { return window_; }
  /// Frames of every behavior refresh with the zeta it produced.
  const std::vector<std::pair<std::int64_t, std::optional<double>>>& zeta_history() const {
    return zeta_history_;
  }
  const std::vector<std::string>& planner_warnings() const;

  /// Queues a control for the next tick. Throws std::invalid_argument for a
  /// sequence number not above the last accepted one.
  void submit(const Control& c);

  /// Applies the pending controls, steps the world by tick_dt, updates the
  /// behavior window and, every refresh_every ticks, the live metrics.
  TickReport tick();

  /// Behavior profile of the human over the current window.
  behavior::BehaviorProfile profile() const;

  nlohmann::json state_message(const TickReport& report) const;

  /// Writes <export_dir>/session_<id>_trajectory.csv and _profile.json.
  StopResult export_files() const;

 private:
  std::vector<Control> take_pending();
  void refresh();

  std::uint64_t id_;
  SessionConfig cfg_;
  sim::World world_;
  std::optional<game::RecedingHorizonDriver> ego_;
  std::int64_t tick_ = 0;
  std::vector<sim::TrajectoryRow> rows_;
  std::deque<graph::TrafficGraph> window_;
  LiveMetrics metrics_;
  std::vector<std::pair<std::int64_t, std::optional<double>>> zeta_history_;

  mutable std::mutex pending_mutex_;
  std::vector<Control> pending_;
  std::int64_t last_seq_ = -1;
};

/// Owns every live session; thread-safe.
class SessionManager {
 public:
  std::uint64_t start(const SessionConfig& config);
  /// Throws std::out_of_range for an unknown or stopped id.
  std::shared_ptr<Session> get(std::uint64_t id) const;
  StopResult stop(std::uint64_t id);
  std::vector<std::uint64_t> ids() const;

 private:
  mutable std::mutex mutex_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, std::shared_ptr<Session>> sessions_;
};

/// Replies to one inbound text frame. A start reply is "started", a stop
/// reply "stopped", an accepted control has no reply; anything else is an
/// error frame. `started` receives the id of a session created here.
std::vector<nlohmann::json> handle_message(SessionManager& manager, std::string_view text,
                                           std::optional<std::uint64_t>* started = nullptr);

nlohmann::json error_message(std::string_view code, std::string_view message);

}  // namespace riskdrive::session
