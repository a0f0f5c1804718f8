#pragma once

// Experiment suite. Each study returns its per-run records, the assertions
// it checks, and a JSON summary; the CLI writes all three.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskdrive/experiments/merge.hpp"
#include "riskdrive/experiments/records.hpp"
#include "riskdrive/experiments/stats.hpp"
#include "riskdrive/game/planner.hpp"
#include "riskdrive/graph/traffic_graph.hpp"
#include "riskdrive/risk/calibration.hpp"
#include "riskdrive/sim/world.hpp"

namespace riskdrive::experiments {

enum class ExperimentName {
  lane_changes,
  merge_distance,
  merge_yield,
  kmeans_fit,
  baseline_error,
  user_study_pair,
  tde_eval,
};

std::string_view to_string(ExperimentName n);
ExperimentName experiment_name_from_string(std::string_view s);

std::vector<std::uint64_t> seed_range(std::uint64_t first, int count);

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct StudyResult {
  std::string experiment;
  std::vector<MetricRecord> records;
  std::vector<Assertion> assertions;
  nlohmann::json summary = nlohmann::json::object();

  bool passed() const;
};

nlohmann::json to_json(const Assertion& a);
nlohmann::json to_json(const StudyResult& r);

// ---------------------------------------------------------------------------
// Highway episodes with a planner-controlled ego

struct EpisodeOptions {
  bool keep_rows = false;
  bool keep_graphs = false;
  double mu = graph::kDefaultMu;
};

struct Episode {
  int ego_id = 0;
  int lane_changes = 0;
  int overtakes = 0;  // other vehicles the ego moved from behind to ahead of
  int fallbacks = 0;  // planner re-solves at theta = 0
  double max_speed = 0.0;
  std::vector<sim::TrajectoryRow> rows;
  std::vector<graph::TrafficGraph> graphs;  // one per frame, frame 0 first
};

/// The first spawned vehicle becomes the planner-controlled ego.
Episode run_planner_episode(const sim::ScenarioConfig& scenario, const game::PlannerConfig& planner,
                            int replan_every, const EpisodeOptions& opt = {});

sim::ScenarioConfig default_highway();

struct LaneChangeConfig {
  std::vector<double> thetas{-3.0, 3.0};
  std::vector<std::uint64_t> seeds = seed_range(1, 20);
  sim::ScenarioConfig scenario = default_highway();
  game::PlannerConfig planner;
  int replan_every = 5;
};

StudyResult lane_change_study(const LaneChangeConfig& cfg);

// ---------------------------------------------------------------------------
// Merge matrix (agent a on the ramp, agent b on the main lane)

struct MergeMatrixConfig {
  std::vector<double> thetas_a{-3.0, 3.0};
  std::vector<double> thetas_b{-3.0, 3.0};
  std::vector<std::uint64_t> seeds = seed_range(1, 20);
  MergeConfig merge;
};

std::vector<MetricRecord> run_merge_matrix(const MergeMatrixConfig& cfg);
StudyResult merge_distance_study(const MergeMatrixConfig& cfg);
StudyResult merge_yield_study(const MergeMatrixConfig& cfg);

// ---------------------------------------------------------------------------
// Behavior-aware versus neutral modeling of the human

struct BaselineConfig {
  std::vector<double> thetas_human{-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0};
  std::vector<std::uint64_t> seeds = seed_range(1, 20);
  double theta_ego = 0.0;
  MergeConfig merge;
  double zero_tolerance = 1e-3;  // m
  double monotone_fraction = 0.8;
};

/// |min distance when the ego models the human's theta - min distance when
/// it assumes theta = 0|. The ego is the ramp agent and crosses first.
double baseline_error(double theta_human, std::uint64_t seed, const BaselineConfig& cfg);
StudyResult baseline_error_study(const BaselineConfig& cfg);

// ---------------------------------------------------------------------------
// Training data, regression and clustering

struct TrainingConfig {
  std::vector<double> thetas;  // default: -5 to 5 in unit steps
  std::vector<int> lanes{2, 3, 4};
  std::vector<int> vehicles_per_lane{6, 8, 10};
  int seeds_per_cell = 4;
  std::uint64_t base_seed = 1000;
  double duration = 30.0;
  double window_s = 5.0;
  double class_mix = 0.3;
  game::PlannerConfig planner;
  int replan_every = 5;

  TrainingConfig();
};

/// Mean over consecutive full windows of the ego's scalar behavior value;
/// windows without a value are skipped. nullopt when none has one.
std::optional<double> mean_window_zeta(const std::vector<graph::TrafficGraph>& graphs, int agent_id,
                                       double dt, double window_s);

struct TrainingSet {
  std::vector<risk::TrainingPair> pairs;
  std::vector<MetricRecord> records;
};

TrainingSet generate_training_set(const TrainingConfig& cfg);
StudyResult kmeans_fit_study(const TrainingConfig& cfg, risk::RiskMapping* fitted = nullptr,
                             risk::RiskClusters* clusters = nullptr);

// ---------------------------------------------------------------------------
// User-study trajectory pair

struct UserStudyConfig {
  double theta_seeking = -2.429;
  double theta_averse = 3.651;
  sim::ScenarioConfig scenario = default_highway();
  game::PlannerConfig planner;
  int replan_every = 5;
};

struct UserStudyPair {
  Episode seeking;
  Episode averse;
  nlohmann::json metadata;
};

UserStudyPair make_user_study_pair(const UserStudyConfig& cfg);
/// Writes seeking.csv, averse.csv and metadata.json under `dir`.
void export_user_study_pair(const UserStudyPair& pair, const std::filesystem::path& dir);
StudyResult user_study_study(const UserStudyConfig& cfg, const std::optional<std::filesystem::path>& out);

// ---------------------------------------------------------------------------
// TDE on scripted overtakes

struct TdeConfig {
  std::vector<std::uint64_t> seeds = seed_range(1, 20);
  int annotators = 5;
  int jitter_frames = 5;  // annotator start/end noise, uniform in [-j, j]
  double window_s = 8.0;
};

struct ScriptedOvertake {
  std::vector<graph::TrafficGraph> graphs;
  int agent_id = 0;
  double dt = 0.1;
  std::int64_t maneuver_start = 0;
  std::int64_t maneuver_end = 0;
};

/// A human vehicle that accelerates, pulls out, passes a slower car and
/// cuts back in; frames of the maneuver are returned with the graphs.
ScriptedOvertake scripted_overtake(std::uint64_t seed);
StudyResult tde_study(const TdeConfig& cfg);

// ---------------------------------------------------------------------------

struct ExperimentSpec {
  ExperimentName name = ExperimentName::lane_changes;
  std::vector<std::uint64_t> seeds = seed_range(1, 20);
  nlohmann::json config = nlohmann::json::object();  // study-specific overrides
  std::optional<std::filesystem::path> out;
};

/// Runs one study from a spec; `config` keys follow the study's config struct.
StudyResult run_experiment(const ExperimentSpec& spec);

}  // namespace riskdrive::experiments
