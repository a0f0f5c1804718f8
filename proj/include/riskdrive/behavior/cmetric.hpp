#pragma once

// Centrality-based behavior profiles.
//
// For each agent three centralities are tracked per tick over a window:
//   closeness   (N-1) / sum of shortest-path distances to the other vertices
//   degree      cumulative number of distinct neighbors since window start
//   eigenvector the agent's entry in the principal eigenvector of A_t
// Their absolute first and second time derivatives give the style
// likelihood (SLE) and intensity (SIE) series. Overspeeding and overtaking
// show up in the closeness dynamics, so the scalar behavior value is the
// peak closeness SLE over the window.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "riskdrive/graph/traffic_graph.hpp"
#include "riskdrive/sim/io.hpp"
#include "riskdrive/sim/world.hpp"

namespace riskdrive::behavior {

inline constexpr double kUnreachableFactor = 10.0;

enum class Centrality : int { closeness = 0, degree = 1, eigenvector = 2 };

/// Tick graph over vehicle positions (x, y).
graph::TrafficGraph graph_of(const sim::World& world, double mu = graph::kDefaultMu);

/// Tick graphs of a trajectory export, one per frame in file order.
std::vector<graph::TrafficGraph> graphs_from_rows(const std::vector<sim::TrajectoryRow>& rows,
                                                  double mu = graph::kDefaultMu);

/// Closeness of every vertex of one tick graph; nullopt when N < 2.
/// Unreachable pairs contribute `unreachable_factor * mu`.
std::vector<std::optional<double>> closeness_centrality(
    const graph::TrafficGraph& g, double unreachable_factor = kUnreachableFactor);

/// Unit-norm principal eigenvector of A with non-negative orientation. A zero
/// matrix yields the uniform vector.
Eigen::VectorXd eigenvector_centrality(const graph::TrafficGraph& g);

/// Series over the ticks of `window` in which the agent is present.
std::vector<std::optional<double>> closeness_series(
    std::span<const graph::TrafficGraph> window, int agent_id,
    double unreachable_factor = kUnreachableFactor);
std::vector<double> degree_series(std::span<const graph::TrafficGraph> window,
                                  int agent_id);
std::vector<double> eigenvector_series(std::span<const graph::TrafficGraph> window,
                                       int agent_id);

struct LikelihoodIntensity {
  std::vector<double> sle;
  std::vector<double> sie;
};

/// |first| and |second| finite differences: central inside, one-sided at the
/// ends. Throws std::invalid_argument for fewer than 3 samples or dt <= 0.
LikelihoodIntensity sle_sie(std::span<const double> series, double dt);

struct BehaviorProfile {
  int agent_id = 0;
  double dt = 0.1;
  std::vector<std::int64_t> frames;
  std::vector<std::optional<double>> zeta_c;
  std::vector<double> zeta_d;
  std::vector<double> zeta_e;
  // Indexed by Centrality. Entries are absent inside runs of fewer than 3
  // defined samples.
  std::array<std::vector<std::optional<double>>, 3> sle;
  std::array<std::vector<std::optional<double>>, 3> sie;
  std::optional<double> zeta_scalar;

  std::int64_t window_begin() const { return frames.empty() ? 0 : frames.front(); }
  std::int64_t window_end() const { return frames.empty() ? 0 : frames.back(); }
};

/// Builds every series for one agent over the window and fills zeta_scalar
/// when it is defined.
BehaviorProfile compute_profile(std::span<const graph::TrafficGraph> window,
                                int agent_id, double dt,
                                double unreachable_factor = kUnreachableFactor);

/// Peak closeness SLE over the window. Throws std::invalid_argument when the
/// window holds no closeness SLE sample.
double cmetric_scalar(const BehaviorProfile& profile);

/// Frame of the closeness SLE peak (earliest on ties).
std::int64_t sle_peak_frame(const BehaviorProfile& profile);

nlohmann::json to_json(const BehaviorProfile& p);

// ---------------------------------------------------------------------------
// Annotation scoring

struct AnnotationSet {
  std::vector<std::int64_t> start;
  std::vector<std::int64_t> end;

  std::size_t annotators() const { return start.size(); }
  void validate() const;
};

/// Frame counters over [min S, max E], normalized to a probability mass.
struct FrameDistribution {
  std::int64_t first_frame = 0;
  std::vector<double> counts;
  std::vector<double> probability;
};

FrameDistribution aggressive_frame_distribution(const AnnotationSet& ann);

/// Expected aggressive frame E[T]. Throws std::invalid_argument for an empty
/// or inconsistent set.
double expected_aggressive_frame(const AnnotationSet& ann);

/// |t_SLE - E[T]| in frames.
double tde(const BehaviorProfile& profile, const AnnotationSet& ann);

/// CSV `annotator_id,start_frame,end_frame` with a header row.
AnnotationSet read_annotations_csv(std::istream& in);
AnnotationSet read_annotations_csv(const std::filesystem::path& path);

}  // namespace riskdrive::behavior
