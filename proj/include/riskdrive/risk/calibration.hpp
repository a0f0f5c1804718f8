#pragma once

// Affine map from a behavior score to an entropic risk parameter, and
// four-way clustering of risk parameters.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace riskdrive::risk {

inline constexpr double kThetaMin = -5.0;
inline constexpr double kThetaMax = 5.0;

struct TrainingPair {
  double zeta = 0.0;
  double theta = 0.0;
};

struct RiskMapping {
  double beta0 = 0.0;
  double beta1 = 0.0;
  std::vector<TrainingPair> training_pairs;
  double theta_lo = kThetaMin;
  double theta_hi = kThetaMax;
};

struct MappedTheta {
  double theta = 0.0;
  bool clamped = false;
};

/// Ordinary least squares theta ~ beta0 + beta1 zeta. Throws
/// std::invalid_argument with fewer than two pairs, identical zetas, or
/// non-finite values.
RiskMapping fit(const std::vector<TrainingPair>& pairs);

/// beta1 zeta + beta0 without clamping.
double raw_theta(const RiskMapping& m, double zeta);
MappedTheta map_to_theta(const RiskMapping& m, double zeta);

inline constexpr int kClusters = 4;

enum class RiskLabel { very_conservative, conservative, aggressive, very_aggressive };
std::string_view to_string(RiskLabel l);
RiskLabel risk_label_from_string(std::string_view s);

struct RiskClusters {
  // Index c is cluster c; centroids strictly descending, so cluster c has
  // label RiskLabel(c).
  std::array<double, kClusters> centroids{};
  std::array<std::size_t, kClusters> sizes{};
  std::vector<int> assignment;  // per input point
  double inertia = 0.0;

  static RiskLabel label_of(int cluster) { return static_cast<RiskLabel>(cluster); }
  /// Nearest centroid; ties go to the more conservative cluster.
  int nearest(double theta) const;
};

struct ClusterOptions {
  std::uint64_t seed = 0;
  int restarts = 10;
  int max_iterations = 300;
};

/// Lloyd's algorithm with k-means++ seeding, best inertia over the restarts.
/// Throws std::invalid_argument with fewer than 4 distinct values.
RiskClusters cluster(const std::vector<double>& thetas, const ClusterOptions& options = {});

nlohmann::json to_json(const RiskMapping& m);
RiskMapping mapping_from_json(const nlohmann::json& j);
RiskMapping load_mapping(const std::filesystem::path& path);
void save_mapping(const std::filesystem::path& path, const RiskMapping& m);

/// Columns cluster,label,centroid,size.
void write_cluster_report(std::ostream& out, const RiskClusters& c);

}  // namespace riskdrive::risk
