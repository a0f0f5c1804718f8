#pragma once

// Experiment output rows. CSV is long form, one line per metric:
//   record,experiment,seed,grid,metric,value
// where grid is `key=value;key=value` in key order. Reals are written in
// shortest round-trip form, so re-import is bit-exact.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace riskdrive::experiments {

struct MetricRecord {
  std::string experiment;
  std::map<std::string, double> grid;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;  // booleans as 0/1
  std::optional<std::string> cluster_label;

  bool operator==(const MetricRecord&) const = default;
};

/// Metrics that cannot be negative by construction.
bool nonnegative_metric(const std::string& name);
/// Throws std::invalid_argument when a dimensionally non-negative metric is
/// negative or any value is not finite.
void validate(const MetricRecord& r);

inline constexpr const char* kRecordsHeader = "record,experiment,seed,grid,metric,value";

void write_records_csv(std::ostream& out, const std::vector<MetricRecord>& records);
std::vector<MetricRecord> read_records_csv(std::istream& in);

nlohmann::json to_json(const MetricRecord& r);
MetricRecord metric_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<MetricRecord>& records);
std::vector<MetricRecord> records_from_json(const nlohmann::json& j);

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.json`.
void write_records(const std::filesystem::path& dir, const std::string& stem,
                   const std::vector<MetricRecord>& records);

}  // namespace riskdrive::experiments
