#include "riskdrive/experiments/records.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "riskdrive/sim/io.hpp"

namespace riskdrive::experiments {

namespace {

constexpr const char* kLabelMetric = "cluster_label";

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(",;=\n\r\"") != std::string::npos) {
    throw std::invalid_argument(std::string("records: bad ") + what + " '" + s + "'");
  }
}

template <class T>
T parse(std::string_view s, std::size_t line) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("records: line " + std::to_string(line) + ": cannot parse '" +
                             std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

bool nonnegative_metric(const std::string& name) {
  static const std::set<std::string> names{
      "lane_change_count", "min_distance_m", "yielded", "rmse_m", "error_m", "tde_frames",
      "fallback",          "zeta",           "overtakes", "max_speed_mps"};
  return names.count(name) > 0;
}

void validate(const MetricRecord& r) {
  check_token(r.experiment, "experiment");
  for (const auto& [k, v] : r.grid) {
    check_token(k, "grid key");
    if (!std::isfinite(v)) throw std::invalid_argument("records: non-finite grid value " + k);
  }
  for (const auto& [k, v] : r.metrics) {
    check_token(k, "metric");
    if (k == kLabelMetric) throw std::invalid_argument("records: reserved metric name");
    if (!std::isfinite(v)) throw std::invalid_argument("records: non-finite metric " + k);
    if (nonnegative_metric(k) && v < 0.0) {
      throw std::invalid_argument("records: negative " + k);
    }
  }
  if (r.cluster_label) check_token(*r.cluster_label, "cluster label");
}

void write_records_csv(std::ostream& out, const std::vector<MetricRecord>& records) {
  out << kRecordsHeader << '\n';
  for (std::size_t n = 0; n < records.size(); ++n) {
    const auto& r = records[n];
    validate(r);
    std::string grid;
    for (const auto& [k, v] : r.grid) {
      if (!grid.empty()) grid += ';';
      grid += k + '=' + sim::format_real(v);
    }
    const std::string prefix =
        std::to_string(n) + ',' + r.experiment + ',' + std::to_string(r.seed) + ',' + grid + ',';
    if (r.metrics.empty() && !r.cluster_label) out << prefix << ",\n";
    for (const auto& [k, v] : r.metrics) out << prefix << k << ',' << sim::format_real(v) << '\n';
    if (r.cluster_label) out << prefix << kLabelMetric << ',' << *r.cluster_label << '\n';
  }
}

std::vector<MetricRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) {
    throw std::runtime_error("records: missing header");
  }
  std::vector<MetricRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) {
      throw std::runtime_error("records: line " + std::to_string(line_no) + ": expected 6 fields");
    }
    const auto index = parse<std::size_t>(f[0], line_no);
    if (index == out.size()) {
      MetricRecord r;
      r.experiment = f[1];
      r.seed = parse<std::uint64_t>(f[2], line_no);
      if (!f[3].empty()) {
        for (const auto& kv : split(f[3], ';')) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) {
            throw std::runtime_error("records: line " + std::to_string(line_no) + ": bad grid");
          }
          r.grid[kv.substr(0, eq)] = parse<double>(std::string_view(kv).substr(eq + 1), line_no);
        }
      }
      out.push_back(std::move(r));
    } else if (index + 1 != out.size()) {
      throw std::runtime_error("records: line " + std::to_string(line_no) + ": record out of order");
    }
    auto& r = out.back();
    if (f[4].empty()) continue;
    if (f[4] == kLabelMetric) r.cluster_label = f[5];
    else r.metrics[f[4]] = parse<double>(f[5], line_no);
  }
  return out;
}

nlohmann::json to_json(const MetricRecord& r) {
  validate(r);
  nlohmann::json j{{"experiment", r.experiment},
                   {"grid", r.grid},
                   {"seed", r.seed},
                   {"metrics", r.metrics}};
  if (r.cluster_label) j["cluster_label"] = *r.cluster_label;
  return j;
}

MetricRecord metric_record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  j.at("experiment").get_to(r.experiment);
  j.at("grid").get_to(r.grid);
  j.at("seed").get_to(r.seed);
  j.at("metrics").get_to(r.metrics);
  if (j.contains("cluster_label")) r.cluster_label = j.at("cluster_label").get<std::string>();
  validate(r);
  return r;
}

nlohmann::json to_json(const std::vector<MetricRecord>& records) {
  auto arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  return arr;
}

std::vector<MetricRecord> records_from_json(const nlohmann::json& j) {
  std::vector<MetricRecord> out;
  for (const auto& e : j) out.push_back(metric_record_from_json(e));
  return out;
}

void write_records(const std::filesystem::path& dir, const std::string& stem,
                   const std::vector<MetricRecord>& records) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / (stem + ".csv"));
  if (!csv) throw std::runtime_error("cannot write " + (dir / (stem + ".csv")).string());
  write_records_csv(csv, records);
  std::ofstream js(dir / (stem + ".json"));
  if (!js) throw std::runtime_error("cannot write " + (dir / (stem + ".json")).string());
  js << to_json(records).dump(2) << '\n';
}

}  // namespace riskdrive::experiments
