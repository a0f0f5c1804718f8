#include "riskdrive/sim/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace riskdrive::sim {

using nlohmann::json;

json to_json(const DriverParams& p) {
  return json{{"v0", p.v0},         {"T_headway", p.time_headway},
              {"s0", p.s0},         {"a_max", p.a_max},
              {"b_comf", p.b_comf}, {"p", p.politeness},
              {"b_safe", p.b_safe}, {"delta_a_th", p.delta_a_th}};
}

DriverParams driver_params_from_json(const json& j, DriverParams d) {
  d.v0 = j.value("v0", d.v0);
  d.time_headway = j.value("T_headway", d.time_headway);
  d.s0 = j.value("s0", d.s0);
  d.a_max = j.value("a_max", d.a_max);
  d.b_comf = j.value("b_comf", d.b_comf);
  d.politeness = j.value("p", d.politeness);
  d.b_safe = j.value("b_safe", d.b_safe);
  d.delta_a_th = j.value("delta_a_th", d.delta_a_th);
  d.validate();
  return d;
}

json to_json(const ScenarioConfig& c) {
  return json{{"n_lanes", c.n_lanes},
              {"n_vehicles", c.n_vehicles},
              {"lane_width", c.lane_width},
              {"tick_dt", c.tick_dt},
              {"duration", c.duration},
              {"seed", c.seed},
              {"class_mix", c.class_mix},
              {"scenario_kind", std::string(to_string(c.scenario_kind))},
              {"spawn_length", c.spawn_length},
              {"merge_x", c.merge_x},
              {"lane_change_duration", c.lane_change_duration},
              {"near_collision_gap", c.near_collision_gap},
              {"conservative", to_json(c.conservative)},
              {"aggressive", to_json(c.aggressive)}};
}

ScenarioConfig scenario_config_from_json(const json& j) {
  ScenarioConfig c;
  c.n_lanes = j.value("n_lanes", c.n_lanes);
  c.n_vehicles = j.value("n_vehicles", c.n_vehicles);
  c.lane_width = j.value("lane_width", c.lane_width);
  c.tick_dt = j.value("tick_dt", c.tick_dt);
  c.duration = j.value("duration", c.duration);
  c.seed = j.value("seed", c.seed);
  c.class_mix = j.value("class_mix", c.class_mix);
  if (j.contains("scenario_kind")) {
    c.scenario_kind = scenario_kind_from_string(j.at("scenario_kind").get<std::string>());
  }
  c.spawn_length = j.value("spawn_length", c.spawn_length);
  c.merge_x = j.value("merge_x", c.merge_x);
  c.lane_change_duration = j.value("lane_change_duration", c.lane_change_duration);
  c.near_collision_gap = j.value("near_collision_gap", c.near_collision_gap);
  if (j.contains("conservative")) {
    c.conservative = driver_params_from_json(j.at("conservative"), c.conservative);
  }
  if (j.contains("aggressive")) {
    c.aggressive = driver_params_from_json(j.at("aggressive"), c.aggressive);
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const Event& e) {
  return {{"kind", to_string(e.kind)}, {"frame", e.frame},         {"agent", e.agent_id},
          {"other", e.other_id},       {"from_lane", e.from_lane}, {"to_lane", e.to_lane}};
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  // Allow the scenario block to be nested under "scenario".
  return scenario_config_from_json(j.contains("scenario") ? j.at("scenario") : j);
}

std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<TrajectoryRow> rows_of(const World& world) {
  std::vector<TrajectoryRow> rows;
  rows.reserve(world.vehicles.size());
  for (const auto& v : world.vehicles) {
    rows.push_back({world.frame, world.time, v.state.id, v.state.lane, v.state.x,
                    v.state.y, v.state.v, v.state.class_tag});
  }
  return rows;
}

void write_trajectory_header(std::ostream& out) { out << kTrajectoryHeader << '\n'; }

void write_trajectory_rows(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  for (const auto& r : rows) {
    out << r.frame << ',' << format_real(r.time_s) << ',' << r.agent_id << ','
        << r.lane << ',' << format_real(r.x_m) << ',' << format_real(r.y_m) << ','
        << format_real(r.speed_mps) << ',' << to_string(r.class_tag) << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path,
                          const std::vector<TrajectoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_trajectory_header(out);
  write_trajectory_rows(out, rows);
}

namespace {

template <typename T>
T parse_field(std::string_view field, std::size_t line) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw std::runtime_error("trajectory csv line " + std::to_string(line) +
                             ": bad field '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in) {
  std::vector<TrajectoryRow> rows;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return rows;  // empty file
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTrajectoryHeader) {
    throw std::runtime_error("trajectory csv line 1: unexpected header");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const auto pos = rest.find(',');
      f.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (f.size() != 8) {
      throw std::runtime_error("trajectory csv line " + std::to_string(line_no) +
                               ": expected 8 fields");
    }
    TrajectoryRow r;
    r.frame = parse_field<std::int64_t>(f[0], line_no);
    r.time_s = parse_field<double>(f[1], line_no);
    r.agent_id = parse_field<int>(f[2], line_no);
    r.lane = parse_field<int>(f[3], line_no);
    r.x_m = parse_field<double>(f[4], line_no);
    r.y_m = parse_field<double>(f[5], line_no);
    r.speed_mps = parse_field<double>(f[6], line_no);
    try {
      r.class_tag = driver_class_from_string(f[7]);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("trajectory csv line " + std::to_string(line_no) +
                               ": bad class");
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_trajectory_csv(in);
}

}  // namespace riskdrive::sim
