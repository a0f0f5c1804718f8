// riskdrive command-line harness.
//
//   riskdrive simulate   [--config scenario.json] [--seed n] [--out dir]
//   riskdrive cmetric    --trajectory traj.csv --agent id [--annotations ann.csv] [--out dir]
//   riskdrive calibrate  --pairs pairs.csv [--config bounds.json] [--seed n] [--out dir]
//   riskdrive plan       [--config plan.json] [--seed n] [--ego id] [--out dir]
//   riskdrive auction    --config instance.json [--seed n] [--out dir]
//   riskdrive experiment <name> [--config overrides.json] [--seed n] [--seeds k] [--jobs j] [--out dir]
//   riskdrive serve      [--address a] [--port p]
//
// Exit codes: 0 success, 1 a check or assertion failed, 2 bad input.

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "riskdrive/auction/ordering.hpp"
#include "riskdrive/behavior/cmetric.hpp"
#include "riskdrive/experiments/parallel.hpp"
#include "riskdrive/experiments/studies.hpp"
#include "riskdrive/game/planner.hpp"
#include "riskdrive/risk/calibration.hpp"
#include "riskdrive/session/server.hpp"
#include "riskdrive/sim/io.hpp"
#include "riskdrive/sim/world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace riskdrive;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output directory");
}

json read_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return c.out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string opt_real(const std::optional<double>& v) { return v ? sim::format_real(*v) : ""; }

// ---------------------------------------------------------------------------

int run_simulate(const Common& c) {
  auto cfg = sim::scenario_config_from_json(read_json(c.config));
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  auto world = sim::spawn_population(cfg);
  std::vector<sim::TrajectoryRow> rows = sim::rows_of(world);
  json events = json::array();
  for (int k = 0; k < cfg.ticks(); ++k) {
    auto r = sim::step(world, {}, cfg.tick_dt);
    world = std::move(r.world);
    for (const auto& e : r.events) events.push_back(sim::to_json(e));
    const auto tick_rows = sim::rows_of(world);
    rows.insert(rows.end(), tick_rows.begin(), tick_rows.end());
  }
  const auto dir = out_dir(c);
  sim::write_trajectory_csv(dir / "trajectory.csv", rows);
  write_json(dir / "simulation.json",
             {{"scenario", sim::to_json(cfg)}, {"ticks", cfg.ticks()}, {"events", events}});
  std::cout << "simulated " << cfg.ticks() << " ticks, " << cfg.n_vehicles << " vehicles, "
            << events.size() << " events -> " << (dir / "trajectory.csv").string() << '\n';
  return 0;
}

int run_cmetric(const Common& c, const std::string& trajectory, int agent,
                const std::string& annotations, double mu) {
  const auto rows = sim::read_trajectory_csv(fs::path(trajectory));
  if (rows.empty()) throw std::runtime_error("empty trajectory");
  const auto graphs = behavior::graphs_from_rows(rows, mu);
  double dt = 0.1;
  for (const auto& r : rows) {
    if (r.frame != rows.front().frame) {
      dt = (r.time_s - rows.front().time_s) / static_cast<double>(r.frame - rows.front().frame);
      break;
    }
  }
  const auto profile = behavior::compute_profile(graphs, agent, dt);
  json summary = {{"agent", agent}, {"dt", dt}, {"frames", graphs.size()}};
  summary["zeta"] = profile.zeta_scalar ? json(*profile.zeta_scalar) : json(nullptr);
  if (profile.zeta_scalar) summary["sle_peak_frame"] = behavior::sle_peak_frame(profile);
  if (!annotations.empty()) {
    const auto ann = behavior::read_annotations_csv(fs::path(annotations));
    summary["expected_aggressive_frame"] = behavior::expected_aggressive_frame(ann);
    summary["tde_frames"] = behavior::tde(profile, ann);
  }

  const auto dir = out_dir(c);
  write_json(dir / "profile.json", behavior::to_json(profile));
  write_json(dir / "cmetric.json", summary);
  std::ofstream csv(dir / "cmetric.csv");
  csv << "frame,zeta_c,zeta_d,zeta_e,sle_c,sie_c\n";
  const auto closeness = static_cast<int>(behavior::Centrality::closeness);
  for (std::size_t k = 0; k < profile.frames.size(); ++k) {
    csv << profile.frames[k] << ',' << opt_real(profile.zeta_c[k]) << ','
        << sim::format_real(profile.zeta_d[k]) << ',' << sim::format_real(profile.zeta_e[k]) << ','
        << opt_real(profile.sle[closeness][k]) << ',' << opt_real(profile.sie[closeness][k]) << '\n';
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

std::vector<risk::TrainingPair> read_pairs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<risk::TrainingPair> pairs;
  std::string line;
  std::getline(in, line);  // zeta,theta
  for (int n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error(path + ":" + std::to_string(n) + ": expected zeta,theta");
    pairs.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
  }
  return pairs;
}

int run_calibrate(const Common& c, const std::string& pairs_path) {
  const auto pairs = read_pairs_csv(pairs_path);
  auto mapping = risk::fit(pairs);
  const auto j = read_json(c.config);
  if (j.contains("bounds")) {
    const auto b = j.at("bounds").get<std::vector<double>>();
    if (b.size() != 2 || !(b[0] < b[1])) throw std::invalid_argument("bounds must be [lo, hi]");
    mapping.theta_lo = b[0];
    mapping.theta_hi = b[1];
  }
  std::vector<double> thetas;
  for (const auto& p : pairs) thetas.push_back(risk::map_to_theta(mapping, p.zeta).theta);
  risk::ClusterOptions opt;
  if (c.seed) opt.seed = *c.seed;
  const auto clusters = risk::cluster(thetas, opt);

  const auto dir = out_dir(c);
  risk::save_mapping(dir / "mapping.json", mapping);
  std::ofstream report(dir / "clusters.csv");
  risk::write_cluster_report(report, clusters);
  std::cout << "beta0 " << mapping.beta0 << " beta1 " << mapping.beta1 << " from " << pairs.size()
            << " pairs\n";
  return 0;
}

int run_plan(const Common& c, int ego) {
  const auto j = read_json(c.config);
  auto scenario = sim::scenario_config_from_json(j.value("scenario", json::object()));
  if (c.seed) scenario.seed = *c.seed;
  const auto planner = game::planner_config_from_json(j.value("planner", json::object()));
  std::map<int, double> human_thetas;
  if (j.contains("human_thetas")) {
    for (const auto& [k, v] : j.at("human_thetas").items()) human_thetas[std::stoi(k)] = v.get<double>();
  }
  const auto world = sim::spawn_population(scenario);
  if (!world.find(ego)) throw std::invalid_argument("no vehicle with id " + std::to_string(ego));
  const auto decision = game::plan_receding_horizon(world, ego, planner, human_thetas);

  const auto dir = out_dir(c);
  write_json(dir / "plan.json", {{"scenario", sim::to_json(scenario)},
                                 {"planner", game::to_json(planner)},
                                 {"ego", ego},
                                 {"cruise_speed", game::cruise_speed(planner)},
                                 {"decision", game::to_json(decision)}});
  std::ofstream csv(dir / "plan_candidates.csv");
  csv << "lane,risk,status,fallback,acceleration\n";
  for (const auto& cand : decision.candidates) {
    csv << cand.lane << ',' << sim::format_real(cand.risk) << ',' << game::to_string(cand.status)
        << ',' << (cand.fallback ? 1 : 0) << ',' << sim::format_real(cand.acceleration) << '\n';
  }
  std::cout << "ego " << ego << ": lane " << sim::to_string(decision.lane) << " (target "
            << decision.target_lane << "), acceleration " << decision.acceleration << ", risk "
            << decision.risk << (decision.fallback ? ", fallback" : "") << '\n';
  return 0;
}

int run_auction(const Common& c) {
  if (c.config.empty()) throw std::invalid_argument("auction needs --config <instance.json>");
  const auto inst = auction::load_instance(c.config);
  const auto result = auction::allocate(inst);
  json incentive = json::array();
  bool passed = true;
  for (std::size_t a = 0; a < inst.size(); ++a) {
    const int agent = static_cast<int>(a);
    const auto r = auction::check_incentive_compatibility(
        inst, agent, auction::standard_deviations(inst, agent));
    passed = passed && r.passed;
    incentive.push_back(auction::to_json(r));
  }
  const auto welfare = auction::check_welfare_optimality(inst, 1e-12, 5000, c.seed.value_or(1));
  passed = passed && welfare.passed;

  const auto dir = out_dir(c);
  write_json(dir / "auction.json", {{"instance", auction::to_json(inst)},
                                    {"allocation", auction::to_json(result)},
                                    {"incentive", incentive},
                                    {"welfare", auction::to_json(welfare)},
                                    {"passed", passed}});
  std::ofstream csv(dir / "auction.csv");
  csv << "slot,agent,id,bid,time,utility\n";
  for (std::size_t s = 0; s < result.order.size(); ++s) {
    const auto a = static_cast<std::size_t>(result.order[s]);
    csv << s << ',' << a << ',' << inst.id_of(a) << ',' << sim::format_real(inst.bids[a]) << ','
        << sim::format_real(inst.times[s]) << ',' << sim::format_real(result.utilities[s]) << '\n';
  }
  std::cout << (passed ? "PASS" : "FAIL") << " auction: welfare " << result.welfare << '\n';
  return passed ? 0 : 1;
}

int run_experiment_cmd(const Common& c, const std::string& name, int seeds) {
  experiments::ExperimentSpec spec;
  spec.name = experiments::experiment_name_from_string(name);
  spec.seeds = experiments::seed_range(c.seed.value_or(1), seeds);
  spec.config = read_json(c.config);
  spec.out = out_dir(c);
  const auto result = experiments::run_experiment(spec);
  for (const auto& a : result.assertions) {
    std::cout << (a.passed ? "PASS " : "FAIL ") << a.name;
    if (!a.detail.empty()) std::cout << ": " << a.detail;
    std::cout << '\n';
  }
  std::cout << result.records.size() << " records -> " << spec.out->string() << '\n';
  return result.passed() ? 0 : 1;
}

int run_serve(const std::string& address, unsigned short port) {
  // Block the signals before the server thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  session::SessionManager manager;
  session::ServerOptions opt;
  opt.address = address;
  opt.port = port;
  session::Server server(opt, manager);
  std::thread io([&] { server.run(); });
  std::cout << "listening on ws://" << address << ':' << server.port() << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  io.join();
  for (const auto id : manager.ids()) manager.stop(id);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"riskdrive: simulation, behavior metrics, risk-aware planning and experiments"};
  app.require_subcommand(1);

  Common common;
  auto* simulate = app.add_subcommand("simulate", "run a scenario and export its trajectory");
  add_common(simulate, common);

  std::string trajectory, annotations;
  int agent = 0;
  double mu = graph::kDefaultMu;
  auto* cmetric = app.add_subcommand("cmetric", "behavior profile of one agent in a trajectory CSV");
  cmetric->add_option("--trajectory", trajectory, "trajectory CSV")->required()->check(CLI::ExistingFile);
  cmetric->add_option("--agent", agent, "agent id")->required();
  cmetric->add_option("--annotations", annotations, "annotation CSV for TDE")->check(CLI::ExistingFile);
  cmetric->add_option("--mu", mu, "graph neighborhood radius (m)");
  add_common(cmetric, common, false);

  std::string pairs;
  auto* calibrate = app.add_subcommand("calibrate", "fit the zeta -> theta mapping and cluster");
  calibrate->add_option("--pairs", pairs, "CSV zeta,theta")->required()->check(CLI::ExistingFile);
  add_common(calibrate, common);

  int ego = 0;
  auto* plan = app.add_subcommand("plan", "one receding-horizon decision on a spawned scenario");
  plan->add_option("--ego", ego, "ego vehicle id");
  add_common(plan, common);

  auto* auction_cmd = app.add_subcommand("auction", "turn ordering and theorem checks");
  add_common(auction_cmd, common);

  std::string name;
  int seeds = 20;
  auto* experiment = app.add_subcommand("experiment", "run one study");
  experiment->add_option("name", name, "lane_changes, merge_distance, merge_yield, kmeans_fit, "
                                       "baseline_error, user_study_pair or tde_eval")
      ->required();
  experiment->add_option("--seeds", seeds, "number of seeds starting at --seed")->check(CLI::PositiveNumber);
  int jobs = 0;
  experiment->add_option("--jobs", jobs, "worker threads for grid cells (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
  add_common(experiment, common);

  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  auto* serve = app.add_subcommand("serve", "websocket session service");
  serve->add_option("--address", address, "listen address");
  serve->add_option("--port", port, "listen port (0 picks one)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) return run_simulate(common);
    if (*cmetric) return run_cmetric(common, trajectory, agent, annotations, mu);
    if (*calibrate) return run_calibrate(common, pairs);
    if (*plan) return run_plan(common, ego);
    if (*auction_cmd) return run_auction(common);
    if (*experiment) {
      experiments::set_worker_count(jobs);
      return run_experiment_cmd(common, name, seeds);
    }
    if (*serve) return run_serve(address, port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
