#include "riskdrive/auction/ordering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace riskdrive::auction {

int AuctionInstance::id_of(std::size_t agent) const {
  return ids.empty() ? static_cast<int>(agent) : ids[agent];
}

void AuctionInstance::validate() const {
  if (bids.empty()) throw std::invalid_argument("auction: no agents");
  if (bids.size() != times.size()) {
    throw std::invalid_argument("auction: |bids| != |times|");
  }
  if (!ids.empty() && ids.size() != bids.size()) {
    throw std::invalid_argument("auction: |ids| != |bids|");
  }
  for (double b : bids) {
    if (!std::isfinite(b)) throw std::invalid_argument("auction: non-finite bid");
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] > 0.0) || !std::isfinite(times[k])) {
      throw std::invalid_argument("auction: turn times must be positive");
    }
    if (k > 0 && !(times[k] > times[k - 1])) {
      throw std::invalid_argument("auction: turn times must be strictly increasing");
    }
  }
}

namespace {

std::vector<double> alphas_of(const AuctionInstance& inst) {
  std::vector<double> a;
  a.reserve(inst.times.size());
  for (double t : inst.times) a.push_back(1.0 / t);
  return a;
}

std::vector<int> order_with(const std::vector<double>& bids, const AuctionInstance& inst) {
  std::vector<int> order(bids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (bids[a] != bids[b]) return bids[a] > bids[b];
    return inst.id_of(a) < inst.id_of(b);
  });
  return order;
}

}  // namespace

std::vector<int> sorted_order(const AuctionInstance& inst) {
  inst.validate();
  return order_with(inst.bids, inst);
}

double slot_utility(const std::vector<double>& bids_by_slot, const std::vector<double>& alphas,
                    std::size_t slot, double value) {
  const std::size_t K = bids_by_slot.size();
  double u = value * alphas[slot];
  for (std::size_t j = slot; j + 1 < K; ++j) {
    u -= bids_by_slot[j + 1] * (alphas[j] - alphas[j + 1]);
  }
  return u;
}

double welfare(const AuctionInstance& inst, const std::vector<int>& order) {
  double w = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    w += inst.bids[static_cast<std::size_t>(order[k])] / inst.times[k];
  }
  return w;
}

OrderingResult allocate(const AuctionInstance& inst) {
  OrderingResult r;
  r.order = sorted_order(inst);
  const auto alphas = alphas_of(inst);
  const std::size_t K = inst.size();
  std::vector<double> by_slot(K);
  for (std::size_t k = 0; k < K; ++k) by_slot[k] = inst.bids[static_cast<std::size_t>(r.order[k])];
  r.slot_of.assign(K, 0);
  r.agent_utility.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double u = slot_utility(by_slot, alphas, k, by_slot[k]);
    r.utilities.push_back(u);
    r.slot_of[static_cast<std::size_t>(r.order[k])] = static_cast<int>(k);
    r.agent_utility[static_cast<std::size_t>(r.order[k])] = u;
  }
  r.welfare = welfare(inst, r.order);
  return r;
}

std::vector<double> standard_deviations(const AuctionInstance& inst, int agent) {
  std::vector<double> out{inst.bids[static_cast<std::size_t>(agent)], 0.0};
  double top = 0.0;
  for (std::size_t k = 0; k < inst.size(); ++k) {
    top = std::max(top, std::abs(inst.bids[k]));
    if (static_cast<int>(k) == agent) continue;
    const double b = inst.bids[k];
    const double eps = 1e-6 * std::max(1.0, std::abs(b));
    out.push_back(b + eps);
    out.push_back(b - eps);
    out.push_back(b);
  }
  out.push_back(2.0 * top + 1.0);
  return out;
}

IncentiveReport check_incentive_compatibility(const AuctionInstance& inst, int agent,
                                              const std::vector<double>& deviation_bids,
                                              double tol) {
  inst.validate();
  if (agent < 0 || static_cast<std::size_t>(agent) >= inst.size()) {
    throw std::invalid_argument("auction: agent out of range");
  }
  const auto alphas = alphas_of(inst);
  const double value = inst.bids[static_cast<std::size_t>(agent)];
  auto utility_with = [&](double bid, int& slot) {
    auto bids = inst.bids;
    bids[static_cast<std::size_t>(agent)] = bid;
    const auto order = order_with(bids, inst);
    std::vector<double> by_slot(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      by_slot[k] = bids[static_cast<std::size_t>(order[k])];
      if (order[k] == agent) slot = static_cast<int>(k);
    }
    return slot_utility(by_slot, alphas, static_cast<std::size_t>(slot), value);
  };
  IncentiveReport rep;
  rep.agent = agent;
  int truthful_slot = 0;
  rep.truthful_utility = utility_with(value, truthful_slot);
  for (double b : deviation_bids) {
    Deviation d;
    d.bid = b;
    d.utility = utility_with(b, d.slot);
    d.margin = rep.truthful_utility - d.utility;
    if (d.margin < -tol * std::max(1.0, std::abs(rep.truthful_utility))) rep.passed = false;
    rep.deviations.push_back(d);
  }
  return rep;
}

WelfareReport check_welfare_optimality(const AuctionInstance& inst, double tol, int samples,
                                       std::uint64_t seed) {
  WelfareReport rep;
  const auto sorted = sorted_order(inst);
  rep.sorted_welfare = welfare(inst, sorted);
  rep.best_welfare = rep.sorted_welfare;
  rep.best_order = sorted;
  std::vector<int> perm(inst.size());
  std::iota(perm.begin(), perm.end(), 0);
  auto consider = [&](const std::vector<int>& p) {
    const double w = welfare(inst, p);
    ++rep.permutations_checked;
    if (w > rep.best_welfare) {
      rep.best_welfare = w;
      rep.best_order = p;
    }
  };
  if (inst.size() <= 8) {
    do {
      consider(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    rep.exhaustive = false;
    std::mt19937_64 rng(seed);
    for (int s = 0; s < samples; ++s) {
      std::shuffle(perm.begin(), perm.end(), rng);
      consider(perm);
    }
  }
  rep.passed = rep.best_welfare <= rep.sorted_welfare + tol * std::max(1.0, std::abs(rep.sorted_welfare));
  return rep;
}

nlohmann::json to_json(const AuctionInstance& inst) {
  nlohmann::json j{{"bids", inst.bids}, {"times", inst.times}};
  if (!inst.ids.empty()) j["ids"] = inst.ids;
  return j;
}

AuctionInstance instance_from_json(const nlohmann::json& j) {
  AuctionInstance inst;
  inst.bids = j.at("bids").get<std::vector<double>>();
  inst.times = j.at("times").get<std::vector<double>>();
  if (j.contains("ids")) inst.ids = j.at("ids").get<std::vector<int>>();
  inst.validate();
  return inst;
}

AuctionInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return instance_from_json(nlohmann::json::parse(in));
}

nlohmann::json to_json(const OrderingResult& r) {
  return {{"order", r.order},
          {"slot_of", r.slot_of},
          {"utilities", r.utilities},
          {"agent_utility", r.agent_utility},
          {"welfare", r.welfare}};
}

nlohmann::json to_json(const IncentiveReport& r) {
  nlohmann::json devs = nlohmann::json::array();
  for (const auto& d : r.deviations) {
    devs.push_back({{"bid", d.bid}, {"slot", d.slot}, {"utility", d.utility}, {"margin", d.margin}});
  }
  return {{"agent", r.agent},
          {"truthful_utility", r.truthful_utility},
          {"deviations", devs},
          {"passed", r.passed}};
}

nlohmann::json to_json(const WelfareReport& r) {
  return {{"sorted_welfare", r.sorted_welfare},
          {"best_welfare", r.best_welfare},
          {"best_order", r.best_order},
          {"permutations_checked", r.permutations_checked},
          {"exhaustive", r.exhaustive},
          {"passed", r.passed}};
}

}  // namespace riskdrive::auction
