#pragma once

// Turn-based ordering from behavior bids.
//
// K agents bid b_k and K slots have turn times t_1 < ... < t_K with rewards
// alpha_k = 1/t_k. Agents are sorted by descending bid and the agent in slot
// k receives
//   u_k = b_k alpha_k - sum_{j=k}^{K} b_{j+1} (alpha_j - alpha_{j+1}),
// with b_{K+1} = 0 so the j = K term vanishes. The correction depends only on
// the bids below slot k, which makes truthful bidding a dominant strategy,
// and sorting maximizes the welfare sum_k b_k alpha_k.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

namespace riskdrive::auction {

struct AuctionInstance {
  std::vector<double> bids;   // by agent
  std::vector<double> times;  // by slot, strictly increasing
  std::vector<int> ids;       // tie-break keys; empty means 0..K-1

  std::size_t size() const { return bids.size(); }
  int id_of(std::size_t agent) const;
  /// Throws std::invalid_argument on size mismatch, non-positive or
  /// non-increasing times, or non-finite bids.
  void validate() const;
};

struct OrderingResult {
  std::vector<int> order;            // slot -> agent index
  std::vector<int> slot_of;          // agent index -> slot
  std::vector<double> utilities;     // by slot
  std::vector<double> agent_utility; // by agent
  double welfare = 0.0;
};

/// Slot order: descending bid, ties by ascending id.
std::vector<int> sorted_order(const AuctionInstance& inst);

OrderingResult allocate(const AuctionInstance& inst);

/// Utility of the agent in `slot` given its value and the bids ordered by
/// slot.
double slot_utility(const std::vector<double>& bids_by_slot,
                     const std::vector<double>& alphas, std::size_t slot,
                     double value);

double welfare(const AuctionInstance& inst, const std::vector<int>& order);

struct Deviation {
  double bid = 0.0;
  int slot = 0;
  double utility = 0.0;
  double margin = 0.0;  // truthful utility - deviated utility
};

struct IncentiveReport {
  int agent = 0;
  double truthful_utility = 0.0;
  std::vector<Deviation> deviations;
  bool passed = true;
};

/// Bids just above and below every other bid, the extremes 0 and twice the
/// largest bid, and the truthful bid itself.
std::vector<double> standard_deviations(const AuctionInstance& inst, int agent);

/// Re-slots `agent` under every deviating bid (others keep theirs) and
/// compares the utility measured with its true value against truthful play.
IncentiveReport check_incentive_compatibility(const AuctionInstance& inst, int agent,
                                              const std::vector<double>& deviation_bids,
                                              double tol = 1e-12);

struct WelfareReport {
  double sorted_welfare = 0.0;
  double best_welfare = 0.0;
  std::vector<int> best_order;
  std::uint64_t permutations_checked = 0;
  bool exhaustive = true;
  bool passed = true;
};

/// Exhaustive over all permutations for K <= 8, otherwise `samples` random
/// permutations drawn with `seed`.
WelfareReport check_welfare_optimality(const AuctionInstance& inst, double tol = 1e-12,
                                       int samples = 5000, std::uint64_t seed = 1);

nlohmann::json to_json(const AuctionInstance& inst);
AuctionInstance instance_from_json(const nlohmann::json& j);
AuctionInstance load_instance(const std::filesystem::path& path);
nlohmann::json to_json(const OrderingResult& r);
nlohmann::json to_json(const IncentiveReport& r);
nlohmann::json to_json(const WelfareReport& r);

}  // namespace riskdrive::auction
