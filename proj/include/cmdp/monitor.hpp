#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cmdp/mdp.hpp"

namespace cmdp {

enum class PayoffKind { Point, Mean, Total };
std::string to_string(PayoffKind k);
PayoffKind parse_payoff_kind(const std::string& text);

/// Running view of a reward sequence: steps seen, their sum and the latest reward.
struct MonitorState {
  std::int64_t steps = 0;
  Rational total = 0;
  Rational last = 0;

  /// Current entry of the chosen payoff sequence; nullopt before the first step.
  std::optional<Rational> value(PayoffKind kind) const;
};

MonitorState observe(MonitorState m, const Rational& reward);

enum class Outcome { Win, Lose, Unknown };

struct Verdict {
  Outcome outcome = Outcome::Unknown;
  std::string reason;
  /// "win", "lose" or "unknown".
  std::string tag() const;
  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Absorbing regions declared by whoever built the MDP. A losing region repeats reward -1
/// forever; a winning region repeats reward 0 forever.
struct StructuralFacts {
  std::function<bool(const StateId&)> losing;
  std::function<bool(const StateId&)> winning;
};

/// Certain once the run sits in a declared absorbing region. In a zero region the total
/// payoff freezes, so the total-payoff verdict follows the sign of the frozen total.
Verdict verdict(const StructuralFacts& facts, const StateId& current, const MonitorState& m, PayoffKind kind);

/// "From step k on, no point reward below -2^-level."
struct SafetyLevelSpec {
  int level = 0;
  std::int64_t bound = 0;
};

/// Rewards are indexed from step 1. False as soon as a reward after step `bound` falls below
/// -2^-level; true if the prefix extends past `bound` without one; nullopt otherwise.
std::optional<bool> safety_level_holds(const std::vector<Rational>& rewards, const SafetyLevelSpec& spec);

struct InfiniteBranching : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// All states reachable from s0 in at most n steps.
std::unordered_set<StateId, StateIdHash> bubble(const Mdp& mdp, const StateId& s0, std::int64_t n);

/// Same graph, with every transition into t rewarded -1/max(1, d(t)), d the BFS distance from s0.
/// Point-payoff liminf >= 0 then holds exactly on the transient runs.
class TransienceRewards final : public Mdp {
 public:
  TransienceRewards(MdpPtr base, StateId s0);
  StateId initial() const override { return s0_; }
  StateKind kind(const StateId& s) const override { return base_->kind(s); }
  Degree degree(const StateId& s) const override { return base_->degree(s); }
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override;
  Rational tail_mass(const StateId& s, std::size_t from) const override { return base_->tail_mass(s, from); }

  /// BFS distance from s0; throws UnknownState if s is not found within `max_depth` layers.
  std::int64_t depth(const StateId& s, std::int64_t max_depth = 1 << 20) const;

 private:
  MdpPtr base_;
  StateId s0_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<StateId, std::int64_t, StateIdHash> depth_;
  mutable std::vector<StateId> frontier_;
  mutable std::int64_t explored_ = 0;
};

MdpPtr transience_reward_structure(MdpPtr mdp, const StateId& s0);

}  // namespace cmdp
