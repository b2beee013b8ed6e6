#include "cmdp/monitor.hpp"

#include <algorithm>
#include <deque>

#include "cmdp/kv.hpp"

namespace cmdp {

std::string to_string(PayoffKind k) {
  switch (k) {
    case PayoffKind::Point: return "point";
    case PayoffKind::Mean: return "mean";
    case PayoffKind::Total: return "total";
  }
  return "?";
}

PayoffKind parse_payoff_kind(const std::string& text) {
  if (text == "point") return PayoffKind::Point;
  if (text == "mean") return PayoffKind::Mean;
  if (text == "total") return PayoffKind::Total;
  throw ConfigInvalid("unknown payoff kind: " + text);
}

std::optional<Rational> MonitorState::value(PayoffKind kind) const {
  if (steps == 0) return std::nullopt;
  switch (kind) {
    case PayoffKind::Point: return last;
    case PayoffKind::Mean: return Rational(total / steps);
    case PayoffKind::Total: return total;
  }
  return std::nullopt;
}

MonitorState observe(MonitorState m, const Rational& reward) {
  ++m.steps;
  m.total += reward;
  m.last = reward;
  return m;
}

std::string Verdict::tag() const {
  switch (outcome) {
    case Outcome::Win: return "win";
    case Outcome::Lose: return "lose";
    case Outcome::Unknown: return "unknown";
  }
  return "unknown";
}

Verdict verdict(const StructuralFacts& facts, const StateId& current, const MonitorState& m, PayoffKind kind) {
  if (facts.losing && facts.losing(current)) return {Outcome::Lose, "sink"};
  if (facts.winning && facts.winning(current)) {
    if (kind == PayoffKind::Total && m.total < 0) return {Outcome::Lose, "frozen-negative-total"};
    return {Outcome::Win, "zero-region"};
  }
  return {Outcome::Unknown, ""};
}

std::optional<bool> safety_level_holds(const std::vector<Rational>& rewards, const SafetyLevelSpec& spec) {
  const Rational floor = -pow2(-spec.level);
  for (std::size_t j = 0; j < rewards.size(); ++j) {
    const auto step = static_cast<std::int64_t>(j) + 1;
    if (step > spec.bound && rewards[j] < floor) return false;
  }
  if (static_cast<std::int64_t>(rewards.size()) > spec.bound) return true;
  return std::nullopt;
}

std::unordered_set<StateId, StateIdHash> bubble(const Mdp& mdp, const StateId& s0, std::int64_t n) {
  std::unordered_set<StateId, StateIdHash> seen{s0};
  std::vector<StateId> layer{s0};
  for (std::int64_t d = 0; d < n && !layer.empty(); ++d) {
    std::vector<StateId> next;
    for (const auto& s : layer) {
      if (!mdp.degree(s)) throw InfiniteBranching("bubble: " + s.str() + " has infinitely many successors");
      for (auto& e : mdp.all_successors(s))
        if (seen.insert(e.target).second) next.push_back(std::move(e.target));
    }
    layer = std::move(next);
  }
  return seen;
}

TransienceRewards::TransienceRewards(MdpPtr base, StateId s0) : base_(std::move(base)), s0_(std::move(s0)) {
  depth_.emplace(s0_, 0);
  frontier_.push_back(s0_);
}

std::int64_t TransienceRewards::depth(const StateId& s, std::int64_t max_depth) const {
  std::lock_guard lock(mutex_);
  for (;;) {
    if (auto it = depth_.find(s); it != depth_.end()) return it->second;
    if (frontier_.empty() || explored_ >= max_depth)
      throw UnknownState("not reachable from " + s0_.str() + ": " + s.str());
    std::vector<StateId> next;
    for (const auto& u : frontier_) {
      if (!base_->degree(u)) throw InfiniteBranching("transience rewards need finite branching at " + u.str());
      for (auto& e : base_->all_successors(u))
        if (depth_.emplace(e.target, explored_ + 1).second) next.push_back(std::move(e.target));
    }
    frontier_ = std::move(next);
    ++explored_;
  }
}

std::vector<OutEdge> TransienceRewards::successors(const StateId& s, std::size_t limit) const {
  auto edges = base_->successors(s, limit);
  for (auto& e : edges) e.reward = Rational(-1) / Rational(std::max<std::int64_t>(1, depth(e.target)));
  return edges;
}

MdpPtr transience_reward_structure(MdpPtr mdp, const StateId& s0) {
  if (!mdp->degree(s0)) throw InfiniteBranching("transience rewards need finite branching");
  return std::make_shared<TransienceRewards>(std::move(mdp), s0);
}

}  // namespace cmdp
