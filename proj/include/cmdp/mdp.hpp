#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cmdp/rational.hpp"
#include "cmdp/rng.hpp"

namespace cmdp {

struct UnknownState : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadChoice : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Structured state coordinates. Canonical text: g{gadget}/{role}[#row]/{branch}/{offset}
/// optionally followed by "@{step}" and "@r={total}" when the state lives in an encoded MDP.
struct StateId {
  std::int64_t gadget = 0;
  std::string role;
  std::int64_t branch = 0;
  std::int64_t offset = 0;
  std::int64_t row = 0;
  std::optional<std::int64_t> step;
  std::optional<Rational> total;

  std::string str() const;
  static StateId parse(std::string_view text);
  StateId base() const;

  friend bool operator==(const StateId& a, const StateId& b);
  friend bool operator<(const StateId& a, const StateId& b);
};

struct StateIdHash {
  std::size_t operator()(const StateId& s) const;
};

inline StateId make_state(std::int64_t gadget, std::string role, std::int64_t branch = 0,
                          std::int64_t offset = 0, std::int64_t row = 0) {
  return StateId{gadget, std::move(role), branch, offset, row, std::nullopt, std::nullopt};
}

enum class StateKind { Controlled, Random };

struct OutEdge {
  StateId target;
  Rational reward;
  /// Present iff the source is Random.
  std::optional<Rational> prob;
  /// Distance from the true (possibly irrational) probability; zero in exact mode.
  Rational prob_err = 0;
};

/// Degree of a state: finite count, or nullopt for countably infinite branching.
using Degree = std::optional<std::size_t>;

class Mdp {
 public:
  virtual ~Mdp() = default;
  virtual StateId initial() const = 0;
  /// Throws UnknownState for states the generator rejects.
  virtual StateKind kind(const StateId& s) const = 0;
  virtual Degree degree(const StateId& s) const = 0;
  /// First `limit` edges in canonical order.
  virtual std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const = 0;
  /// Probability mass of edges at index >= from (Random states); zero past a finite degree.
  virtual Rational tail_mass(const StateId& s, std::size_t from) const;

  std::vector<OutEdge> all_successors(const StateId& s) const;
};

using MdpPtr = std::shared_ptr<const Mdp>;

std::vector<OutEdge> successors(const Mdp& mdp, const StateId& s, std::size_t limit);

/// Finite MDP given by explicit tables; handy for tests and small examples.
class TableMdp final : public Mdp {
 public:
  struct Entry {
    StateKind kind;
    std::vector<OutEdge> edges;
  };
  explicit TableMdp(StateId initial) : initial_(std::move(initial)) {}
  void add(const StateId& s, StateKind kind, std::vector<OutEdge> edges);
  const std::vector<StateId>& states() const { return order_; }

  StateId initial() const override { return initial_; }
  StateKind kind(const StateId& s) const override;
  Degree degree(const StateId& s) const override;
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override;

 private:
  const Entry& entry(const StateId& s) const;
  StateId initial_;
  std::vector<StateId> order_;
  std::vector<Entry> entries_;
};

struct ValidationReport {
  bool ok = true;
  bool nonempty = true;
  bool infinite = false;
  std::size_t probed = 0;
  Rational prob_sum = 0;
  /// 1 - prob_sum (the mass unaccounted for, including the declared tail for infinite branching).
  Rational deficit = 0;
  Rational declared_tail = 0;
  std::vector<std::string> failures;
};

/// Checks nonempty successors and probability normalization within `tol`.
/// Infinite branching states are probed on a prefix of `probe` edges plus the declared tail mass.
ValidationReport validate_local(const Mdp& mdp, const StateId& s, const Rational& tol, std::size_t probe = 64);

struct Transition {
  std::size_t index;
  Rational reward;
};

class Run {
 public:
  explicit Run(StateId start) { states_.push_back(std::move(start)); }
  std::size_t length() const { return steps_.size(); }
  const StateId& state(std::size_t i) const { return states_.at(i); }
  const Transition& edge(std::size_t i) const { return steps_.at(i); }
  const StateId& last() const { return states_.back(); }
  const std::vector<StateId>& states() const { return states_; }
  const std::vector<Transition>& transitions() const { return steps_; }
  void push(Transition t, StateId next) {
    steps_.push_back(std::move(t));
    states_.push_back(std::move(next));
  }
  friend bool operator==(const Run&, const Run&) = default;

 private:
  std::vector<StateId> states_;
  std::vector<Transition> steps_;
};

struct RandomDraw {
  SeedStream* stream;
};
using Choice = std::variant<std::size_t, RandomDraw>;

/// Appends one transition. Index choices are only legal at controlled states and draws only at random ones.
void extend_run(const Mdp& mdp, Run& run, Choice choice);

/// Samples an edge index from exact probabilities using 64 random bits.
std::size_t sample_edge(const Mdp& mdp, const StateId& s, SeedStream& stream);

/// ceil(cum * 2^64) clamped to 2^64 - 1: a 64-bit draw u picks the first index with u < threshold.
std::uint64_t threshold64(const Rational& cum);
/// First index whose cumulative probability exceeds one 64-bit draw; the last index absorbs rounding.
std::size_t sample_index(const std::vector<Rational>& probs, SeedStream& stream);

}  // namespace cmdp
