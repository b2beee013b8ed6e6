#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cmdp/mdp.hpp"

namespace cmdp {

struct NotControlled : std::logic_error {
  using std::logic_error::logic_error;
};
struct NotFiniteMemory : std::logic_error {
  using std::logic_error::logic_error;
};

/// Finite-support distribution with exact weights.
template <class T>
using Dist = std::vector<std::pair<T, Rational>>;

template <class T>
Dist<T> dirac(T v) {
  return {{std::move(v), Rational(1)}};
}

/// Per-run memory. The step and reward counters are forced (updated by the engine after every
/// transition); only `mode` is under the machine's control.
struct Memory {
  std::int64_t mode = 0;
  std::int64_t steps = 0;
  Rational total = 0;
};

enum class StrategyTag { MD, FR, Markov, RC, SCRC, KBitMarkov, HD };
std::string to_string(StrategyTag t);

struct StrategyClass {
  StrategyTag tag = StrategyTag::MD;
  /// Number of modes for FR(k) and k-bit machines (2^k); 1 for the counter classes.
  std::int64_t modes = 1;
  std::string str() const;
};

/// Distribution over edge indices at a controlled state. `degree` lets rules clamp to the top edge.
using ChoiceRule = std::function<Dist<std::size_t>(const Memory&, const StateId&, Degree)>;
/// Distribution over the next mode after taking `edge` (index `index`) out of `from`.
using UpdateRule = std::function<Dist<std::int64_t>(const Memory&, const StateId& from, std::size_t index, const OutEdge& edge)>;

class Strategy {
 public:
  Strategy(StrategyClass cls, std::string name, std::int64_t initial_mode, ChoiceRule choose, UpdateRule update = {});

  const StrategyClass& cls() const { return cls_; }
  const std::string& name() const { return name_; }
  Memory initial_memory() const { return Memory{initial_mode_, 0, 0}; }
  bool randomized_update() const { return static_cast<bool>(update_); }

  Dist<std::size_t> choose(const Memory& m, const StateId& s, Degree d) const;
  Dist<std::int64_t> update(const Memory& m, const StateId& from, std::size_t index, const OutEdge& e) const;

  std::size_t sample_choice(const Memory& m, const StateId& s, Degree d, SeedStream& rng) const;
  /// Mode update (sampled) followed by the forced counter updates.
  void advance(Memory& m, const StateId& from, std::size_t index, const OutEdge& e, SeedStream& rng) const;

 private:
  StrategyClass cls_;
  std::string name_;
  std::int64_t initial_mode_;
  ChoiceRule choose_;
  UpdateRule update_;
};

using StrategyPtr = std::shared_ptr<const Strategy>;

/// Clamp an index to the available edges (finite degree only).
std::size_t clamp_index(std::size_t i, Degree d);

StrategyPtr make_md(std::string name, std::function<std::size_t(const StateId&)> rule);
StrategyPtr make_markov(std::string name, std::function<Dist<std::size_t>(const StateId&, std::int64_t steps)> rule);
StrategyPtr make_reward_counter(std::string name, std::function<Dist<std::size_t>(const StateId&, const Rational& total)> rule);
StrategyPtr make_sc_rc(std::string name,
                       std::function<Dist<std::size_t>(const StateId&, std::int64_t steps, const Rational& total)> rule);
/// FR(k): rules see only the mode and the state.
StrategyPtr make_fr(std::string name, std::int64_t k, std::int64_t initial,
                    std::function<Dist<std::size_t>(std::int64_t mode, const StateId&, Degree)> choose,
                    std::function<Dist<std::int64_t>(std::int64_t mode, const StateId& from, std::size_t index, const OutEdge&)> update);
/// Step counter plus k bits of memory; modes are bit patterns in [0, 2^k).
StrategyPtr make_kbit(std::string name, int bits,
                      std::function<Dist<std::size_t>(std::int64_t pattern, std::int64_t steps, const StateId&)> choose,
                      std::function<Dist<std::int64_t>(std::int64_t pattern, std::int64_t steps, const StateId& from, std::size_t index)> update);
/// Unrestricted memory: mode is any integer.
StrategyPtr make_hd(std::string name, std::int64_t initial, ChoiceRule choose, UpdateRule update);

/// FR machine description, loadable from text:
///   modes 3
///   initial 0
///   choose <mode|*> <role|*> -> <target>:<prob> ...      target: index | mode | top
///   update <mode|*> <role|*> <branch|*|>=N> -> <next>:<prob> ...
///          next: mode number | keep | clamp-branch | branch-mod
/// The first matching line wins; unmatched choices take edge 0 and unmatched updates keep the mode.
struct FrSpec {
  struct Pattern {
    std::optional<std::int64_t> mode;
    std::optional<std::string> role;
    std::optional<std::int64_t> branch_eq, branch_ge;
    bool matches(std::int64_t m, const StateId& s) const;
  };
  struct Target {
    enum Kind { Index, Mode, Top, Keep, ClampBranch, BranchMod } kind = Index;
    std::int64_t value = 0;
    Rational prob = 1;
  };
  struct Line {
    Pattern pattern;
    std::vector<Target> targets;
  };
  std::string name = "fr";
  std::int64_t modes = 1;
  std::int64_t initial = 0;
  std::vector<Line> choose, update;

  static FrSpec parse(const std::string& text);
  static FrSpec load(const std::string& path);
  std::string str() const;
  StrategyPtr build() const;
};

/// Distribution over the next edge after a partial run, marginalizing the (possibly randomized)
/// mode sequence given the run. Throws NotControlled at random states.
Dist<std::size_t> act(const Strategy& sigma, const Mdp& mdp, const Run& run);

/// Markov chain on (state, mode) pairs for a finite-memory strategy on a finite fragment.
struct InducedChain {
  struct Node {
    StateId state;
    std::int64_t mode;
    bool inside;
  };
  struct Entry {
    std::size_t to;
    Rational prob;
    std::size_t edge;
    Rational reward;
  };
  std::vector<Node> nodes;
  /// Rows for inside nodes; nodes outside the fragment have empty rows.
  std::vector<std::vector<Entry>> rows;
  std::size_t find(const StateId& s, std::int64_t mode) const;

  std::unordered_map<std::string, std::size_t> index;
};

/// Explores from the roots (with the given modes) while `inside` holds. Throws NotFiniteMemory
/// for classes other than MD and FR, and std::length_error past `max_nodes`.
InducedChain induced_chain(const Mdp& mdp, const Strategy& sigma, const std::vector<std::pair<StateId, std::int64_t>>& roots,
                           const std::function<bool(const StateId&)>& inside, std::size_t max_nodes = 1'000'000);

}  // namespace cmdp
