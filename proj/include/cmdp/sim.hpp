#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmdp/gadgets.hpp"
#include "cmdp/interval.hpp"
#include "cmdp/mdp.hpp"
#include "cmdp/monitor.hpp"
#include "cmdp/strategy.hpp"
#include "cmdp/transforms.hpp"

namespace cmdp {

/// Per-trial streams are SeedStream(master, trial): counter-mode splitmix64, so trial t of a
/// plan reproduces on its own without replaying the others.
inline constexpr const char* kTrialSeedScheme = "splitmix64-counter-v1/stream=trial";

struct TrialPlan {
  MdpPtr mdp;
  StrategyPtr strategy;
  /// Step cap for every trial.
  std::int64_t horizon_steps = 0;
  /// Optional earlier stop (e.g. the first state past the last block); checked after each step.
  std::function<bool(const StateId&)> stop;
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
  PayoffKind kind = PayoffKind::Mean;
  StructuralFacts facts;
  /// Optional tags for Bad bookkeeping on gadget chains.
  std::function<NodeTag(const StateId&)> tag;
  bool restart_is_bad = false;
  double confidence = 0.99;
  /// Fail loudly (std::runtime_error) above this fraction of Unknown verdicts.
  double max_unknown = 1.0;
};

struct WilsonInterval {
  double lo = 0, hi = 1;
  bool contains(double p) const { return lo <= p && p <= hi; }
};
WilsonInterval wilson(std::int64_t successes, std::int64_t trials, double confidence);

struct EstimateReport {
  std::string strategy;
  std::int64_t trials = 0;
  std::int64_t cert_win = 0, cert_lose = 0, unknown = 0;
  /// Runs that chose a branch above the copied one, fell into the sink or (if declared) restarted.
  std::int64_t bad = 0;
  /// at_least_restarts[i]: runs with at least i restarts.
  std::vector<std::int64_t> at_least_restarts;
  double confidence = 0.99;
  /// [Wilson lower bound of certWin, 1 - Wilson lower bound of certLose].
  double lo = 0, hi = 1;
  WilsonInterval win, lose, bad_ci;
  std::uint64_t seed = 0;
  std::string seed_scheme = kTrialSeedScheme;
  std::int64_t steps = 0;
  double wall_seconds = 0;

  nlohmann::json to_json() const;
};

/// Monte Carlo estimate. Deterministic in the plan: counts do not depend on scheduling.
EstimateReport run_trials(const TrialPlan& plan);
/// Plan that runs `blocks` blocks of a chain from the start (stopping on the first state of a later block).
TrialPlan chain_plan(ChainPtr chain, StrategyPtr sigma, std::int64_t blocks, std::int64_t trials, std::uint64_t seed);

/// One sampled run of `steps` steps.
Run sample_run(const Mdp& mdp, const Strategy& sigma, SeedStream& rng, std::int64_t steps);

// ---- exact dynamic programming on chains ----

/// Which controlled choices count as Bad: none, those above the copied branch, or any other branch.
enum class ChoiceBad { None, Over, Mismatch };

struct BlockDpOptions {
  /// Blocks N* .. N* + blocks - 1 are played out.
  std::int64_t blocks = 1;
  bool restart_is_bad = false;
  ChoiceBad choice_bad = ChoiceBad::Over;
  /// Probability mass below this is dropped (Interval mode only; zero keeps everything).
  double prune = 0;
};

template <class Num>
struct BlockDpResult {
  std::int64_t first = 0;
  /// alive[j]: probability of crossing into block first + j + 1 with no Bad event so far.
  std::vector<Num> alive;
  /// bad = sink + over_choice (+ restart when restarts are Bad); each counts first Bad events only.
  Num bad, sink, over_choice, restart;
  /// at_least_restarts[i]: probability of reaching restart row i within the horizon.
  std::vector<Num> at_least_restarts;
  /// Mass dropped by `prune`; every probability above may be short by at most this much.
  Num pruned;
  std::size_t nodes = 0;
};

/// Forward DP over (state, memory mode, copied branch) in the chain's topological order.
/// Throws NotFiniteMemory unless sigma is MD or FR.
template <class Num>
BlockDpResult<Num> exact_block_dp(const GadgetChain& chain, const Strategy& sigma, const BlockDpOptions& options);

extern template BlockDpResult<Rational> exact_block_dp<Rational>(const GadgetChain&, const Strategy&, const BlockDpOptions&);
extern template BlockDpResult<Interval> exact_block_dp<Interval>(const GadgetChain&, const Strategy&, const BlockDpOptions&);

/// Topological key of a chain state: every edge strictly increases it (sink excepted).
std::tuple<std::int64_t, int, std::int64_t> chain_order_key(const StateId& s);

// ---- finite-horizon safety ----

using TransitionSet = std::function<bool(const StateId& from, std::size_t index, const OutEdge& edge)>;

/// sup over strategies of P(no transition in T during the first k steps), by backward induction
/// over the k-step bubble. Throws InfiniteBranching on infinitely branching states.
Rational finite_horizon_safety_value(const Mdp& mdp, const TransitionSet& T, std::int64_t k);

// ---- encodings ----

/// Random finite MDP on at most max_states states with small rational rewards and probabilities.
std::shared_ptr<TableMdp> random_table_mdp(SeedStream& rng, int max_states);

struct EquivalenceReport {
  std::int64_t mdps = 0, runs = 0, entries = 0, mismatches = 0;
  std::vector<std::string> first_failures;
};

/// For `count` random MDPs and each encoding: an MD strategy on the encoding (and a Markov one on
/// the reward encoding) against its pull-back on the base MDP, with shared seeds over `horizon`
/// steps. Compares the encoded point rewards with the matching payoff sequence of the base run.
EquivalenceReport transform_equivalence(std::uint64_t seed, int count, int max_states, std::int64_t horizon);

}  // namespace cmdp
