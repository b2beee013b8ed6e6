#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmdp/interval.hpp"
#include "cmdp/kv.hpp"
#include "cmdp/mdp.hpp"
#include "cmdp/monitor.hpp"
#include "cmdp/schedule.hpp"
#include "cmdp/strategy.hpp"

namespace cmdp {

struct VariantMismatch : std::logic_error {
  using std::logic_error::logic_error;
};
struct ScheduleRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

enum class ChainVariant { StepImplicit, RewardImplicit, Restart, RestartRewardImplicit };
std::string to_string(ChainVariant v);
ChainVariant parse_chain_variant(const std::string& text);

struct ChainOptions {
  ChainVariant variant = ChainVariant::StepImplicit;
  /// Binary random and controlled trees of depth ceil(lg(k+1)) with padding.
  bool binary = false;
  /// Swap a faithful schedule for its rationalized counterpart.
  bool rationalized = false;
  /// Rewards in {-1, 0, +1}; large rewards become runs of unit edges.
  bool bounded = false;
};

/// What a transition into a state tells the bookkeeping of exact DP and simulation.
struct NodeTag {
  enum Kind { None, Up, Down, Restart, Sink } kind = None;
  std::int64_t branch = 0;
};

/// The lower-bound chain: gadget blocks from N* on, a skip column, a losing sink and, for
/// restart variants, one fresh copy of the chain per restart (StateId::row).
///
/// State roles, with n the block index in StateId::gadget:
///   start, bot                          entry choice (play / skip) and the -1 sink
///   s, rs, rp                           random fan (or binary tree and its padding)
///   up                                  path after random branch i (branch = i)
///   c, cs, cp                           controlled fan (or binary tree and its padding)
///   ng, dn, ps, pb                      path after controlled branch x; dn/x/0 holds the escape
///   w, wr, wc                           skip column (branch = entry block), re-entry, continue
///   r, b                                restart path (branch = x)
class GadgetChain final : public Mdp {
 public:
  GadgetChain(ScheduleRef schedule, ChainOptions options);

  const Schedule& schedule() const { return *sched_; }
  ScheduleRef schedule_ref() const { return sched_; }
  const ChainOptions& options() const { return opt_; }
  bool reward_implicit() const;
  bool restarts() const;
  std::int64_t n_star() const { return sched_->n_star(); }

  StateId initial() const override { return start(); }
  StateKind kind(const StateId& s) const override;
  Degree degree(const StateId& s) const override;
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override;

  StateId start() const { return make_state(0, "start"); }
  StateId bottom() const { return make_state(0, "bot"); }
  StateId block_entry(std::int64_t n, std::int64_t row = 0) const { return make_state(n, "s", 0, 0, row); }
  StateId controlled(std::int64_t n, std::int64_t row = 0) const { return make_state(n, "c", 0, 0, row); }
  StateId column_bottom(std::int64_t n, std::int64_t entry, std::int64_t row = 0) const {
    return make_state(n, "w", entry, 0, row);
  }

  /// Edges of block n in the step-implicit layout (also the column height plus re-entry).
  std::int64_t block_length(std::int64_t n) const;
  /// Depth of s_n; every path from the start to s_n has this length (step-implicit layouts).
  std::int64_t depth_of_block(std::int64_t n) const;
  /// Declared depth of any state of a step-implicit layout.
  std::int64_t declared_depth(const StateId& s) const;
  /// Running total carried by every path into s (reward-implicit layouts, before any restart).
  Rational declared_total(const StateId& s) const;

  Integer m(std::int64_t n) const;
  int k(std::int64_t n) const { return sched_->k(n); }
  /// Tree depth of the random and controlled fans (1 without binary branching).
  int fan_depth(std::int64_t n) const;

  /// Edge index at a controlled fan node (c or cs) that leads toward branch x (clamped to k(n)).
  std::size_t route(const StateId& node, std::int64_t x) const;
  NodeTag tag(const StateId& s) const;
  StructuralFacts facts() const;

  /// Modes that let an FR machine remember any branch of any block.
  std::int64_t max_branches() const;

 private:
  struct Shape {
    int k = 0;
    Integer m;
    std::int64_t mi = 0;  // m as int64 when it fits
    int depth = 1;
    std::int64_t up = 1, down = 1, reentry = 1, length = 4;
    std::vector<std::int64_t> ri_up;  // reward-implicit up-path lengths n * m^i
    std::vector<Integer> ri_pow;      // m^i
  };
  const Shape& shape(std::int64_t n) const;
  Shape compute_shape(std::int64_t n) const;
  std::vector<OutEdge> edges(const StateId& s) const;
  std::vector<OutEdge> random_fan(const StateId& s, const Shape& sh) const;
  std::vector<OutEdge> controlled_fan(const StateId& s, const Shape& sh) const;
  StateId after_random_leaf(std::int64_t n, std::int64_t i, int depth, std::int64_t row) const;
  StateId after_controlled_leaf(std::int64_t n, std::int64_t x, int depth, std::int64_t row) const;
  OutEdge enter_down(std::int64_t n, std::int64_t x, std::int64_t row) const;
  std::vector<OutEdge> down_edges(const StateId& s, const Shape& sh) const;
  std::vector<OutEdge> escape_edge(std::int64_t n, std::int64_t x, std::int64_t row, const Rational& p) const;
  std::vector<OutEdge> restart_edges(const StateId& s) const;
  std::vector<OutEdge> column_edges(const StateId& s) const;
  std::int64_t restart_length(std::int64_t n) const;
  Integer ri_penalty(std::int64_t n) const;
  int node_depth(std::int64_t lo, std::int64_t hi, std::int64_t size) const;

  ScheduleRef sched_;
  ChainOptions opt_;
  mutable std::mutex mutex_;
  mutable std::map<std::int64_t, std::shared_ptr<const Shape>> shapes_;
  mutable std::map<std::int64_t, std::int64_t> depth_memo_;
  mutable std::map<std::int64_t, Integer> ri_depth_memo_;
};

using ChainPtr = std::shared_ptr<const GadgetChain>;

ChainPtr build_chain(ScheduleRef schedule, ChainOptions options = {});
/// Stand-alone block n (the chain restricted to block n, entered at s_n).
struct BlockFragment {
  ChainPtr chain;
  std::int64_t n;
  StateId entry;
  bool contains(const StateId& s) const;
};
BlockFragment build_block(ScheduleRef schedule, std::int64_t n, ChainOptions options = {});
ChainPtr build_reward_implicit(ScheduleRef schedule, bool binary = false, bool bounded = false);
ChainPtr build_restart(ScheduleRef schedule, ChainVariant variant = ChainVariant::Restart, bool binary = false,
                       bool bounded = false);
/// Strengthenings as chain-to-chain maps.
ChainPtr to_binary_branching(const GadgetChain& c);
ChainPtr rationalize(const GadgetChain& c);
ChainPtr bound_rewards(const GadgetChain& c);

/// Reproducible chain descriptor: schedule preset or inline schedule, variant and flags.
struct ChainManifest {
  std::string schedule_preset;
  KvFile schedule_inline;
  ChainOptions options;

  KvFile to_kv() const;
  static ChainManifest from_kv(const KvFile& kv, const std::string& prefix = "chain");
  ChainPtr build() const;
};

/// One path through block n from s_n, with random branch i and controlled branch x.
struct BlockPath {
  std::int64_t i = -1, x = -1;
  enum End { Next, Sink, Restart } end = Next;
  /// First state outside the block (or the sink / first restart state).
  StateId exit;
  /// Product of the random edge probabilities along the path.
  Rational prob = 1;
  Rational total = 0;
  std::int64_t length = 0;
  /// Least total/steps over nonempty prefixes, steps counted from s_n.
  Rational min_mean = 0;
};

struct BlockAudit {
  std::int64_t n = 0;
  std::vector<BlockPath> paths;
  /// Probability of reaching the up path of branch i (one entry per reachable i).
  std::map<std::int64_t, Rational> branch_prob;
  /// Every edge of a step-implicit block raises the declared depth by one.
  bool depth_consistent = true;
  std::size_t edges = 0;
};

/// All paths through block n: every random edge, and every controlled branch at c_n.
BlockAudit audit_block(const GadgetChain& chain, std::int64_t n, std::int64_t row = 0);

// ---- canonical strategies ----

/// Copy the random branch at the controlled fan. RC on step-implicit chains (the branch is
/// total / m_n at c_n); on reward-implicit chains the FR form is returned.
StrategyPtr mimic(ChainPtr chain);
/// Mimic with the branch kept in max_branches() memory modes.
StrategyPtr mimic_fr(ChainPtr chain);
/// Skip blocks below N_eps = skip_index(schedule, eps), then mimic.
StrategyPtr skip_then_mimic(ChainPtr chain, const Rational& eps, bool fr = false);
/// skip_then_mimic(1/2) restarted in every row; restart variants only.
StrategyPtr concat_half(ChainPtr chain, bool fr = false);
std::int64_t skip_target(const Schedule& s, const Rational& eps);

/// FR(k) test family for unary chains: the branch squeezed into k modes in several ways,
/// with randomized updates and choices among them.
std::vector<FrSpec> fr_family(int k);

// ---- small gadgets ----

/// Controlled s with edges j -> r_{j+1} (reward 0); r_i goes to t w.p. 2^-i (reward -1) and
/// back to s otherwise (reward 0); t -> s with reward +1.
class InfiniteBranchingGadget final : public Mdp {
 public:
  StateId initial() const override { return make_state(0, "s"); }
  StateKind kind(const StateId& s) const override;
  Degree degree(const StateId& s) const override;
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override;
  Rational tail_mass(const StateId& s, std::size_t from) const override;
};
MdpPtr build_infinite_branching();
/// HD strategy: branch k on the k-th visit to s (mode = visits so far).
StrategyPtr increasing_branch_strategy();
/// MD strategy fixing branch i >= 1.
StrategyPtr fixed_branch_strategy(std::int64_t i);
/// Lower and upper enclosure of prod_{k >= 1} (1 - 2^-k) from the first `terms` factors.
Interval never_hit_product(int terms = 60);
/// Least H with 1 - (1 - 2^-i)^H > target.
std::int64_t hit_horizon(std::int64_t i, const Rational& target);

/// Controlled s with a zero self-loop (edge 0) and edges j -> r_j (reward +1, j >= 1);
/// r_i -> bot w.p. 2^-i, else back to s (reward 0).
class GrowingMemory final : public Mdp {
 public:
  StateId initial() const override { return make_state(0, "s"); }
  StateKind kind(const StateId& s) const override;
  Degree degree(const StateId& s) const override;
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override;
  Rational tail_mass(const StateId& s, std::size_t from) const override;
};
MdpPtr build_growing_memory();
StructuralFacts growing_memory_facts();

/// s_k loops with reward -1/k (edge 0) or advances with reward -1 (edge 1).
class PutermanChain final : public Mdp {
 public:
  StateId initial() const override { return make_state(0, "s", 1); }
  StateKind kind(const StateId&) const override { return StateKind::Controlled; }
  Degree degree(const StateId&) const override { return 2; }
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override;
};
MdpPtr build_puterman();
/// ceil(exp(exp(k))) as an enclosure (exact integer while it fits a double mantissa).
Interval puterman_loops(std::int64_t k);
/// Step-counter strategy that loops puterman_loops(k) times at s_k (k small enough to count).
StrategyPtr puterman_strategy();
/// Running mean right after leaving s_k, in closed form.
Interval puterman_exit_mean(std::int64_t k);
/// The same value as an exact rational while every loop count is a known integer.
std::optional<Rational> puterman_exit_mean_exact(std::int64_t k);
/// Lower bound on the running mean over the whole stay at s_{k+1} (loops are monotone).
Interval puterman_phase_floor(std::int64_t k);

}  // namespace cmdp
