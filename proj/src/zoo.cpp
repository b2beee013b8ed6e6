#include <algorithm>
#include <cmath>

#include "cmdp/gadgets.hpp"

namespace cmdp {

namespace {

Rational half_pow(std::int64_t i) {
  Rational p = 1;
  mpz_mul_2exp(p.get_den_mpz_t(), p.get_den_mpz_t(), static_cast<mp_bitcnt_t>(i));
  return p;
}

std::int64_t positive_index(const StateId& s) {
  if (s.branch < 1) throw UnknownState("index must be positive: " + s.str());
  return s.branch;
}

OutEdge go(StateId to, Rational reward) { return OutEdge{std::move(to), std::move(reward), std::nullopt, 0}; }
OutEdge go(StateId to, Rational reward, Rational p) { return OutEdge{std::move(to), std::move(reward), std::move(p), 0}; }

}  // namespace

// ---- infinite branching ----

StateKind InfiniteBranchingGadget::kind(const StateId& s) const {
  if (s.role == "s" || s.role == "t") return StateKind::Controlled;
  if (s.role == "r") return StateKind::Random;
  throw UnknownState("not a state of the branching gadget: " + s.str());
}

Degree InfiniteBranchingGadget::degree(const StateId& s) const {
  if (s.role == "s") return std::nullopt;
  return s.role == "r" ? 2 : 1;
}

std::vector<OutEdge> InfiniteBranchingGadget::successors(const StateId& s, std::size_t limit) const {
  std::vector<OutEdge> out;
  if (s.role == "s") {
    for (std::size_t j = 0; j < limit; ++j) out.push_back(go(make_state(0, "r", static_cast<std::int64_t>(j) + 1), 0));
  } else if (s.role == "r") {
    const Rational p = half_pow(positive_index(s));
    out = {go(make_state(0, "t"), -1, p), go(initial(), 0, 1 - p)};
  } else if (s.role == "t") {
    out = {go(initial(), 1)};
  } else {
    throw UnknownState("not a state of the branching gadget: " + s.str());
  }
  if (out.size() > limit) out.resize(limit);
  return out;
}

Rational InfiniteBranchingGadget::tail_mass(const StateId&, std::size_t) const { return 0; }

MdpPtr build_infinite_branching() { return std::make_shared<InfiniteBranchingGadget>(); }

StrategyPtr increasing_branch_strategy() {
  return make_hd(
      "increasing-branch", 0,
      [](const Memory& m, const StateId& s, Degree) -> Dist<std::size_t> {
        return dirac<std::size_t>(s.role == "s" ? static_cast<std::size_t>(m.mode) : 0);
      },
      [](const Memory& m, const StateId& from, std::size_t, const OutEdge&) -> Dist<std::int64_t> {
        return dirac(from.role == "s" ? m.mode + 1 : m.mode);
      });
}

StrategyPtr fixed_branch_strategy(std::int64_t i) {
  if (i < 1) throw std::invalid_argument("branch index must be positive");
  return make_md("branch-" + std::to_string(i), [i](const StateId& s) -> std::size_t {
    return s.role == "s" ? static_cast<std::size_t>(i - 1) : 0;
  });
}

Interval never_hit_product(int terms) {
  if (terms < 1) throw std::invalid_argument("never_hit_product needs terms >= 1");
  Interval p(1L);
  for (int k = 1; k <= terms; ++k) p *= Interval(1 - half_pow(k));
  // The tail prod_{k > T} (1 - 2^-k) lies in [1 - 2^-T, 1].
  const Interval tail_lo = p * Interval(1 - half_pow(terms));
  return Interval::from_bounds(tail_lo.lo(), p.hi());
}

std::int64_t hit_horizon(std::int64_t i, const Rational& target) {
  if (i < 1 || target <= 0 || target >= 1) throw std::invalid_argument("hit_horizon needs i >= 1 and 0 < target < 1");
  const Rational miss = 1 - half_pow(i);
  // H > log(1 - target) / log(miss); refine the floor exactly when the enclosure straddles an integer.
  const Interval x = log(Interval(1 - target)) / log(Interval(miss));
  auto lo = static_cast<std::int64_t>(std::floor(x.lo_d()));
  const auto hi = static_cast<std::int64_t>(std::floor(x.hi_d()));
  auto hits = [&](std::int64_t h) {
    Rational q = 1;
    for (std::int64_t e = 0; e < h; ++e) q *= miss;
    return 1 - q > target;
  };
  if (lo == hi) return lo + 1;
  for (lo = std::max<std::int64_t>(lo, 0); !hits(lo); ++lo) {
  }
  return lo;
}

// ---- growing memory ----

StateKind GrowingMemory::kind(const StateId& s) const {
  if (s.role == "s" || s.role == "bot") return StateKind::Controlled;
  if (s.role == "r") return StateKind::Random;
  throw UnknownState("not a state of the memory gadget: " + s.str());
}

Degree GrowingMemory::degree(const StateId& s) const {
  if (s.role == "s") return std::nullopt;
  return s.role == "r" ? 2 : 1;
}

std::vector<OutEdge> GrowingMemory::successors(const StateId& s, std::size_t limit) const {
  std::vector<OutEdge> out;
  if (s.role == "s") {
    for (std::size_t j = 0; j < limit; ++j)
      out.push_back(j == 0 ? go(initial(), 0) : go(make_state(0, "r", static_cast<std::int64_t>(j)), 1));
  } else if (s.role == "r") {
    const Rational p = half_pow(positive_index(s));
    out = {go(make_state(0, "bot"), 0, p), go(initial(), 0, 1 - p)};
  } else if (s.role == "bot") {
    out = {go(s, -1)};
  } else {
    throw UnknownState("not a state of the memory gadget: " + s.str());
  }
  if (out.size() > limit) out.resize(limit);
  return out;
}

Rational GrowingMemory::tail_mass(const StateId&, std::size_t) const { return 0; }

MdpPtr build_growing_memory() { return std::make_shared<GrowingMemory>(); }

StructuralFacts growing_memory_facts() {
  return StructuralFacts{[](const StateId& s) { return s.role == "bot"; }, {}};
}

// ---- slowly decaying loops ----

std::vector<OutEdge> PutermanChain::successors(const StateId& s, std::size_t limit) const {
  if (s.role != "s") throw UnknownState("not a state of the loop chain: " + s.str());
  const std::int64_t k = positive_index(s);
  std::vector<OutEdge> out{go(s, Rational(-1) / Rational(k)), go(make_state(0, "s", k + 1), -1)};
  if (out.size() > limit) out.resize(limit);
  return out;
}

MdpPtr build_puterman() { return std::make_shared<PutermanChain>(); }

Interval puterman_loops(std::int64_t k) {
  if (k < 1) throw std::invalid_argument("loop counts start at k = 1");
  return ceil(exp(exp(Interval(static_cast<long>(k)))));
}

namespace {
/// Steps spent before entering s_k, for every k whose loop count fits in 64 bits.
const std::vector<std::int64_t>& puterman_entries() {
  static const std::vector<std::int64_t> entries = [] {
    std::vector<std::int64_t> e{0, 0};  // e[k] = step at which s_k is entered, e[1] = 0
    for (std::int64_t k = 1;; ++k) {
      const Interval c = puterman_loops(k);
      if (c.hi_d() > 1e15 || c.lo_d() != c.hi_d()) break;
      e.push_back(e.back() + static_cast<std::int64_t>(c.lo_d()) + 1);
    }
    return e;
  }();
  return entries;
}
}  // namespace

StrategyPtr puterman_strategy() {
  return make_markov("loop-schedule", [](const StateId& s, std::int64_t steps) -> Dist<std::size_t> {
    const auto& e = puterman_entries();
    const auto k = static_cast<std::size_t>(s.branch);
    if (k + 1 >= e.size()) return dirac<std::size_t>(0);
    return dirac<std::size_t>(steps + 1 >= e[k + 1] ? 1 : 0);
  });
}

Interval puterman_exit_mean(std::int64_t k) {
  Interval total(0L), steps(0L);
  for (std::int64_t j = 1; j <= k; ++j) {
    const Interval c = puterman_loops(j);
    total = total - c / Interval(static_cast<long>(j)) - Interval(1L);
    steps = steps + c + Interval(1L);
  }
  return total / steps;
}

std::optional<Rational> puterman_exit_mean_exact(std::int64_t k) {
  Rational total = 0, steps = 0;
  for (std::int64_t j = 1; j <= k; ++j) {
    const Interval c = puterman_loops(j);
    if (c.lo_d() != c.hi_d() || c.hi_d() > 1e15) return std::nullopt;
    const Rational loops(static_cast<long>(c.lo_d()));
    total -= loops / j + 1;
    steps += loops + 1;
  }
  return Rational(total / steps);
}

Interval puterman_phase_floor(std::int64_t k) { return min(puterman_exit_mean(k), puterman_exit_mean(k + 1)); }

}  // namespace cmdp
