#include "cmdp/sim.hpp"

#include <boost/math/distributions/normal.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_map>

namespace cmdp {

WilsonInterval wilson(std::int64_t successes, std::int64_t trials, double confidence) {
  if (trials <= 0) throw std::invalid_argument("wilson needs trials >= 1");
  if (!(confidence > 0 && confidence < 1)) throw std::invalid_argument("confidence must lie in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 1 - (1 - confidence) / 2);
  const double n = static_cast<double>(trials), p = static_cast<double>(successes) / n;
  const double denom = 1 + z * z / n;
  const double centre = (p + z * z / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

nlohmann::json EstimateReport::to_json() const {
  return {{"strategy", strategy},
          {"trials", trials},
          {"certWin", cert_win},
          {"certLose", cert_lose},
          {"unknown", unknown},
          {"bad", bad},
          {"at_least_restarts", at_least_restarts},
          {"confidence", confidence},
          {"lo", lo},
          {"hi", hi},
          {"win_wilson", {win.lo, win.hi}},
          {"lose_wilson", {lose.lo, lose.hi}},
          {"bad_wilson", {bad_ci.lo, bad_ci.hi}},
          {"seed", seed},
          {"seed_scheme", seed_scheme},
          {"steps", steps},
          {"wall_seconds", wall_seconds}};
}

namespace {

template <class T>
T sample_dist(const Dist<T>& d, SeedStream& rng) {
  if (d.size() == 1) return d.front().first;
  std::vector<Rational> probs;
  probs.reserve(d.size());
  for (const auto& [v, p] : d) probs.push_back(p);
  return d[sample_index(probs, rng)].first;
}

bool finite_memory(const Strategy& s) { return s.cls().tag == StrategyTag::MD || s.cls().tag == StrategyTag::FR; }

/// Lazily interned view of an MDP for fast repeated simulation.
class Compiled {
 public:
  struct Edge {
    int to = -1;
    StateId target;
    Rational reward;
    bool zero = true;
  };
  struct Node {
    StateId id;
    StateKind kind = StateKind::Controlled;
    Degree degree;
    bool expanded = false;
    std::vector<Edge> edges;
    std::vector<std::uint64_t> thresholds;
    NodeTag tag;
    bool certain = false;
    std::map<std::int64_t, Dist<std::size_t>> choice;
    std::map<std::pair<std::size_t, std::int64_t>, Dist<std::int64_t>> update;
  };

  Compiled(const Mdp& mdp, const TrialPlan& plan) : mdp_(mdp), plan_(plan) {}

  int intern(const StateId& s) {
    if (auto it = index_.find(s); it != index_.end()) return it->second;
    const int id = static_cast<int>(nodes_.size());
    Node& n = nodes_.emplace_back();
    n.id = s;
    n.kind = mdp_.kind(s);
    n.degree = mdp_.degree(s);
    if (plan_.tag) n.tag = plan_.tag(s);
    n.certain = (plan_.facts.losing && plan_.facts.losing(s)) || (plan_.facts.winning && plan_.facts.winning(s));
    index_.emplace(s, id);
    return id;
  }

  Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }

  /// Edge i of node u, expanding (and for infinite branching, extending) as needed.
  Edge& edge(int u, std::size_t i) {
    Node& n = node(u);
    if (!n.expanded || n.edges.size() <= i) {
      std::size_t limit = n.degree ? *n.degree : std::max<std::size_t>(2 * (i + 1), 8);
      auto out = mdp_.successors(n.id, limit);
      if (out.size() <= i) throw BadChoice("edge index out of range at " + n.id.str());
      n.edges.clear();
      n.thresholds.clear();
      Rational cum = 0;
      for (auto& e : out) {
        Edge c;
        c.target = std::move(e.target);
        c.zero = e.reward == 0;
        c.reward = std::move(e.reward);
        if (e.prob) {
          cum += *e.prob;
          n.thresholds.push_back(threshold64(cum));
        }
        n.edges.push_back(std::move(c));
      }
      n.expanded = true;
    }
    Edge& e = node(u).edges[i];
    if (e.to < 0) {
      const int t = intern(e.target);
      node(u).edges[i].to = t;
    }
    return node(u).edges[i];
  }

  std::size_t sample_random(int u, SeedStream& rng) {
    Node& n = node(u);
    if (!n.degree) return sample_edge(mdp_, n.id, rng);
    if (!n.expanded) edge(u, 0);
    Node& m = node(u);
    const std::uint64_t draw = rng.next();
    for (std::size_t i = 0; i + 1 < m.thresholds.size(); ++i)
      if (draw < m.thresholds[i]) return i;
    return m.thresholds.empty() ? 0 : m.thresholds.size() - 1;
  }

 private:
  const Mdp& mdp_;
  const TrialPlan& plan_;
  std::unordered_map<StateId, int, StateIdHash> index_;
  std::deque<Node> nodes_;
};

}  // namespace

EstimateReport run_trials(const TrialPlan& plan) {
  if (!plan.mdp || !plan.strategy) throw std::invalid_argument("trial plan needs an MDP and a strategy");
  if (plan.horizon_steps < 1 || plan.trials < 1) throw std::invalid_argument("horizon and trials must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const Strategy& sigma = *plan.strategy;
  const bool cache = finite_memory(sigma);
  Compiled g(*plan.mdp, plan);
  const int root = g.intern(plan.mdp->initial());

  EstimateReport r;
  r.strategy = sigma.name();
  r.trials = plan.trials;
  r.seed = plan.seed;
  r.confidence = plan.confidence;
  r.at_least_restarts = {plan.trials};

  for (std::int64_t t = 0; t < plan.trials; ++t) {
    SeedStream rng(plan.seed, static_cast<std::uint64_t>(t));
    Memory mem = sigma.initial_memory();
    MonitorState mon;
    int u = root;
    std::int64_t label = -1, restarts = 0;
    bool bad = false;
    for (std::int64_t step = 0; step < plan.horizon_steps; ++step) {
      if (g.node(u).certain) break;
      const Compiled::Node& n = g.node(u);
      std::size_t idx = 0;
      if (n.kind == StateKind::Random) {
        idx = g.sample_random(u, rng);
      } else if (!n.degree || *n.degree != 1) {
        if (cache) {
          auto& slot = g.node(u).choice[mem.mode];
          if (slot.empty()) slot = sigma.choose(mem, g.node(u).id, g.node(u).degree);
          idx = sample_dist(slot, rng);
        } else {
          idx = sigma.sample_choice(mem, g.node(u).id, g.node(u).degree, rng);
        }
      }
      g.edge(u, idx);
      if (sigma.randomized_update()) {
        if (cache) {
          auto& slot = g.node(u).update[{idx, mem.mode}];
          if (slot.empty()) {
            const Compiled::Edge& ce = g.node(u).edges[idx];
            slot = sigma.update(mem, g.node(u).id, idx, OutEdge{ce.target, ce.reward, std::nullopt, 0});
          }
          mem.mode = sample_dist(slot, rng);
        } else {
          const Compiled::Edge& ce = g.node(u).edges[idx];
          mem.mode = sample_dist(sigma.update(mem, g.node(u).id, idx, OutEdge{ce.target, ce.reward, std::nullopt, 0}), rng);
        }
      }
      const Compiled::Edge& ce = g.node(u).edges[idx];
      ++mem.steps;
      if (!ce.zero) mem.total += ce.reward;
      mon = observe(mon, ce.reward);
      u = ce.to;
      ++r.steps;
      const Compiled::Node& v = g.node(u);
      switch (v.tag.kind) {
        case NodeTag::Up: label = v.tag.branch; break;
        case NodeTag::Down:
          if (v.tag.branch > label) bad = true;
          break;
        case NodeTag::Restart:
          ++restarts;
          if (plan.restart_is_bad) bad = true;
          break;
        case NodeTag::Sink: bad = true; break;
        case NodeTag::None: break;
      }
      if (plan.stop && plan.stop(v.id)) break;
    }
    const Verdict verdict_now = verdict(plan.facts, g.node(u).id, mon, plan.kind);
    if (verdict_now.outcome == Outcome::Win) ++r.cert_win;
    else if (verdict_now.outcome == Outcome::Lose) ++r.cert_lose;
    else ++r.unknown;
    if (bad) ++r.bad;
    if (static_cast<std::int64_t>(r.at_least_restarts.size()) <= restarts) r.at_least_restarts.resize(static_cast<std::size_t>(restarts) + 1, 0);
    for (std::int64_t i = 1; i <= restarts; ++i) ++r.at_least_restarts[static_cast<std::size_t>(i)];
  }

  r.win = wilson(r.cert_win, r.trials, r.confidence);
  r.lose = wilson(r.cert_lose, r.trials, r.confidence);
  r.bad_ci = wilson(r.bad, r.trials, r.confidence);
  r.lo = r.win.lo;
  r.hi = 1 - r.lose.lo;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double unknown_fraction = static_cast<double>(r.unknown) / static_cast<double>(r.trials);
  if (unknown_fraction > plan.max_unknown)
    throw std::runtime_error("unknown verdicts on " + std::to_string(unknown_fraction) + " of the trials exceed the declared maximum " +
                             std::to_string(plan.max_unknown));
  return r;
}

TrialPlan chain_plan(ChainPtr chain, StrategyPtr sigma, std::int64_t blocks, std::int64_t trials, std::uint64_t seed) {
  if (blocks < 1) throw std::invalid_argument("horizon must cover at least one block");
  TrialPlan p;
  const std::int64_t end = chain->n_star() + blocks;
  p.mdp = chain;
  p.strategy = std::move(sigma);
  p.horizon_steps = chain->reward_implicit() ? std::numeric_limits<std::int64_t>::max() : chain->depth_of_block(end);
  p.stop = [end](const StateId& s) { return s.gadget >= end && s.role != "bot"; };
  p.trials = trials;
  p.seed = seed;
  p.facts = chain->facts();
  p.tag = [chain](const StateId& s) { return chain->tag(s); };
  return p;
}

Run sample_run(const Mdp& mdp, const Strategy& sigma, SeedStream& rng, std::int64_t steps) {
  Run run(mdp.initial());
  Memory mem = sigma.initial_memory();
  for (std::int64_t i = 0; i < steps; ++i) {
    const StateId s = run.last();
    const std::size_t idx =
        mdp.kind(s) == StateKind::Random ? sample_edge(mdp, s, rng) : sigma.sample_choice(mem, s, mdp.degree(s), rng);
    auto edges = mdp.successors(s, idx + 1);
    if (edges.size() <= idx) throw BadChoice("edge index out of range at " + s.str());
    sigma.advance(mem, s, idx, edges[idx], rng);
    run.push(Transition{idx, edges[idx].reward}, edges[idx].target);
  }
  return run;
}

// ---- exact DP ----

std::tuple<std::int64_t, int, std::int64_t> chain_order_key(const StateId& s) {
  constexpr auto lowest = std::numeric_limits<std::int64_t>::min();
  const std::string& r = s.role;
  if (r == "start") return {-1, 0, 0};
  if (r == "bot") return {std::numeric_limits<std::int64_t>::max(), 0, 0};
  const std::int64_t n = s.gadget;
  if (r == "s") return {n, 0, lowest};
  if (r == "rs") return {n, 0, -(s.offset - s.branch)};
  if (r == "rp" || r == "w") return {n, 0, s.offset};
  if (r == "up") return {n, 1, s.offset};
  if (r == "c") return {n, 2, lowest};
  if (r == "cs") return {n, 2, -(s.offset - s.branch)};
  if (r == "cp") return {n, 2, s.offset};
  if (r == "ng") return {n, 3, s.offset};
  if (r == "dn") return {n, 4, s.offset};
  if (r == "ps" || r == "pb") return {n, 5, s.offset};
  if (r == "r" || r == "b") return {n, 6, s.offset};
  if (r == "wr" || r == "wc") return {n, 7, s.offset};
  throw UnknownState("no order key for " + s.str());
}

namespace {

template <class Num>
Num as_num(const Rational& q) {
  if constexpr (std::is_same_v<Num, Rational>) return q;
  else return Interval(q);
}

/// Edge weight; in Interval mode it also covers the distance to the true probability.
template <class Num>
Num edge_weight(const OutEdge& e) {
  if constexpr (std::is_same_v<Num, Rational>) {
    if (e.prob_err != 0) throw std::domain_error("rational DP on approximate probabilities; use the interval form");
    return *e.prob;
  } else {
    if (e.prob_err == 0) return Interval(*e.prob);
    return Interval::hull(Interval(*e.prob - e.prob_err), Interval(*e.prob + e.prob_err));
  }
}

template <class Num>
bool negligible(const Num& x, double prune) {
  if constexpr (std::is_same_v<Num, Rational>) return x == 0;
  else return x.hi_d() <= prune;
}

}  // namespace

template <class Num>
BlockDpResult<Num> exact_block_dp(const GadgetChain& chain, const Strategy& sigma, const BlockDpOptions& opt) {
  if (!finite_memory(sigma)) throw NotFiniteMemory("exact DP needs an MD or FR strategy, got " + sigma.cls().str());
  if (opt.blocks < 1) throw std::invalid_argument("exact DP needs at least one block");
  const std::int64_t first = chain.n_star(), last = first + opt.blocks - 1;
  BlockDpResult<Num> res;
  res.first = first;
  res.alive.assign(static_cast<std::size_t>(opt.blocks), Num(0L));
  res.bad = res.sink = res.over_choice = res.restart = res.pruned = Num(0L);
  res.at_least_restarts = {Num(1L)};

  using Key = std::tuple<std::int64_t, int, std::int64_t, std::string>;
  struct Bucket {
    StateId state;
    std::map<std::pair<std::int64_t, std::int64_t>, Num> mass;  // (mode, copied branch)
  };
  std::map<Key, Bucket> queue;
  auto push = [&](const StateId& s, std::int64_t mode, std::int64_t label, const Num& m) {
    auto [a, b, c] = chain_order_key(s);
    auto& bucket = queue[Key{a, b, c, s.str()}];
    if (bucket.mass.empty()) bucket.state = s;
    auto [it, fresh] = bucket.mass.try_emplace({mode, label}, m);
    if (!fresh) it->second = it->second + m;
  };
  push(chain.start(), sigma.initial_memory().mode, -1, Num(1L));

  while (!queue.empty()) {
    auto node = queue.extract(queue.begin());
    const Bucket& b = node.mapped();
    const StateId& u = b.state;
    ++res.nodes;
    const auto edges = chain.successors(u, 1 << 20);
    const bool random = chain.kind(u) == StateKind::Random;
    for (const auto& [ml, p] : b.mass) {
      const auto [mode, label] = ml;
      if (negligible(p, opt.prune)) {
        res.pruned = res.pruned + p;
        continue;
      }
      Dist<std::size_t> choice;
      if (random) {
        for (std::size_t i = 0; i < edges.size(); ++i) choice.emplace_back(i, *edges[i].prob);
      } else {
        choice = sigma.choose(Memory{mode, 0, 0}, u, Degree(edges.size()));
      }
      for (const auto& [idx, w] : choice) {
        if (w == 0) continue;
        const OutEdge& e = edges.at(idx);
        const Num pw = p * (random ? edge_weight<Num>(e) : as_num<Num>(w));
        for (const auto& [next_mode, w2] : sigma.update(Memory{mode, 0, 0}, u, idx, e)) {
          if (w2 == 0) continue;
          const Num m = w2 == 1 ? pw : pw * as_num<Num>(w2);
          const StateId& v = e.target;
          const NodeTag tag = chain.tag(v);
          std::int64_t next_label = label;
          if (tag.kind == NodeTag::Sink) {
            res.sink = res.sink + m;
            res.bad = res.bad + m;
            continue;
          }
          if (tag.kind == NodeTag::Up) next_label = tag.branch;
          const bool wrong = opt.choice_bad == ChoiceBad::Mismatch ? tag.branch != label : tag.branch > label;
          if (tag.kind == NodeTag::Down && opt.choice_bad != ChoiceBad::None && wrong) {
            res.over_choice = res.over_choice + m;
            res.bad = res.bad + m;
            continue;
          }
          if (tag.kind == NodeTag::Restart) {
            res.restart = res.restart + m;
            const auto row = static_cast<std::size_t>(u.row + 1);
            if (res.at_least_restarts.size() <= row) res.at_least_restarts.resize(row + 1, Num(0L));
            res.at_least_restarts[row] = res.at_least_restarts[row] + m;
            if (opt.restart_is_bad) {
              res.bad = res.bad + m;
              continue;
            }
          }
          const std::int64_t from_block = u.role == "start" ? first : u.gadget;
          for (std::int64_t B = std::max(from_block, first) + 1; B <= std::min(v.gadget, last + 1); ++B)
            res.alive[static_cast<std::size_t>(B - first - 1)] = res.alive[static_cast<std::size_t>(B - first - 1)] + m;
          if (v.gadget > last) continue;
          push(v, next_mode, next_label, m);
        }
      }
    }
  }
  return res;
}

template BlockDpResult<Rational> exact_block_dp<Rational>(const GadgetChain&, const Strategy&, const BlockDpOptions&);
template BlockDpResult<Interval> exact_block_dp<Interval>(const GadgetChain&, const Strategy&, const BlockDpOptions&);

// ---- finite-horizon safety ----

Rational finite_horizon_safety_value(const Mdp& mdp, const TransitionSet& T, std::int64_t k) {
  if (k < 0) throw std::invalid_argument("horizon must be non-negative");
  std::map<std::pair<std::string, std::int64_t>, Rational> memo;
  std::function<Rational(const StateId&, std::int64_t)> value = [&](const StateId& s, std::int64_t left) -> Rational {
    if (left == 0) return 1;
    const auto key = std::make_pair(s.str(), left);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const Degree d = mdp.degree(s);
    if (!d) throw InfiniteBranching("finite-horizon safety needs finite branching at " + s.str());
    const auto edges = mdp.successors(s, *d);
    const bool random = mdp.kind(s) == StateKind::Random;
    Rational v = 0;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const Rational w = T(s, i, edges[i]) ? Rational(0) : value(edges[i].target, left - 1);
      if (random) v += *edges[i].prob * w;
      else if (w > v) v = w;
    }
    memo.emplace(key, v);
    return v;
  };
  return value(mdp.initial(), k);
}

// ---- encodings ----

std::shared_ptr<TableMdp> random_table_mdp(SeedStream& rng, int max_states) {
  if (max_states < 1) throw std::invalid_argument("need at least one state");
  const auto count = static_cast<std::int64_t>(1 + rng.next() % static_cast<std::uint64_t>(max_states));
  auto q = [](std::int64_t i) { return make_state(0, "q", i); };
  auto m = std::make_shared<TableMdp>(q(0));
  for (std::int64_t i = 0; i < count; ++i) {
    const bool random = rng.next() % 2 == 0;
    const auto degree = static_cast<std::size_t>(1 + rng.next() % 3);
    std::vector<OutEdge> edges;
    std::vector<std::int64_t> weights;
    std::int64_t sum = 0;
    for (std::size_t j = 0; j < degree; ++j) {
      const auto target = static_cast<std::int64_t>(rng.next() % static_cast<std::uint64_t>(count));
      const Rational reward = Rational(static_cast<long>(rng.next() % 7) - 3) / Rational(static_cast<long>(1 + rng.next() % 3));
      edges.push_back(OutEdge{q(target), reward, std::nullopt, 0});
      weights.push_back(static_cast<std::int64_t>(1 + rng.next() % 4));
      sum += weights.back();
    }
    if (random)
      for (std::size_t j = 0; j < degree; ++j) edges[j].prob = Rational(weights[j]) / Rational(sum);
    m->add(q(i), random ? StateKind::Random : StateKind::Controlled, std::move(edges));
  }
  return m;
}

namespace {

std::size_t state_hash(const std::string& text, std::uint64_t salt) {
  return static_cast<std::size_t>(SeedStream(salt ^ std::hash<std::string>{}(text), 0).next());
}

}  // namespace

EquivalenceReport transform_equivalence(std::uint64_t seed, int count, int max_states, std::int64_t horizon) {
  EquivalenceReport rep;
  SeedStream gen(seed, 0);
  auto fail = [&](std::string what) {
    ++rep.mismatches;
    if (rep.first_failures.size() < 10) rep.first_failures.push_back(std::move(what));
  };
  for (int i = 0; i < count; ++i) {
    auto base = random_table_mdp(gen, max_states);
    ++rep.mdps;
    for (auto enc : {Encoding::Step, Encoding::Reward, Encoding::Mean}) {
      auto encoded = encode(base, enc);
      const std::uint64_t salt = gen.next();
      // Hash choices are reduced modulo the degree so that every state gets a legal index.
      std::vector<StrategyPtr> on_encoded{std::make_shared<Strategy>(
          StrategyClass{StrategyTag::MD, 1}, "md-hash", 0,
          [salt](const Memory&, const StateId& s, Degree d) { return dirac(state_hash(s.str(), salt) % d.value_or(1)); })};
      if (enc == Encoding::Reward)
        on_encoded.push_back(std::make_shared<Strategy>(
            StrategyClass{StrategyTag::Markov, 1}, "markov-hash", 0, [salt](const Memory& m, const StateId& s, Degree d) {
              return dirac(state_hash(s.str() + "#" + std::to_string(m.steps), salt) % d.value_or(1));
            }));
      for (const auto& tau : on_encoded) {
        auto sigma = pull_back(tau, enc);
        const std::uint64_t run_seed = gen.next();
        SeedStream ra(run_seed, 0), rb(run_seed, 0);
        const Run a = sample_run(*encoded, *tau, ra, horizon);
        const Run b = sample_run(*base, *sigma, rb, horizon);
        ++rep.runs;
        MonitorState mon;
        const PayoffKind kind = enc == Encoding::Step ? PayoffKind::Point : enc == Encoding::Reward ? PayoffKind::Total : PayoffKind::Mean;
        for (std::int64_t t = 0; t < horizon; ++t) {
          const auto ts = static_cast<std::size_t>(t);
          mon = observe(mon, b.edge(ts).reward);
          ++rep.entries;
          const Rational expected = *mon.value(kind);
          if (a.edge(ts).reward != expected || a.state(ts + 1).base() != b.state(ts + 1)) {
            fail("mdp " + std::to_string(i) + " " + to_string(enc) + " " + tau->name() + " step " + std::to_string(t + 1) + ": " +
                 to_string(a.edge(ts).reward) + " vs " + to_string(expected));
            break;
          }
        }
      }
    }
  }
  return rep;
}

}  // namespace cmdp
