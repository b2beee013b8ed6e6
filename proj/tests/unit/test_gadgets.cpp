#include <doctest.h>

#include <deque>
#include <set>

#include "cmdp/gadgets.hpp"

using namespace cmdp;

namespace {

/// Every edge between states of blocks <= last, explored from the start.
template <class F>
std::size_t for_each_edge(const GadgetChain& c, std::int64_t last, std::int64_t rows, F&& f) {
  std::set<std::string> seen{c.start().str()};
  std::deque<StateId> todo{c.start()};
  while (!todo.empty()) {
    StateId u = todo.front();
    todo.pop_front();
    for (const auto& e : c.successors(u, 1 << 20)) {
      f(u, e);
      const auto& v = e.target;
      if (v.role == "bot" || v.gadget > last || v.row >= rows) continue;
      if (seen.insert(v.str()).second) todo.push_back(v);
    }
  }
  return seen.size();
}

ChainOptions opts(ChainVariant v, bool binary, bool bounded) { return ChainOptions{v, binary, false, bounded}; }

/// Sum of rewards along the unique path from `from` following `pick` at every branching state,
/// until a state satisfying `stop` is reached.
template <class Pick, class Stop>
std::pair<Rational, StateId> walk(const GadgetChain& c, StateId from, Pick&& pick, Stop&& stop, std::int64_t* steps = nullptr) {
  Rational total = 0;
  std::int64_t n = 0;
  do {
    auto edges = c.successors(from, 1 << 20);
    const auto& e = edges.size() == 1 ? edges[0] : edges.at(pick(from, edges));
    total += e.reward;
    from = e.target;
    ++n;
  } while (!stop(from));
  if (steps) *steps = n;
  return {total, from};
}

}  // namespace

TEST_CASE("every path into a state of a step-implicit chain has its declared length") {
  for (const char* preset : {"accelerated-audit", "faithful-a", "accelerated-restart"}) {
    for (auto variant : {ChainVariant::StepImplicit, ChainVariant::Restart}) {
      for (bool binary : {false, true}) {
        for (bool bounded : {false, true}) {
          if (bounded && std::string(preset) == "faithful-a") continue;
          auto c = build_chain(Schedule::preset(preset), opts(variant, binary, bounded));
          const std::int64_t last = c->n_star() + 3;
          std::size_t checked = 0;
          for_each_edge(*c, last, 2, [&](const StateId& u, const OutEdge& e) {
            if (e.target.role == "bot" || e.target.gadget > last + 2) return;
            CHECK_MESSAGE(c->declared_depth(e.target) == c->declared_depth(u) + 1, u.str(), " -> ", e.target.str());
            ++checked;
          });
          CHECK(checked > 20);
        }
      }
    }
  }
}

TEST_CASE("local validity of chain states") {
  for (const char* preset : {"accelerated-audit", "accelerated-mimic", "rationalized-a", "faithful-a"}) {
    for (bool binary : {false, true}) {
      auto c = build_chain(Schedule::preset(preset), opts(ChainVariant::StepImplicit, binary, false));
      const Rational tol = std::string(preset) == "faithful-a" ? Rational(1, 1000000) : Rational(0);
      for_each_edge(*c, c->n_star() + 3, 1, [&](const StateId& u, const OutEdge&) {
        auto rep = validate_local(*c, u, tol);
        CHECK_MESSAGE(rep.ok, u.str());
      });
    }
  }
}

TEST_CASE("block totals: up and down payments cancel exactly when the branch is copied") {
  auto sched = Schedule::preset("accelerated-audit");
  for (bool binary : {false, true}) {
    for (bool bounded : {false, true}) {
      auto c = build_chain(sched, opts(ChainVariant::StepImplicit, binary, bounded));
      for (std::int64_t n = c->n_star(); n < c->n_star() + 5; ++n) {
        const int k = c->k(n);
        for (int i = 0; i <= k; ++i) {
          for (int x = 0; x <= k; ++x) {
            auto pick = [&](const StateId& s, const std::vector<OutEdge>& edges) -> std::size_t {
              if (s.role == "c" || s.role == "cs") return c->route(s, x);
              for (std::size_t j = 0; j < edges.size(); ++j) {
                const auto& t = edges[j].target;
                if (t.role == "dn" && t.offset > 0) return j;
                if (t.role == "s") return j;
                if ((t.role == "rs" && t.branch <= i && i < t.offset) || ((t.role == "rp" || t.role == "up") && t.branch == i))
                  return j;
              }
              FAIL("no edge toward branch ", i, " at ", s.str());
              return 0;
            };
            const Rational di = sched->block(n).delta[static_cast<std::size_t>(i)];
            if (di == 0) continue;
            std::int64_t steps = 0;
            auto [total, end] = walk(*c, c->block_entry(n), pick, [](const StateId& s) { return s.role == "s"; }, &steps);
            CHECK(end.gadget == n + 1);
            CHECK(total == Rational((i - x) * c->m(n)));
            CHECK(steps == c->block_length(n));
          }
        }
      }
    }
  }
}

TEST_CASE("binary trees: leaves keep the unary probabilities and sit at one depth") {
  auto sched = Schedule::preset("accelerated-audit");
  auto unary = build_chain(sched, opts(ChainVariant::StepImplicit, false, false));
  auto binary = to_binary_branching(*unary);
  for (std::int64_t n = binary->n_star(); n < binary->n_star() + 6; ++n) {
    const auto& blk = sched->block(n);
    const int D = binary->fan_depth(n);
    CHECK((1 << D) >= blk.k + 1);
    CHECK((D == 0 || (1 << (D - 1)) < blk.k + 1));
    std::map<std::int64_t, Rational> reached;
    std::function<void(const StateId&, Rational, int)> go = [&](const StateId& s, Rational p, int d) {
      if (s.role == "up") {
        CHECK(d == D);
        reached[s.branch] += p;
        return;
      }
      for (const auto& e : binary->successors(s, 8)) {
        CHECK(e.target.gadget == n);
        go(e.target, p * e.prob.value_or(1), d + 1);
      }
    };
    go(binary->block_entry(n), 1, 0);
    for (int i = 0; i <= blk.k; ++i) CHECK(reached[i] == blk.delta[static_cast<std::size_t>(i)]);
    for (int x = 0; x <= blk.k; ++x) {
      StateId s = binary->controlled(n);
      int d = 0;
      while (s.role != "dn") {
        auto edges = binary->successors(s, 8);
        s = edges.at(s.role == "cp" ? 0 : binary->route(s, x)).target;
        ++d;
      }
      CHECK(s.branch == x);
      CHECK(d == D);
    }
  }
}

TEST_CASE("skip column and entry choice") {
  auto c = build_chain(Schedule::preset("accelerated-audit"), opts(ChainVariant::StepImplicit, false, true));
  const std::int64_t ns = c->n_star();
  auto start = c->successors(c->start(), 4);
  REQUIRE(start.size() == 2);
  CHECK(start[0].target == c->block_entry(ns));
  CHECK(start[1].target == c->column_bottom(ns, ns));
  // Walk the column from N* up to block ns + 3, then re-enter: the total comes back to 0.
  const std::int64_t target = ns + 3;
  auto pick = [&](const StateId& s, const std::vector<OutEdge>&) -> std::size_t {
    if (s.role == "start") return 1;
    return s.gadget + 1 >= target ? 0 : 1;
  };
  std::int64_t steps = 0;
  auto [total, end] = walk(*c, c->start(), pick, [](const StateId& s) { return s.role == "s"; }, &steps);
  CHECK(end == c->block_entry(target));
  CHECK(total == 0);
  CHECK(steps == c->depth_of_block(target));
}

TEST_CASE("restart paths settle the debt of the escaped block") {
  auto sched = Schedule::preset("accelerated-restart");
  for (bool bounded : {false, true}) {
    for (bool binary : {false, true}) {
      auto c = build_restart(sched, ChainVariant::Restart, binary, bounded);
      for (std::int64_t n = c->n_star(); n < c->n_star() + 4; ++n) {
        for (int x = 0; x <= c->k(n); ++x) {
          auto edges = c->successors(make_state(n, "dn", x, 0), 4);
          if (sched->block(n).epsilon[static_cast<std::size_t>(x)] == 0) {
            CHECK(edges.size() == 1);
            continue;
          }
          REQUIRE(edges.size() == 2);
          CHECK(c->tag(edges[1].target).kind == NodeTag::Restart);
          Rational total = edges[1].reward;
          std::int64_t steps = 0;
          auto [rest, end] = walk(*c, edges[1].target, [](const StateId&, const std::vector<OutEdge>&) { return std::size_t{0}; },
                                  [](const StateId& s) { return s.role == "s"; }, &steps);
          total += rest;
          CHECK(end == c->block_entry(n + 2, 1));
          CHECK(total == Rational(-x * c->m(n)));
          CHECK(steps + 1 + c->declared_depth(make_state(n, "dn", x, 0)) == c->depth_of_block(n + 2));
        }
      }
    }
  }
  CHECK_THROWS_AS(concat_half(build_chain(sched)), VariantMismatch);
}

TEST_CASE("reward-implicit chains determine the running total") {
  auto sched = Schedule::preset("accelerated-ri");
  for (auto variant : {ChainVariant::RewardImplicit, ChainVariant::RestartRewardImplicit}) {
    for (bool binary : {false, true}) {
      for (bool bounded : {false, true}) {
        auto c = build_chain(sched, opts(variant, binary, bounded));
        const std::int64_t last = c->n_star() + 3;
        std::size_t checked = 0;
        for_each_edge(*c, last, 2, [&](const StateId& u, const OutEdge& e) {
          if (e.target.role == "bot") return;
          CHECK_MESSAGE(c->declared_total(e.target) == c->declared_total(u) + e.reward, u.str(), " -> ", e.target.str());
          ++checked;
        });
        CHECK(checked > 20);
      }
    }
  }
  CHECK_THROWS_AS(build_reward_implicit(Schedule::preset("accelerated-mimic")), VariantMismatch);
  CHECK_THROWS_AS(build_chain(Schedule::preset("accelerated-ri")), VariantMismatch);
}

TEST_CASE("reward-implicit up paths have length n m^i") {
  auto c = build_reward_implicit(Schedule::preset("faithful-b"));
  const std::int64_t n = c->n_star();
  for (int i = 0; i <= c->k(n); ++i) {
    std::int64_t steps = 0;
    walk(*c, make_state(n, "up", i, 0), [](const StateId&, const std::vector<OutEdge>&) { return std::size_t{0}; },
         [](const StateId& s) { return s.role == "c"; }, &steps);
    Integer p = 1;
    for (int j = 0; j < i; ++j) p *= c->m(n);
    CHECK(Integer(steps) == Integer(n) * p);
  }
}

TEST_CASE("strengthenings and manifests") {
  auto base = build_chain(Schedule::preset("faithful-a"));
  auto rat = rationalize(*base);
  CHECK(rat->schedule().family() == Family::RationalizedA);
  CHECK_THROWS_AS(rationalize(*build_chain(Schedule::preset("accelerated-mimic"))), VariantMismatch);
  auto bounded = bound_rewards(*build_chain(Schedule::preset("accelerated-audit")));
  for_each_edge(*bounded, bounded->n_star() + 3, 1, [&](const StateId&, const OutEdge& e) {
    CHECK((e.reward == 0 || e.reward == 1 || e.reward == -1));
  });

  ChainManifest m;
  m.schedule_preset = "accelerated-restart";
  m.options = opts(ChainVariant::Restart, true, true);
  auto again = ChainManifest::from_kv(KvFile::parse(m.to_kv().str()));
  CHECK(again.schedule_preset == m.schedule_preset);
  CHECK(again.options.variant == ChainVariant::Restart);
  CHECK(again.options.binary);
  CHECK(again.options.bounded);
  auto a = m.build(), b = again.build();
  for_each_edge(*a, a->n_star() + 2, 1, [&](const StateId& u, const OutEdge&) {
    auto x = a->successors(u, 64), y = b->successors(u, 64);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK((x[i].target == y[i].target && x[i].reward == y[i].reward));
  });
  KvFile inline_kv = Schedule::preset("accelerated-square")->to_kv();
  KvFile kv;
  for (const auto& [k, v] : inline_kv.values()) kv.set("chain.schedule." + k, v);
  CHECK(ChainManifest::from_kv(kv).build()->schedule().k(10) == 1);
  CHECK_THROWS_AS(ChainManifest::from_kv(KvFile{}), ConfigInvalid);
}

TEST_CASE("block audit strides agree with a step-by-step walk") {
  // Oracle: follow one branch pair (i copied as x) edge by edge.
  struct Walk {
    Rational total, min_mean;
    std::int64_t length = 0;
  };
  auto walk = [](const GadgetChain& c, std::int64_t n, std::int64_t i, std::int64_t x) {
    Walk w;
    StateId u = c.block_entry(n);
    bool first = true;
    while (true) {
      auto es = c.successors(u, 64);
      std::size_t j = 0;
      if (u.role == "s" || u.role == "rs") {
        // fan node: the child whose leaf range holds i
        for (; j < es.size(); ++j) {
          const StateId& t = es[j].target;
          if (t.role == "rs" ? (t.branch <= i && i < t.offset) : t.branch == i) break;
        }
      } else if (u.role == "c" || u.role == "cs") {
        j = c.route(u, x);
      }
      const OutEdge e = es.at(j);
      w.total += e.reward;
      ++w.length;
      const Rational mean = w.total / w.length;
      if (first || mean < w.min_mean) w.min_mean = mean;
      first = false;
      if (e.target.gadget != n) return w;
      u = e.target;
    }
  };
  for (bool binary : {false, true}) {
    auto c = build_chain(Schedule::preset("accelerated-audit"), ChainOptions{ChainVariant::StepImplicit, binary, false, true});
    for (std::int64_t n = 1; n <= 4; ++n) {
      const BlockAudit a = audit_block(*c, n);
      CHECK(a.depth_consistent);
      for (const auto& p : a.paths) {
        if (p.end != BlockPath::Next) continue;
        const Walk w = walk(*c, n, p.i, p.x);
        CHECK(w.total == p.total);
        CHECK(w.length == p.length);
        CHECK(w.min_mean == p.min_mean);
        CHECK(p.length == c->block_length(n));
      }
    }
  }
}
