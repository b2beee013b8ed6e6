#include <doctest.h>

#include <cmath>
#include <set>

#include "cmdp/strategy.hpp"

using namespace cmdp;

namespace {

StateId st(const std::string& role, std::int64_t branch = 0, std::int64_t offset = 0) { return make_state(0, role, branch, offset); }

// Puterman-style chain: s_k loops (reward 0 is irrelevant here) or moves on to s_{k+1}.
class LoopChain final : public Mdp {
 public:
  StateId initial() const override { return st("s", 1); }
  StateKind kind(const StateId&) const override { return StateKind::Controlled; }
  Degree degree(const StateId&) const override { return 2; }
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override {
    std::vector<OutEdge> out{{s, 1, std::nullopt}, {st("s", s.branch + 1), -1, std::nullopt}};
    if (out.size() > limit) out.resize(limit);
    return out;
  }
};

// Random root r with branches a, b (prob 1/2 each), both leading to the controlled state c,
// which picks one of two sinks.
std::shared_ptr<TableMdp> confusion_mdp() {
  auto m = std::make_shared<TableMdp>(st("r"));
  m->add(st("r"), StateKind::Random, {{st("a"), 0, Rational(1, 2)}, {st("b"), 0, Rational(1, 2)}});
  m->add(st("a"), StateKind::Controlled, {{st("c"), 0, std::nullopt}});
  m->add(st("b"), StateKind::Controlled, {{st("c"), 0, std::nullopt}});
  m->add(st("c"), StateKind::Controlled, {{st("x"), 1, std::nullopt}, {st("y"), -1, std::nullopt}});
  m->add(st("x"), StateKind::Controlled, {{st("x"), 0, std::nullopt}});
  m->add(st("y"), StateKind::Controlled, {{st("y"), 0, std::nullopt}});
  return m;
}

Run run_of(const Mdp& mdp, const std::vector<std::size_t>& idx) {
  Run r(mdp.initial());
  for (auto i : idx) {
    auto e = mdp.successors(r.last(), i + 1);
    r.push({i, e[i].reward}, e[i].target);
  }
  return r;
}

}  // namespace

TEST_CASE("MD strategies are Dirac and memoryless") {
  auto m = confusion_mdp();
  auto sigma = make_md("md", [](const StateId& s) { return s.role == "c" ? std::size_t{1} : 0; });
  CHECK(sigma->cls().tag == StrategyTag::MD);
  CHECK(sigma->cls().modes == 1);
  for (auto path : {std::vector<std::size_t>{0, 0}, std::vector<std::size_t>{1, 0}}) {
    auto d = act(*sigma, *m, run_of(*m, path));
    REQUIRE(d.size() == 1);
    CHECK(d[0].first == 1);
    CHECK(d[0].second == 1);
  }
  CHECK_THROWS_AS(act(*sigma, *m, Run(st("r"))), NotControlled);
}

TEST_CASE("Markov strategy loops exp(exp(k)) times at s_k") {
  LoopChain chain;
  auto loops = [](std::int64_t k) { return static_cast<std::int64_t>(std::ceil(std::exp(std::exp(static_cast<double>(k))))); };
  // The rule needs the entry step of s_k, which is a function of k alone.
  auto entry = [loops](std::int64_t k) {
    std::int64_t t = 0;
    for (std::int64_t j = 1; j < k; ++j) t += loops(j) + 1;
    return t;
  };
  auto sigma = make_markov("puterman", [=](const StateId& s, std::int64_t step) {
    return dirac<std::size_t>(step - entry(s.branch) < loops(s.branch) ? 0 : 1);
  });
  Run r(chain.initial());
  std::int64_t local = 0;
  std::vector<std::int64_t> counts;
  while (r.last().branch < 3) {
    auto d = act(*sigma, chain, r);
    REQUIRE(d.size() == 1);
    const std::size_t i = d[0].first;
    if (i == 0) ++local;
    else {
      counts.push_back(local);
      local = 0;
    }
    auto e = chain.successors(r.last(), 2)[i];
    r.push({i, e.reward}, e.target);
  }
  CHECK(counts == std::vector<std::int64_t>{loops(1), loops(2)});
  CHECK(counts[0] == 16);  // ceil(e^e) = ceil(15.15...)
}

TEST_CASE("counter strategies see forced counters") {
  auto sigma = make_reward_counter("rc", [](const StateId&, const Rational& r) { return dirac<std::size_t>(r < 0 ? 0 : 1); });
  Memory m = sigma->initial_memory();
  SeedStream rng(1, 0);
  OutEdge up{st("u"), 2, std::nullopt}, down{st("d"), -3, std::nullopt};
  sigma->advance(m, st("a"), 0, up, rng);
  sigma->advance(m, st("u"), 0, down, rng);
  CHECK(m.total == -1);
  CHECK(m.steps == 2);
  CHECK(sigma->choose(m, st("c"), 2)[0].first == 0);
  CHECK(sigma->cls().tag == StrategyTag::RC);

  // Markov: same length and last state gives the same output whatever the history.
  LoopChain chain;
  auto mk = make_markov("parity", [](const StateId&, std::int64_t n) {
    if (n % 2 == 0) return Dist<std::size_t>{{0, Rational(1, 3)}, {1, Rational(2, 3)}};
    return Dist<std::size_t>{{0, Rational(1, 2)}, {1, Rational(1, 2)}};
  });
  auto a = act(*mk, chain, run_of(chain, {0, 1}));
  CHECK(a.size() == 2);
  CHECK(a == act(*mk, chain, run_of(chain, {1, 0})));

  auto sc = make_sc_rc("both", [](const StateId&, std::int64_t n, const Rational& r) { return dirac<std::size_t>(n > 2 && r > 0 ? 1 : 0); });
  CHECK(act(*sc, chain, run_of(chain, {0, 0, 0}))[0].first == 1);
  CHECK(act(*sc, chain, run_of(chain, {0, 0}))[0].first == 0);
  CHECK(sc->cls().str() == "SC+RC");
}

TEST_CASE("FR(2) machine that cannot tell two branches apart") {
  auto m = confusion_mdp();
  // The update ignores which branch was taken, so histories through a and b look alike.
  auto sigma = make_fr(
      "blind", 2, 0,
      [](std::int64_t mode, const StateId& s, Degree d) { return dirac(clamp_index(s.role == "c" ? mode : 0, d)); },
      [](std::int64_t, const StateId& from, std::size_t, const OutEdge&) { return dirac<std::int64_t>(from.role == "r" ? 1 : 0); });
  auto via_a = act(*sigma, *m, run_of(*m, {0, 0}));
  auto via_b = act(*sigma, *m, run_of(*m, {1, 0}));
  CHECK(via_a == via_b);

  // With a randomized update the belief over modes is still exact.
  auto coin = make_fr(
      "coin", 2, 0, [](std::int64_t mode, const StateId& s, Degree d) { return dirac(clamp_index(s.role == "c" ? mode : 0, d)); },
      [](std::int64_t mode, const StateId& from, std::size_t, const OutEdge&) {
        if (from.role == "r") return Dist<std::int64_t>{{0, Rational(1, 3)}, {1, Rational(2, 3)}};
        return dirac(mode);
      });
  auto d = act(*coin, *m, run_of(*m, {0, 0}));
  REQUIRE(d.size() == 2);
  CHECK(d[0] == std::pair<std::size_t, Rational>{0, Rational(1, 3)});
  CHECK(d[1] == std::pair<std::size_t, Rational>{1, Rational(2, 3)});
}

TEST_CASE("induced chains") {
  auto cycle = std::make_shared<TableMdp>(st("v", 0));
  for (int i = 0; i < 3; ++i)
    cycle->add(st("v", i), StateKind::Controlled, {{st("v", (i + 1) % 3), i, std::nullopt}});
  auto md = make_md("next", [](const StateId&) { return std::size_t{0}; });
  auto c = induced_chain(*cycle, *md, {{st("v", 0), 0}}, [](const StateId&) { return true; });
  CHECK(c.nodes.size() == 3);
  for (const auto& row : c.rows) {
    REQUIRE(row.size() == 1);
    CHECK(row[0].prob == 1);
  }

  auto m = confusion_mdp();
  auto coin = make_fr(
      "coin", 2, 0, [](std::int64_t mode, const StateId& s, Degree d) { return dirac(clamp_index(s.role == "c" ? mode : 0, d)); },
      [](std::int64_t mode, const StateId& from, std::size_t, const OutEdge&) {
        if (from.role == "r") return Dist<std::int64_t>{{0, Rational(1, 3)}, {1, Rational(2, 3)}};
        return dirac(mode);
      });
  auto ic = induced_chain(*m, *coin, {{st("r"), 0}}, [](const StateId&) { return true; });
  std::set<std::int64_t> modes;
  for (std::size_t u = 0; u < ic.nodes.size(); ++u) {
    modes.insert(ic.nodes[u].mode);
    Rational sum = 0;
    for (const auto& e : ic.rows[u]) sum += e.prob;
    CHECK(sum == 1);
    if (m->kind(ic.nodes[u].state) == StateKind::Random) {
      // Marginal over the next mode reproduces P(s).
      std::vector<Rational> marg(2, 0);
      for (const auto& e : ic.rows[u]) marg[e.edge] += e.prob;
      CHECK(marg[0] == Rational(1, 2));
      CHECK(marg[1] == Rational(1, 2));
    }
  }
  CHECK(modes.size() == 2);
  CHECK(ic.nodes.size() <= 2 * m->states().size());
  CHECK(ic.rows[ic.find(st("c"), 1)][0].to == ic.find(st("y"), 1));

  auto mk = make_markov("m", [](const StateId&, std::int64_t) { return dirac<std::size_t>(0); });
  CHECK_THROWS_AS(induced_chain(*m, *mk, {{st("r"), 0}}, [](const StateId&) { return true; }), NotFiniteMemory);
}

TEST_CASE("FR machines from text") {
  const std::string text = R"(# copy the branch, then replay it
name mimic3
modes 3
initial 0
choose * c * -> mode:1
update * up * -> clamp-branch:1
update 1 x >=2 -> 0:1/2 2:1/2
)";
  auto spec = FrSpec::parse(text);
  CHECK(spec.modes == 3);
  CHECK(spec.choose.size() == 1);
  CHECK(spec.update.size() == 2);
  auto again = FrSpec::parse(spec.str());
  CHECK(again.str() == spec.str());
  auto sigma = spec.build();
  CHECK(sigma->cls().str() == "FR(3)");
  Memory m = sigma->initial_memory();
  auto u = sigma->update(m, st("s"), 5, OutEdge{st("up", 5), 0, Rational(1, 2)});
  CHECK(u == Dist<std::int64_t>{{2, 1}});
  CHECK(sigma->choose(Memory{2, 0, 0}, st("c"), 4) == Dist<std::size_t>{{2, 1}});
  CHECK(sigma->choose(Memory{2, 0, 0}, st("c"), 2) == Dist<std::size_t>{{1, 1}});
  auto r = sigma->update(Memory{1, 0, 0}, st("s"), 0, OutEdge{st("x", 3), 0, std::nullopt});
  CHECK(r.size() == 2);
  CHECK(sigma->update(Memory{1, 0, 0}, st("s"), 0, OutEdge{st("x", 1), 0, std::nullopt}) == Dist<std::int64_t>{{1, 1}});
  CHECK_THROWS_AS(FrSpec::parse("modes 2\nupdate * x -> 5:1\n"), std::invalid_argument);
  CHECK_THROWS_AS(FrSpec::parse("modes 2\nchoose * x -> 0:1/2\n"), std::invalid_argument);
}
