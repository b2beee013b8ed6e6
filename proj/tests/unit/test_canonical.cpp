#include <doctest.h>

#include "cmdp/sim.hpp"

using namespace cmdp;

namespace {

/// Plays sigma for `steps` steps and calls f(state before, edge taken, memory before).
template <class F>
void play(const Mdp& mdp, const Strategy& sigma, std::uint64_t seed, std::int64_t steps, F&& f) {
  SeedStream rng(seed, 0);
  Memory mem = sigma.initial_memory();
  StateId s = mdp.initial();
  for (std::int64_t i = 0; i < steps; ++i) {
    const std::size_t idx = mdp.kind(s) == StateKind::Random ? sample_edge(mdp, s, rng) : sigma.sample_choice(mem, s, mdp.degree(s), rng);
    auto e = mdp.successors(s, idx + 1).at(idx);
    f(s, e, mem);
    sigma.advance(mem, s, idx, e, rng);
    s = e.target;
  }
}

}  // namespace

TEST_CASE("mimic copies the random branch in every block") {
  for (const char* preset : {"accelerated-mimic", "accelerated-audit"}) {
    for (bool binary : {false, true}) {
      for (bool bounded : {false, true}) {
        auto c = build_chain(Schedule::preset(preset), ChainOptions{ChainVariant::StepImplicit, binary, false, bounded});
        for (auto sigma : {mimic(c), mimic_fr(c)}) {
          for (std::uint64_t seed = 0; seed < 10; ++seed) {
            std::int64_t label = -1, copies = 0;
            play(*c, *sigma, seed, 400, [&](const StateId&, const OutEdge& e, const Memory&) {
              const NodeTag t = c->tag(e.target);
              if (t.kind == NodeTag::Up) label = t.branch;
              if (t.kind == NodeTag::Down) {
                CHECK(t.branch == std::min<std::int64_t>(label, c->max_branches() - 1));
                ++copies;
              }
            });
            CHECK(copies > 0);
          }
        }
      }
    }
  }
  auto ri = build_reward_implicit(Schedule::preset("accelerated-ri"));
  CHECK(mimic(ri)->cls().tag == StrategyTag::FR);
  CHECK(mimic(build_chain(Schedule::preset("accelerated-mimic")))->cls().tag == StrategyTag::RC);
}

TEST_CASE("skip-then-mimic enters at the skip index with a zero total") {
  auto c = build_chain(Schedule::preset("accelerated-mimic"));
  for (auto eps : {Rational(1, 2), Rational(1, 10), Rational(1, 100)}) {
    const std::int64_t target = skip_target(c->schedule(), eps);
    CHECK(target >= c->n_star());
    for (bool fr : {false, true}) {
      auto sigma = skip_then_mimic(c, eps, fr);
      bool entered = false;
      play(*c, *sigma, 5, c->depth_of_block(target) + 1, [&](const StateId& s, const OutEdge& e, const Memory& m) {
        if (s.role == "s" && !entered) {
          entered = true;
          CHECK(s.gadget == target);
          CHECK(m.total == 0);
          CHECK(m.steps == c->depth_of_block(target));
        }
        (void)e;
      });
      CHECK(entered);
    }
  }
}

TEST_CASE("FR test family") {
  for (int k = 1; k <= 4; ++k) {
    auto family = fr_family(k);
    CHECK(family.size() == 5);
    for (const auto& spec : family) {
      auto sigma = spec.build();
      CHECK(sigma->cls().tag == StrategyTag::FR);
      CHECK(sigma->cls().modes == k);
      CHECK(FrSpec::parse(spec.str()).str() == spec.str());
    }
  }
  CHECK_THROWS(fr_family(0));
}

TEST_CASE("infinitely branching gadget") {
  auto m = build_infinite_branching();
  CHECK(!m->degree(m->initial()));
  for (std::int64_t i = 1; i < 6; ++i) {
    auto rep = validate_local(*m, make_state(0, "r", i), 0);
    CHECK(rep.ok);
  }
  auto edges = m->successors(m->initial(), 5);
  CHECK(edges.size() == 5);
  CHECK(edges[3].target == make_state(0, "r", 4));
  CHECK(edges[3].reward == 0);

  // Partial products with the tail bound against the enclosure.
  const Interval p = never_hit_product(60);
  Rational direct = 1;
  for (int k = 1; k <= 60; ++k) direct *= 1 - Rational(1, Integer(1) << k);
  CHECK(p.contains(direct));
  CHECK(p.contains(direct * (1 - Rational(1, Integer(1) << 60))));
  CHECK(p.lo_d() >= 0.288);
  CHECK(p.width_d() < 1e-15);
  CHECK(never_hit_product(10).contains(0.2887880950866));

  for (std::int64_t i = 1; i <= 6; ++i) {
    const std::int64_t H = hit_horizon(i, Rational(999, 1000));
    Rational miss = 1 - Rational(1, 1 << i), q = 1;
    for (std::int64_t h = 0; h < H - 1; ++h) q *= miss;
    CHECK(1 - q <= Rational(999, 1000));
    CHECK(1 - q * miss > Rational(999, 1000));
  }
  CHECK(hit_horizon(1, Rational(999, 1000)) == 10);

  // The increasing strategy visits r_1, r_2, ... in order.
  std::int64_t expect = 1;
  play(*m, *increasing_branch_strategy(), 3, 200, [&](const StateId& s, const OutEdge& e, const Memory&) {
    if (s.role == "s") CHECK(e.target == make_state(0, "r", expect++));
  });
  play(*m, *fixed_branch_strategy(3), 3, 50, [&](const StateId& s, const OutEdge& e, const Memory&) {
    if (s.role == "s") CHECK(e.target == make_state(0, "r", 3));
  });
}

TEST_CASE("growing-memory gadget") {
  auto m = build_growing_memory();
  auto edges = m->successors(m->initial(), 3);
  CHECK(edges[0].target == m->initial());
  CHECK(edges[0].reward == 0);
  CHECK(edges[2].target == make_state(0, "r", 2));
  CHECK(edges[2].reward == 1);
  auto r = m->successors(make_state(0, "r", 3), 2);
  CHECK(*r[0].prob == Rational(1, 8));
  CHECK(growing_memory_facts().losing(make_state(0, "bot")));
}

TEST_CASE("slowly decaying loops") {
  CHECK(puterman_loops(1).contains(Rational(16)));
  CHECK(puterman_loops(2).contains(Rational(1619)));
  CHECK(puterman_loops(1).width_d() == 0);
  // Closed form against an exact rational oracle.
  const Rational e1 = Rational(-17) / 17;
  const Rational e2 = (Rational(-17) - Rational(1619, 2) - 1) / Rational(17 + 1620);
  CHECK(puterman_exit_mean(1).contains(e1));
  CHECK(puterman_exit_mean(2).contains(e2));
  // Step simulation through both exits.
  auto m = build_puterman();
  MonitorState mon;
  std::vector<Rational> exits;
  play(*m, *puterman_strategy(), 0, 17 + 1620, [&](const StateId& s, const OutEdge& e, const Memory&) {
    mon = observe(mon, e.reward);
    if (e.target != s) exits.push_back(*mon.value(PayoffKind::Mean));
  });
  REQUIRE(exits.size() == 2);
  CHECK(exits[0] == e1);
  CHECK(exits[1] == e2);
  // Floors rise toward zero.
  Interval prev = puterman_phase_floor(1);
  for (std::int64_t k = 2; k <= 12; ++k) {
    const Interval f = puterman_phase_floor(k);
    CHECK(prev.certainly_less(f));
    CHECK(f.hi_d() < 0);
    prev = f;
  }
  CHECK(prev.lo_d() > -0.2);
}
