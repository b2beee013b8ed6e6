#include <doctest.h>

#include "cmdp/sim.hpp"
#include "cmdp/transforms.hpp"

using namespace cmdp;

namespace {

StateId st(const std::string& role) { return make_state(0, role); }

std::shared_ptr<TableMdp> two_loops() {
  auto m = std::make_shared<TableMdp>(st("a"));
  m->add(st("a"), StateKind::Controlled, {{st("a"), Rational(1, 2), std::nullopt}, {st("b"), -3, std::nullopt}});
  m->add(st("b"), StateKind::Random, {{st("a"), 2, Rational(1, 3)}, {st("b"), 0, Rational(2, 3)}});
  return m;
}

}  // namespace

TEST_CASE("encodings annotate states and rewrite rewards") {
  auto base = two_loops();
  auto S = encode_step(base), R = encode_reward(base), A = encode_mean(base);
  CHECK(S->initial().str() == "g0/a/0/0@0");
  CHECK(R->initial().str() == "g0/a/0/0@r=0");
  CHECK(A->initial().str() == "g0/a/0/0@0@r=0");

  auto s1 = S->successors(S->initial(), 2);
  CHECK(s1[0].target.step == 1);
  CHECK(s1[1].reward == -3);

  auto r1 = R->successors(R->initial(), 2);
  CHECK(*r1[0].target.total == Rational(1, 2));
  CHECK(r1[0].reward == Rational(1, 2));
  auto r2 = R->successors(r1[1].target, 2);
  CHECK(r2[0].reward == -1);  // -3 + 2
  CHECK(*r2[1].target.total == -3);

  auto a1 = A->successors(A->initial(), 2);
  auto a2 = A->successors(a1[0].target, 2);
  CHECK(a2[1].reward == Rational(-5, 4));  // (1/2 - 3) / 2
  CHECK(A->kind(a1[1].target) == StateKind::Random);
  CHECK_THROWS_AS(A->successors(st("a"), 2), UnknownState);
}

TEST_CASE("pull-back classes") {
  auto md = make_md("md", [](const StateId&) { return std::size_t{0}; });
  auto markov = make_markov("mk", [](const StateId&, std::int64_t n) { return dirac<std::size_t>(static_cast<std::size_t>(n % 2)); });
  CHECK(pull_back(md, Encoding::Step)->cls().tag == StrategyTag::Markov);
  CHECK(pull_back(md, Encoding::Reward)->cls().tag == StrategyTag::RC);
  CHECK(pull_back(md, Encoding::Mean)->cls().tag == StrategyTag::SCRC);
  CHECK(pull_back(markov, Encoding::Reward)->cls().tag == StrategyTag::SCRC);
  CHECK_THROWS_AS(pull_back(markov, Encoding::Step), ClassTooRich);
  CHECK_THROWS_AS(pull_back(markov, Encoding::Mean), ClassTooRich);
  auto fr = make_fr("fr", 2, 0, [](std::int64_t, const StateId&, Degree) { return dirac<std::size_t>(0); },
                    [](std::int64_t m, const StateId&, std::size_t, const OutEdge&) { return dirac(m); });
  CHECK_THROWS_AS(pull_back(fr, Encoding::Reward), ClassTooRich);
}

TEST_CASE("pulled-back strategy sees exactly the encoded state") {
  auto base = two_loops();
  auto R = encode_reward(base);
  // On the encoding: loop at a while the total is below 2, then leave.
  auto tau = make_md("threshold", [](const StateId& s) { return std::size_t{*s.total < 2 ? 0u : 1u}; });
  auto sigma = pull_back(tau, Encoding::Reward);
  SeedStream ra(11, 0), rb(11, 0);
  const Run a = sample_run(*R, *tau, ra, 40), b = sample_run(*base, *sigma, rb, 40);
  Rational total = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(a.edge(i).index == b.edge(i).index);
    total += b.edge(i).reward;
    CHECK(a.edge(i).reward == total);
    CHECK(a.state(i + 1).base() == b.state(i + 1));
  }
}
