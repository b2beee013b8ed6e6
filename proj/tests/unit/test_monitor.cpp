#include <doctest.h>

#include <random>

#include "cmdp/monitor.hpp"

using namespace cmdp;

namespace {

// s_0 -> s_1 -> s_2 -> ... with reward 0; optionally a self-loop at s_loop.
class ForwardChain final : public Mdp {
 public:
  explicit ForwardChain(std::int64_t loop_at = -1) : loop_at_(loop_at) {}
  StateId initial() const override { return make_state(0, "s"); }
  StateKind kind(const StateId&) const override { return StateKind::Controlled; }
  Degree degree(const StateId& s) const override { return s.branch == loop_at_ ? 2 : 1; }
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override {
    std::vector<OutEdge> out{{make_state(0, "s", s.branch + 1), 0, std::nullopt}};
    if (s.branch == loop_at_) out.push_back({s, 0, std::nullopt});
    if (out.size() > limit) out.resize(limit);
    return out;
  }

 private:
  std::int64_t loop_at_;
};

}  // namespace

TEST_CASE("monitor sequences") {
  MonitorState m;
  CHECK_FALSE(m.value(PayoffKind::Mean));
  std::vector<Rational> means;
  for (long r : {1, -1, 2}) {
    m = observe(m, r);
    means.push_back(*m.value(PayoffKind::Mean));
  }
  CHECK(means == std::vector<Rational>{1, 0, Rational(2, 3)});
  CHECK(*m.value(PayoffKind::Total) == 2);
  CHECK(*m.value(PayoffKind::Point) == 2);

  MonitorState h;
  Rational prev = -1;
  for (long d = 2; d < 40; ++d) {
    h = observe(h, Rational(-1, d));
    CHECK(*h.value(PayoffKind::Point) > prev);
    prev = *h.value(PayoffKind::Point);
  }

  MonitorState z;
  for (int i = 0; i < 10; ++i) z = observe(z, 0);
  CHECK(z.total == 0);

  // mean == total / n on random rational rewards.
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> num(-9, 9), den(1, 7);
  MonitorState r;
  for (int i = 0; i < 200; ++i) {
    Rational x(num(gen), den(gen));
    x.canonicalize();
    r = observe(r, x);
    CHECK(*r.value(PayoffKind::Mean) * r.steps == r.total);
  }
}

TEST_CASE("verdicts follow declared regions and never flip") {
  StructuralFacts facts{[](const StateId& s) { return s.role == "bot"; }, [](const StateId& s) { return s.role == "safe"; }};
  MonitorState m = observe(observe({}, 3), -1);
  CHECK(verdict(facts, make_state(0, "c"), m, PayoffKind::Mean).outcome == Outcome::Unknown);
  CHECK(verdict(facts, make_state(0, "bot"), m, PayoffKind::Point).tag() == "lose");
  CHECK(verdict(facts, make_state(0, "safe"), m, PayoffKind::Point).tag() == "win");
  auto neg = observe(m, -5);
  CHECK(verdict(facts, make_state(0, "safe"), neg, PayoffKind::Total).tag() == "lose");
  CHECK(verdict(facts, make_state(0, "safe"), neg, PayoffKind::Mean).tag() == "win");
  // Inside an absorbing region further observations keep the verdict (zero or -1 rewards only).
  auto in_safe = m;
  auto in_bot = m;
  for (int i = 0; i < 20; ++i) {
    in_safe = observe(in_safe, 0);
    in_bot = observe(in_bot, -1);
    for (auto k : {PayoffKind::Point, PayoffKind::Mean, PayoffKind::Total}) {
      CHECK(verdict(facts, make_state(0, "safe"), in_safe, k).tag() == "win");
      CHECK(verdict(facts, make_state(0, "bot"), in_bot, k).tag() == "lose");
    }
  }
}

TEST_CASE("safety levels") {
  std::vector<Rational> a{-5, -5, 0, 0, 0};
  CHECK(safety_level_holds(a, {0, 2}) == true);
  CHECK(safety_level_holds({-5, -5}, {0, 2}) == std::nullopt);
  std::vector<Rational> b(6, 0);
  b[4] = -1;  // step k + 3 with k = 2
  CHECK(safety_level_holds(b, {1, 2}) == false);
  // Antitone in the level.
  std::vector<Rational> c{0, 0, Rational(-1, 3), 0, Rational(-1, 9), 0};
  bool prev = true;
  for (int i = 0; i < 6; ++i) {
    bool h = *safety_level_holds(c, {i, 1});
    CHECK((prev || !h));
    prev = h;
  }
  CHECK(*safety_level_holds(c, {1, 1}));
  CHECK_FALSE(*safety_level_holds(c, {2, 1}));
}

TEST_CASE("bubbles") {
  ForwardChain chain;
  auto b = bubble(chain, chain.initial(), 2);
  CHECK(b.size() == 3);
  CHECK(b.count(make_state(0, "s", 2)));
  CHECK_FALSE(b.count(make_state(0, "s", 3)));
}

TEST_CASE("transience rewards") {
  auto chain = std::make_shared<ForwardChain>();
  auto t = transience_reward_structure(chain, chain->initial());
  StateId s = t->initial();
  for (long d = 1; d <= 10; ++d) {
    auto e = t->all_successors(s);
    CHECK(e[0].reward == Rational(-1, d));
    s = e[0].target;
  }

  auto looped = std::make_shared<ForwardChain>(4);
  auto tl = transience_reward_structure(looped, looped->initial());
  auto e = tl->all_successors(make_state(0, "s", 4));
  CHECK(e[1].target == make_state(0, "s", 4));
  CHECK(e[1].reward == Rational(-1, 4));

  auto single = std::make_shared<TableMdp>(make_state(0, "x"));
  single->add(make_state(0, "x"), StateKind::Controlled, {{make_state(0, "x"), 5, std::nullopt}});
  auto ts = transience_reward_structure(single, single->initial());
  for (int i = 0; i < 5; ++i) CHECK(ts->all_successors(make_state(0, "x"))[0].reward == -1);
}

TEST_CASE("transience rewards penalize every lasso") {
  // Random finite graphs: a cycle through any state carries a fixed negative reward each lap.
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 7);
    auto g = std::make_shared<TableMdp>(make_state(0, "v", 0));
    for (int v = 0; v < n; ++v) {
      std::vector<OutEdge> out;
      const int deg = 1 + static_cast<int>(gen() % 3);
      for (int j = 0; j < deg; ++j) out.push_back({make_state(0, "v", static_cast<std::int64_t>(gen() % n)), 0, std::nullopt});
      g->add(make_state(0, "v", v), StateKind::Controlled, out);
    }
    auto t = transience_reward_structure(g, g->initial());
    for (const auto& s : bubble(*g, g->initial(), n))
      for (const auto& e : t->all_successors(s)) CHECK(e.reward < 0);
  }
}
