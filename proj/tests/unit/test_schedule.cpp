#include <doctest.h>

#include <cmath>

#include "cmdp/schedule.hpp"

using namespace cmdp;

namespace {

Interval num(long v) { return Interval(v); }

ScheduleRef square() { return Schedule::preset("accelerated-square"); }

AcceleratedSpec one_branch(Rational dcoef, std::vector<Rational> dexp, Rational ecoef, std::vector<Rational> eexp) {
  AcceleratedSpec s;
  s.name = "test";
  s.k_max = 1;
  s.delta = {PowerSpec{dcoef, LogPowerTerm(std::move(dexp))}};
  s.epsilon = {PowerSpec{ecoef, LogPowerTerm(std::move(eexp))}};
  return s;
}

}  // namespace

TEST_CASE("faithful delta and epsilon") {
  CHECK(faithful_delta(0, cmdp::exp(num(2))).contains(Rational(1, 2)));
  for (double n : {100.0, 1e6, 1e15}) {
    double expect = 1.0 / (n * std::log(n) * std::log(std::log(n)));
    auto e = faithful_epsilon(1, Interval(Rational(static_cast<long>(n))));
    CHECK(e.mid_d() == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(faithful_delta(2, num(3)), DomainTooSmall);
}

TEST_CASE("rationalized values sit just above the faithful ones") {
  auto r = Schedule::rationalized(MRecurrence::A);
  for (std::int64_t n = r->n_star(); n <= 60; ++n) {
    const auto& b = r->block(n);
    const Interval slack = exp2i(-n);
    for (int i = 0; i < b.k; ++i) {
      Interval d = faithful_delta(i, Interval(Rational(n))), e = faithful_epsilon(i, Interval(Rational(n)));
      Interval g(b.delta[i]), t(b.epsilon[i]);
      CHECK(d.certainly_less(g));
      CHECK(g.certainly_less(d + slack));
      CHECK(e.certainly_less(t));
      CHECK(t.certainly_less(e + slack));
    }
    // Remark: sum of gamma stays below 1 because k(n) < n / 2.
    Rational sum = 0;
    for (int i = 0; i < b.k; ++i) sum += b.delta[i];
    CHECK(sum < 1);
  }
}

TEST_CASE("block invariants on every preset") {
  for (const auto& name : Schedule::preset_names()) {
    auto s = Schedule::preset(name);
    for (std::int64_t n = s->n_star(); n < s->n_star() + 40; ++n) {
      const auto& b = s->block(n);
      REQUIRE(b.delta.size() == static_cast<std::size_t>(b.k) + 1);
      Rational sum = 0;
      for (const auto& d : b.delta) {
        CHECK(d >= 0);
        sum += d;
      }
      CHECK(sum == 1);
      CHECK(b.epsilon.back() == 0);
      CHECK(b.k == s->k(n));
    }
  }
}

TEST_CASE("g(1), h(1), h(2) and k") {
  // Oracle: direct partial sums of 1/(n log^2 n) plus integral bounds on the remainder.
  constexpr long M = 5'000'000;
  std::vector<double> suffix(64, 0.0);
  double s = 0;
  for (long n = M; n > 1; --n) {
    if (n < 64) suffix[n] = s;
    double l = std::log(static_cast<double>(n));
    s += 1.0 / (n * l * l);
  }
  double rest_lo = 1.0 / std::log(M + 1.0), rest_hi = 1.0 / std::log(static_cast<double>(M));
  long g1 = 0;
  for (long N = 2; N < 64; ++N)
    if (suffix[N] + rest_hi <= 0.5) {
      g1 = N;
      break;
    }
  CHECK(suffix[g1 - 1] + rest_lo > 0.5);
  auto g = g_of(1);
  CHECK(g.exact);
  REQUIRE(g.value.numeric());
  CHECK(g.value.numeric()->contains(Rational(g1)));

  auto h1 = h_of(1);
  CHECK(h1.exact);
  CHECK(h1.value.numeric()->contains(Rational(2)));

  // Third argument of h(2): least m + 1 with sum_{n=2}^{m} 1/(n log n) >= 1.
  double acc = 0;
  long m = 1;
  while (acc < 1) {
    ++m;
    acc += 1.0 / (m * std::log(static_cast<double>(m)));
  }
  auto h2 = h_of(2);
  auto third = BigExpr(Interval(Rational(m + 1)), true);
  for (const auto& arg : {g_of(2).value, BigExpr::tower(3), third}) {
    auto c = compare(h2.value, arg);
    REQUIRE(c);
    CHECK(*c != std::strong_ordering::less);
  }
  REQUIRE(h2.value.numeric());
  CHECK(h2.value.numeric()->lo_d() > 1e23);

  CHECK(k_of(std::int64_t{1}) == 0);
  CHECK(k_of(std::int64_t{2}) == 1);
  CHECK(k_of(std::int64_t{1'000'000'000'000'000'000}) == 1);
  CHECK(k_of(BigExpr::tower(6)) >= 2);
}

TEST_CASE("m recurrences") {
  auto a = Schedule::faithful(MRecurrence::A);
  auto b = Schedule::faithful(MRecurrence::B);
  const auto ns = a->n_star();
  CHECK(ns == 3);
  CHECK(a->m(ns) == 1);
  CHECK(a->m(ns + 1) == 2);
  CHECK(b->m(ns) == 1);
  CHECK(b->m(ns + 1) == 1);

  // Oracle: recompute both recurrences from k(n).
  for (auto s : {a, b, Schedule::preset("accelerated-ri"), Schedule::preset("accelerated-mimic")}) {
    std::vector<Integer> ms{1};
    for (std::int64_t n = s->n_star() + 1; n < s->n_star() + 12; ++n) {
      Integer next = 0;
      const int k = s->k(n);
      for (const auto& mi : ms) {
        if (s->recurrence() == MRecurrence::A) {
          next += 2 * k * mi;
        } else {
          Integer p;
          mpz_pow_ui(p.get_mpz_t(), mi.get_mpz_t(), static_cast<unsigned long>(k));
          next += p;
        }
      }
      ms.push_back(next);
    }
    for (std::size_t i = 0; i < ms.size(); ++i) CHECK(s->m(s->n_star() + static_cast<std::int64_t>(i)) == ms[i]);
    if (s->recurrence() == MRecurrence::A)
      for (std::size_t i = 2; i < ms.size(); ++i) CHECK(ms[i] > ms[i - 1]);
  }
}

TEST_CASE("survival products") {
  // prod_{n>=2} (1 - 1/n^2) = 1/2 by telescoping.
  auto r = survival_product(*square(), 2, 4000);
  CHECK(r.product.contains(Rational(1, 2)));
  CHECK(r.product.width_d() <= 1e-6);

  auto zero = one_branch(Rational(1, 2), {0}, 0, {0});
  zero.check_hypotheses = false;
  auto z = survival_product(*Schedule::accelerated(zero), 1, 10);
  CHECK(z.product.contains(Rational(1)));

  auto fa = Schedule::faithful(MRecurrence::A);
  auto f = survival_product(*fa, fa->n_star(), 2000);
  CHECK(f.product.certainly_positive());

  auto bad = one_branch(Rational(1, 2), {0}, Rational(1, 2), {1});
  bad.check_hypotheses = false;
  CHECK_THROWS_AS(survival_product(*Schedule::accelerated(bad), 1, 10), DivergentLoss);
}

TEST_CASE("skip index") {
  auto s = square();
  CHECK(skip_index(*s, Rational(1)).n == s->n_star());
  // Oracle: prod_{n>=N} (1 - 1/n^2) = (N - 1) / N.
  auto k = skip_index(*s, Rational(1, 10));
  CHECK(Rational(k.n - 1, k.n) >= Rational(9, 10));
  CHECK(k.product.lo_d() >= 0.9);
  std::int64_t prev = 0;
  for (Rational eps : {Rational(1, 2), Rational(1, 10), Rational(1, 100), Rational(1, 1000)}) {
    auto idx = skip_index(*s, eps);
    CHECK(idx.n >= prev);
    prev = idx.n;
    auto tail = survival_product(*s, idx.n, idx.n + 2000);
    CHECK(tail.product.lo_d() >= 1 - eps.get_d());
  }
}

TEST_CASE("confusion bound substitutions") {
  auto s = Schedule::preset("accelerated-confusion");
  const std::int64_t n = 30;
  const auto& b = s->block(n);
  REQUIRE(b.k >= 3);
  for (int i = 0; i + 1 < b.k; ++i)
    for (int j = i + 1; j <= b.k - 1; ++j) {
      const auto &di = b.delta[i], &dj = b.delta[j], &ei = b.epsilon[i], &ej = b.epsilon[j];
      CHECK(confusion_bound(*s, n, i, j, 1).value == dj * ej + di);
      CHECK(confusion_bound(*s, n, i, j, 0).value == (dj + di) * ei);
      for (int q = 0; q <= 8; ++q) {
        auto c = confusion_bound(*s, n, i, j, Rational(q, 8));
        CHECK(c.alpha_free <= c.value);
        CHECK(confusion_min(*s, n) <= c.value);
      }
    }
  CHECK_THROWS_AS(confusion_bound(*s, n, 1, 1, 0), OutOfRange);
  CHECK(confusion_min(*Schedule::preset("accelerated-mimic"), 5) > 0);
}

TEST_CASE("hypotheses of the faithful family") {
  for (int i = 0; i <= 6; ++i) {
    CHECK(classify(faithful_delta_term(i) * faithful_epsilon_term(i)) == Convergence::Convergent);
    CHECK(classify(faithful_delta_term(i)) == Convergence::Divergent);
    for (int j = i + 1; j <= 6; ++j)
      CHECK(classify(faithful_delta_term(j) * faithful_epsilon_term(i)) == Convergence::Divergent);
  }
  // delta_{k-1} eps_{k-2} = eps_{k-1}, on the exponent vectors.
  for (int k = 2; k <= 8; ++k) {
    auto lhs = faithful_delta_term(k - 1) * faithful_epsilon_term(k - 2);
    CHECK(lhs.a == faithful_epsilon_term(k - 1).a);
  }
}

TEST_CASE("well-definedness at representable points") {
  for (int k = 1; k <= 3; ++k) {
    auto t = BigExpr::tower(k + 1).numeric();
    REQUIRE(t);
    Interval n = cmdp::ceil(*t);
    for (int step = 0; step < 30; ++step) {
      Interval sum(0L);
      for (int i = 0; i < k; ++i) sum = sum + faithful_delta(i, n);
      CHECK(sum.certainly_le(Interval(1L)));
      n = n * n;
    }
  }
}

TEST_CASE("accelerated schedules are validated") {
  // delta_0 eps_0 = 1/n diverges.
  CHECK_THROWS_AS(Schedule::accelerated(one_branch(Rational(1, 2), {0}, Rational(1, 2), {1})), HypothesisViolated);
  // sum of delta_0 = 1/n^2 converges.
  CHECK_THROWS_AS(Schedule::accelerated(one_branch(Rational(1, 2), {2}, Rational(1, 2), {1})), HypothesisViolated);
  CHECK_NOTHROW(Schedule::accelerated(one_branch(Rational(1, 2), {1}, Rational(1, 2), {1})));
  auto s = Schedule::preset("accelerated-confusion");
  auto back = Schedule::from_kv(s->to_kv());
  for (std::int64_t n : {1, 7, 19, 40})
    for (int i = 0; i <= s->k(n); ++i) {
      CHECK(delta(*s, i, n) == delta(*back, i, n));
      CHECK(epsilon(*s, i, n) == epsilon(*back, i, n));
    }
  CHECK_THROWS_AS(delta(*s, 9, 40), OutOfRange);
}
