#include <doctest.h>

#include <cmath>
#include <random>

#include "cmdp/series.hpp"
#include "condensation.hpp"

using namespace cmdp;
using namespace cmdp::oracle;

namespace {

// sum_{N < n <= M} term(n) for each N in `cuts` (descending), from one backward pass.
std::vector<double> partials(const LogPowerTerm& t, const std::vector<long>& cuts, long M) {
  std::vector<double> out;
  double s = 0;
  std::size_t next = 0;
  for (long n = M; n > 0 && next < cuts.size(); --n) {
    if (n == cuts[next]) {
      out.push_back(s);
      ++next;
    }
    double x = static_cast<double>(n), v = std::pow(x, -t.a[0].get_d());
    double l = x;
    for (std::size_t i = 1; i < t.a.size(); ++i) {
      l = std::log(l);
      v *= std::pow(l, -t.a[i].get_d());
    }
    s += v;
  }
  return out;
}

}  // namespace

TEST_CASE("iterated logarithms") {
  CHECK(log_iter(1, cmdp::exp(Interval(2L))).contains(Rational(2)));
  CHECK(log_iter(2, cmdp::exp(cmdp::exp(Interval(1L)))).contains(Rational(1)));
  auto t4 = BigExpr::tower(4);
  auto back = t4.log_iter(3).numeric();
  REQUIRE(back);
  auto e = cmdp::exp(Interval(1L));
  CHECK(back->lo_d() <= e.hi_d());
  CHECK(back->hi_d() >= e.lo_d());
  CHECK(back->width_d() < 1e-30);
  CHECK_THROWS_AS(log_iter(2, Interval(2L)), DomainTooSmall);
}

TEST_CASE("towers") {
  auto t0 = BigExpr::tower(0).numeric();
  REQUIRE(t0);
  CHECK(t0->contains(Rational(1)));
  auto t2 = BigExpr::tower(2).numeric();
  REQUIRE(t2);
  CHECK(t2->lo_d() == doctest::Approx(15.154262241479262).epsilon(1e-12));
  auto t5 = BigExpr::tower(5), t4 = BigExpr::tower(4);
  CHECK_FALSE(t5.numeric().has_value());
  auto c = compare(t5, t4);
  REQUIRE(c);
  CHECK(*c == std::strong_ordering::greater);
}

TEST_CASE("classify on named terms") {
  CHECK(classify(LogPowerTerm({2})) == Convergence::Convergent);
  CHECK(classify(LogPowerTerm({1, 1})) == Convergence::Divergent);
  CHECK(classify(LogPowerTerm({1})) == Convergence::Divergent);
  CHECK(classify(LogPowerTerm({1, 1, 2})) == Convergence::Convergent);
  CHECK(classify(LogPowerTerm({1, 1, 1, 0})) == Convergence::Divergent);
  CHECK(classify(LogPowerTerm({Rational(3, 4), 5})) == Convergence::Divergent);
}

TEST_CASE("classify agrees with the condensation oracle on random terms") {
  std::mt19937_64 gen(20240611);
  std::uniform_int_distribution<int> depth(0, 3), quarter(-4, 12), coin(0, 1);
  int disagreements = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Rational> a(depth(gen) + 1);
    for (auto& x : a) x = coin(gen) ? Rational(1) : Rational(quarter(gen), 4);
    for (auto& x : a) x.canonicalize();
    if (classify(LogPowerTerm(a)) != condensation_oracle(a)) ++disagreements;
  }
  CHECK(disagreements == 0);
}

TEST_CASE("tail bounds of 1/n^2") {
  LogPowerTerm t({2});
  std::vector<long> cuts{1000, 100, 10};
  auto sums = partials(t, cuts, 10'000'000);
  for (std::size_t c = 0; c < cuts.size(); ++c) {
    auto b = tail_bounds(t, Interval(cuts[c]));
    CHECK(b.hi_d() <= 1.0 / cuts[c] + 1e-15);
    CHECK(b.hi_d() >= sums[c]);
    CHECK(b.lo_d() <= sums[c] + 1.0 / 10'000'000);  // remainder < 1/M
  }
}

TEST_CASE("tail bounds of 1/(n log^2 n) against partial sums") {
  LogPowerTerm t({1, 2});
  constexpr long M = 10'000'000;
  auto rest = tail_bounds(t, Interval(M));
  std::vector<long> cuts{100000, 1000, 20};
  auto sums = partials(t, cuts, M);
  for (std::size_t c = 0; c < cuts.size(); ++c) {
    long N = cuts[c];
    auto b = tail_bounds(t, Interval(N));
    double s = sums[c];
    CHECK(b.hi_d() >= s + rest.lo_d());
    CHECK(b.lo_d() <= s + rest.hi_d());
    double term = 1.0 / (N * std::log(N) * std::log(N));
    CHECK(b.hi_d() <= 1.0 / std::log(static_cast<double>(N)) + term);
  }
  double prev = 1e9;
  for (long N = 20; N < 1'000'000; N *= 3) {
    double u = tail_upper_bound(t, Interval(N)).to_double();
    CHECK(u < prev);
    prev = u;
  }
  CHECK_THROWS_AS(tail_bounds(LogPowerTerm({1, 1}), Interval(100L)), DivergentTerm);
}

TEST_CASE("term products add exponents") {
  auto p = LogPowerTerm({1, 1}) * LogPowerTerm({1, 0, 1});
  REQUIRE(p.a.size() == 3);
  CHECK(p.a[0] == 2);
  CHECK(p.a[1] == 1);
  CHECK(p.a[2] == 1);
}
