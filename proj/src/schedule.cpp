#include "cmdp/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cmdp {

namespace {

constexpr mpfr_prec_t kLoopPrecision = 128;

Interval reciprocal(const Interval& x) { return Interval(1L) / x; }

Rational midpoint_rational(const Interval& x) {
  Real mid(x.precision());
  mpfr_add(mid.get(), x.lo().get(), x.hi().get(), MPFR_RNDN);
  mpfr_div_2ui(mid.get(), mid.get(), 1, MPFR_RNDN);
  Rational q;
  mpfr_get_q(q.get_mpq_t(), mid.get());
  return q;
}

/// (floor(hi * 2^bits) + 1) / 2^bits: strictly above the enclosure, less than 2^-bits past its top.
Rational dyadic_above(const Interval& x, long bits) {
  Real scaled(x.precision());
  mpfr_mul_2si(scaled.get(), x.hi().get(), bits, MPFR_RNDU);
  mpfr_rint_floor(scaled.get(), scaled.get(), MPFR_RNDD);
  Integer z;
  mpfr_get_z(z.get_mpz_t(), scaled.get(), MPFR_RNDD);
  Rational q(z + 1);
  return q * pow2(-bits);
}

/// ceil(hi * 2^bits) / 2^bits (exact when the value is already dyadic at that scale).
Rational dyadic_ceil(const Interval& x, long bits) {
  Real scaled(x.precision());
  mpfr_mul_2si(scaled.get(), x.hi().get(), bits, MPFR_RNDU);
  Integer z;
  mpfr_get_z(z.get_mpz_t(), scaled.get(), MPFR_RNDU);
  return Rational(z) * pow2(-bits);
}

long ceil_lg(std::int64_t v) {
  long b = 0;
  while ((std::int64_t{1} << b) < v && b < 62) ++b;
  return b;
}

std::mutex& h_mutex() {
  static std::mutex m;
  return m;
}

BigExpr plus_one_upper(const BigExpr& x) {
  // exp^h(b) + 1 <= exp^h(b + 1) for h >= 1 and b >= 0.
  return BigExpr::exp_tower(x.height(), x.base() + Interval(1L));
}

/// Least m + 1 with sum_{n=2}^{m} eps_0(n) >= 1, by direct certified summation.
BigExpr third_h_argument_first() {
  Interval sum(0L, kLoopPrecision);
  for (std::int64_t m = 2;; ++m) {
    sum = sum + faithful_epsilon(0, Interval(Rational(m), kLoopPrecision));
    if (mpfr_cmp_ui(sum.lo().get(), 1) >= 0) return BigExpr(Interval(Rational(m + 1)), true);
    if (mpfr_cmp_ui(sum.hi().get(), 1) >= 0) throw std::logic_error("cannot separate partial sum from 1");
  }
}

}  // namespace

Interval faithful_delta(int i, const Interval& n) { return reciprocal(log_iter(i + 1, n)); }

Interval faithful_epsilon(int i, const Interval& n) {
  Interval denom = n, li = n;
  for (int j = 1; j <= i + 1; ++j) {
    li = log_iter(1, li);
    denom = denom * li;
  }
  return reciprocal(denom);
}

LogPowerTerm faithful_delta_term(int i) {
  std::vector<Rational> a(static_cast<std::size_t>(i) + 2, Rational(0));
  a[static_cast<std::size_t>(i) + 1] = 1;
  return LogPowerTerm(std::move(a));
}

LogPowerTerm faithful_epsilon_term(int i) {
  return LogPowerTerm(std::vector<Rational>(static_cast<std::size_t>(i) + 2, Rational(1)));
}

namespace {

/// Exact least N >= 2 with sum_{n>N} term(n) + slack(N) <= bound, decided with certified partial sums.
Certified least_tail_index(const LogPowerTerm& term, const Interval& bound, bool rational_slack) {
  constexpr std::int64_t M = 100000;
  std::vector<Interval> terms;
  terms.reserve(M + 1);
  for (std::int64_t n = 0; n <= M; ++n)
    terms.push_back(n < 2 ? Interval(0L, kLoopPrecision) : term.eval(Interval(Rational(n), kLoopPrecision)));
  Interval tail = tail_bounds(term, Interval(Rational(M), kLoopPrecision));
  // suffix[N] = sum_{n > N} term(n)
  std::vector<Interval> suffix(M + 1, Interval(0L, kLoopPrecision));
  suffix[M] = tail;
  for (std::int64_t N = M - 1; N >= 2; --N) suffix[N] = suffix[N + 1] + terms[N + 1];
  bool exact = true;
  for (std::int64_t N = 2; N < M; ++N) {
    Interval t = suffix[N];
    if (rational_slack) t = t + Interval::from_bounds(Real(kLoopPrecision), (Interval(3L) * exp2i(-N)).hi());
    if (t.certainly_le(bound)) return Certified{BigExpr(Interval(Rational(N)), true), exact};
    if (!bound.certainly_less(t)) exact = false;
  }
  throw std::logic_error("tail index beyond the direct search range");
}

}  // namespace

Certified g_of(int i) {
  if (i < 1) throw std::invalid_argument("g(i) needs i >= 1");
  if (i == 1) return least_tail_index(faithful_delta_term(0) * faithful_epsilon_term(0), exp2i(-1), false);
  // sum_{n>N} delta_{i-1} eps_{i-1} <= 1 / log_i N, so N = exp^i(2^i) suffices.
  return Certified{BigExpr::exp_tower(i, exp2i(i)).ceil(), false};
}

Certified g_star_of(int i) {
  if (i < 1) throw std::invalid_argument("g*(i) needs i >= 1");
  if (i == 1) return least_tail_index(faithful_delta_term(0) * faithful_epsilon_term(0), exp2i(-1), true);
  // gamma*theta <= delta*eps + 3 * 2^-n; halve the budget for each part.
  return Certified{BigExpr::exp_tower(i, exp2i(i + 1)).ceil(), false};
}

Certified h_of(int i) {
  if (i < 1) throw std::invalid_argument("h(i) needs i >= 1");
  static std::vector<Certified> memo;
  std::lock_guard lock(h_mutex());
  if (memo.empty()) memo.push_back(Certified{BigExpr(Interval(2L), true), true});
  while (static_cast<int>(memo.size()) < i) {
    const int prev = static_cast<int>(memo.size());  // computing h(prev + 1)
    const Certified& hp = memo.back();
    Certified g = g_of(prev + 1);
    BigExpr tower = BigExpr::tower(prev + 2);
    BigExpr third;
    bool third_exact = true;
    if (prev == 1) {
      third = third_h_argument_first();
    } else {
      // sum_{n=a}^{m} eps_{i-1}(n) >= log_{i+1}(m + 1) - log_{i+1}(a).
      BigExpr inner = plus_one_upper(hp.value.log_iter(prev + 1));
      third = BigExpr::exp_tower(inner.height() + prev + 1, inner.base()).ceil();
      third = plus_one_upper(third);
      third_exact = false;
    }
    BigExpr mx = certified_max(certified_max(g.value, tower), third);
    memo.push_back(Certified{mx.ceil(), g.exact && third_exact});
  }
  return memo[static_cast<std::size_t>(i) - 1];
}

int k_of(const BigExpr& n) {
  int k = 0;
  for (int i = 1; i <= 12; ++i) {
    auto c = compare(h_of(i).value, n);
    if (!c) throw std::logic_error("cannot decide h(" + std::to_string(i) + ") <= n");
    if (*c == std::strong_ordering::greater) return k;
    k = i;
  }
  return k;
}

int k_of(std::int64_t n) {
  if (n < 2) return 0;
  return k_of(BigExpr(Interval(Rational(n)), true));
}

std::string to_string(Family f) {
  switch (f) {
    case Family::FaithfulA: return "faithful-a";
    case Family::FaithfulB: return "faithful-b";
    case Family::RationalizedA: return "rationalized-a";
    case Family::RationalizedB: return "rationalized-b";
    case Family::Accelerated: return "accelerated";
  }
  return "?";
}

std::shared_ptr<const Schedule> Schedule::faithful(MRecurrence m) {
  std::shared_ptr<Schedule> s(new Schedule());
  s->family_ = m == MRecurrence::A ? Family::FaithfulA : Family::FaithfulB;
  s->recurrence_ = m;
  s->init_n_star();
  return s;
}

std::shared_ptr<const Schedule> Schedule::rationalized(MRecurrence m) {
  std::shared_ptr<Schedule> s(new Schedule());
  s->family_ = m == MRecurrence::A ? Family::RationalizedA : Family::RationalizedB;
  s->recurrence_ = m;
  s->init_n_star();
  return s;
}

std::shared_ptr<const Schedule> Schedule::accelerated(AcceleratedSpec spec) {
  if (spec.k_max < 1) throw ConfigInvalid("k_max must be at least 1");
  if (spec.delta.size() != static_cast<std::size_t>(spec.k_max) ||
      spec.epsilon.size() != static_cast<std::size_t>(spec.k_max))
    throw ConfigInvalid("need exactly k_max delta and epsilon entries");
  if (spec.k_table.empty() && spec.k_block <= 0 && spec.k_max > 1)
    throw ConfigInvalid("k growth needs k_block or k_table");
  if (spec.shift < 0) throw ConfigInvalid("shift must be non-negative");
  for (const auto& [from, k] : spec.k_table)
    if (k < 0 || k > spec.k_max) throw ConfigInvalid("k_table entry out of range");
  for (auto* list : {&spec.delta, &spec.epsilon})
    for (const auto& p : *list)
      if (p.coef < 0) throw ConfigInvalid("coefficients must be non-negative");
  std::shared_ptr<Schedule> s(new Schedule());
  s->family_ = Family::Accelerated;
  s->recurrence_ = spec.m;
  s->spec_ = std::move(spec);
  s->init_n_star();
  if (s->spec_.check_hypotheses) validate_hypotheses(*s);
  return s;
}

std::string Schedule::name() const {
  return family_ == Family::Accelerated ? spec_.name : to_string(family_);
}

int Schedule::k(std::int64_t n) const {
  if (family_ != Family::Accelerated) return k_of(n);
  if (!spec_.k_table.empty()) {
    int k = 0;
    for (const auto& [from, kk] : spec_.k_table)
      if (from <= n) k = kk;
    return k;
  }
  if (spec_.k_max == 1) return 1;
  return static_cast<int>(std::min<std::int64_t>(1 + n / spec_.k_block, spec_.k_max));
}

std::int64_t Schedule::k_saturation() const {
  if (family_ != Family::Accelerated) return 2;
  if (!spec_.k_table.empty()) return std::max<std::int64_t>(1, spec_.k_table.back().first);
  if (spec_.k_max == 1) return 1;
  return static_cast<std::int64_t>(spec_.k_max - 1) * spec_.k_block;
}

bool Schedule::needs_rounding() const {
  if (family_ != Family::Accelerated) return true;
  for (auto* list : {&spec_.delta, &spec_.epsilon})
    for (const auto& p : *list)
      if (p.coef != 0 && !p.term.rational_valued()) return true;
  return false;
}

std::int64_t Schedule::rounding_bits(std::int64_t n) const { return spec_.bits + 2 * ceil_lg(n + 1); }

Interval Schedule::accelerated_value(const PowerSpec& p, std::int64_t n) const {
  if (p.coef == 0) return Interval(0L);
  const mpfr_prec_t prec = static_cast<mpfr_prec_t>(rounding_bits(n) + 96);
  Interval at = p.term.eval(Interval(Rational(n + spec_.shift), prec));
  Interval norm = p.term.eval(Interval(Rational(1 + spec_.shift), prec));
  return Interval(p.coef, prec) * at / norm;
}

Rational Schedule::realized_accelerated(const PowerSpec& p, std::int64_t n) const {
  if (p.coef == 0) return 0;
  if (p.term.rational_valued())
    return p.coef * p.term.eval_exact(Rational(n + spec_.shift)) / p.term.eval_exact(Rational(1 + spec_.shift));
  return dyadic_ceil(accelerated_value(p, n), static_cast<long>(rounding_bits(n)));
}

Interval Schedule::delta_enclosure(int i, std::int64_t n) const {
  const int kn = k(n);
  if (i < 0 || i > kn) throw OutOfRange("delta index " + std::to_string(i) + " outside 0.." + std::to_string(kn));
  if (i == kn) {
    Interval sum(0L);
    for (int j = 0; j < kn; ++j) sum = sum + delta_enclosure(j, n);
    return Interval(1L) - sum;
  }
  switch (family_) {
    case Family::FaithfulA:
    case Family::FaithfulB: return faithful_delta(i, Interval(Rational(n)));
    case Family::Accelerated: return accelerated_value(spec_.delta[static_cast<std::size_t>(i)], n);
    default: return Interval(block(n).delta[static_cast<std::size_t>(i)]);
  }
}

Interval Schedule::epsilon_enclosure(int i, std::int64_t n) const {
  const int kn = k(n);
  if (i < 0 || i > kn) throw OutOfRange("epsilon index " + std::to_string(i) + " outside 0.." + std::to_string(kn));
  if (i == kn) return Interval(0L);
  switch (family_) {
    case Family::FaithfulA:
    case Family::FaithfulB: return faithful_epsilon(i, Interval(Rational(n)));
    case Family::Accelerated: return accelerated_value(spec_.epsilon[static_cast<std::size_t>(i)], n);
    default: return Interval(block(n).epsilon[static_cast<std::size_t>(i)]);
  }
}

BlockParams Schedule::compute_block(std::int64_t n) const {
  BlockParams b;
  b.n = n;
  b.k = k(n);
  if (b.k < 1) throw OutOfRange("block " + std::to_string(n) + " has no branching (k = 0)");
  b.delta.assign(static_cast<std::size_t>(b.k) + 1, Rational(0));
  b.epsilon.assign(static_cast<std::size_t>(b.k) + 1, Rational(0));
  Rational sum = 0;
  for (int i = 0; i < b.k; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    switch (family_) {
      case Family::FaithfulA:
      case Family::FaithfulB: {
        Interval d = faithful_delta(i, Interval(Rational(n)));
        Interval e = faithful_epsilon(i, Interval(Rational(n)));
        b.delta[idx] = midpoint_rational(d);
        b.epsilon[idx] = midpoint_rational(e);
        b.delta_err = std::max(b.delta_err, Rational(Interval(d).upper_rational() - Interval(d).lower_rational()));
        b.epsilon_err = std::max(b.epsilon_err, Rational(e.upper_rational() - e.lower_rational()));
        break;
      }
      case Family::RationalizedA:
      case Family::RationalizedB: {
        const mpfr_prec_t prec = static_cast<mpfr_prec_t>(n + 2 + 96);
        const Interval x(Rational(n), prec);
        b.delta[idx] = dyadic_above(faithful_delta(i, x), static_cast<long>(n + 2));
        b.epsilon[idx] = dyadic_above(faithful_epsilon(i, x), static_cast<long>(n + 2));
        break;
      }
      case Family::Accelerated: {
        b.delta[idx] = realized_accelerated(spec_.delta[idx], n);
        // The realized dyadics are the probabilities of the chain, so they carry no error.
        b.epsilon[idx] = realized_accelerated(spec_.epsilon[idx], n);
        break;
      }
    }
    sum += b.delta[idx];
  }
  b.delta[static_cast<std::size_t>(b.k)] = 1 - sum;
  if (family_ == Family::FaithfulA || family_ == Family::FaithfulB)
    b.delta_err = std::max(b.delta_err, Rational(b.delta_err * b.k));
  return b;
}

const BlockParams& Schedule::block(std::int64_t n) const {
  if (n_star_ > 0 && n < n_star_) throw OutOfRange("block " + std::to_string(n) + " precedes N* = " + std::to_string(n_star_));
  {
    std::lock_guard lock(mutex_);
    if (auto it = blocks_.find(n); it != blocks_.end()) return *it->second;
  }
  auto computed = std::make_shared<const BlockParams>(compute_block(n));
  std::lock_guard lock(mutex_);
  auto [it, inserted] = blocks_.emplace(n, std::move(computed));
  return *it->second;
}

Integer Schedule::m(std::int64_t n) const {
  if (n < n_star_) throw OutOfRange("m(n) needs n >= N*");
  std::unique_lock lock(mutex_);
  const auto idx = static_cast<std::size_t>(n - n_star_);
  while (m_memo_.size() <= idx) {
    const std::int64_t cur = n_star_ + static_cast<std::int64_t>(m_memo_.size());
    if (m_memo_.empty()) {
      m_memo_.push_back(1);
      continue;
    }
    lock.unlock();
    const int kc = k(cur);
    lock.lock();
    Integer next = 0;
    if (recurrence_ == MRecurrence::A) {
      for (const auto& v : m_memo_) next += v;
      next *= 2 * kc;
    } else {
      for (const auto& v : m_memo_) next += ipow(v, static_cast<unsigned long>(kc));
    }
    m_memo_.push_back(next);
  }
  return m_memo_[idx];
}

void Schedule::init_n_star() {
  const std::int64_t limit = 1000000;
  for (std::int64_t n = 1; n < limit; ++n) {
    const int kn = k(n);
    if (kn < 1) continue;
    Interval sum(0L);
    bool ok = true;
    for (int i = 0; i < kn && ok; ++i) {
      Interval d(0L);
      switch (family_) {
        case Family::FaithfulA:
        case Family::FaithfulB: d = faithful_delta(i, Interval(Rational(n))); break;
        case Family::RationalizedA:
        case Family::RationalizedB: {
          const mpfr_prec_t prec = static_cast<mpfr_prec_t>(n + 2 + 96);
          d = Interval(dyadic_above(faithful_delta(i, Interval(Rational(n), prec)), static_cast<long>(n + 2)));
          break;
        }
        case Family::Accelerated: d = Interval(realized_accelerated(spec_.delta[static_cast<std::size_t>(i)], n)); break;
      }
      sum = sum + d;
    }
    if (ok && mpfr_cmp_ui(sum.hi().get(), 1) <= 0) {
      n_star_ = n;
      return;
    }
  }
  throw ConfigInvalid("no n with sum of delta_i(n) <= 1 below 10^6");
}

Interval Schedule::loss(std::int64_t n) const {
  if (family_ == Family::FaithfulA || family_ == Family::FaithfulB) {
    Interval sum(0L, kLoopPrecision);
    const Interval x(Rational(n), kLoopPrecision);
    for (int i = 0; i < k(n); ++i) sum = sum + faithful_delta(i, x) * faithful_epsilon(i, x);
    return sum;
  }
  const BlockParams& b = block(n);
  Rational sum = 0;
  for (int i = 0; i < b.k; ++i) sum += b.delta[static_cast<std::size_t>(i)] * b.epsilon[static_cast<std::size_t>(i)];
  return Interval(sum, kLoopPrecision);
}

LogPowerTerm Schedule::delta_term(int i) const {
  if (family_ == Family::Accelerated) return spec_.delta.at(static_cast<std::size_t>(i)).term;
  return faithful_delta_term(i);
}

LogPowerTerm Schedule::epsilon_term(int i) const {
  if (family_ == Family::Accelerated) return spec_.epsilon.at(static_cast<std::size_t>(i)).term;
  return faithful_epsilon_term(i);
}

bool Schedule::loss_convergent() const {
  if (family_ != Family::Accelerated) return true;
  for (int i = 0; i < spec_.k_max; ++i) {
    const auto& d = spec_.delta[static_cast<std::size_t>(i)];
    const auto& e = spec_.epsilon[static_cast<std::size_t>(i)];
    if (d.coef == 0 || e.coef == 0) continue;
    if (classify(d.term * e.term) == Convergence::Divergent) return false;
  }
  return true;
}

namespace {

/// sum_{i >= 2} of the loss contributed by branch i-1 from h(i) on (never reached by int64 n).
Interval faithful_far_tail() {
  static const Interval cached = [] {
    Interval h2 = *h_of(2).value.numeric();
    Interval part2 = Interval(0L) + Interval::from_bounds(Real(), tail_upper_bound(faithful_delta_term(1) * faithful_epsilon_term(1), h2 - Interval(1L)));
    // For i >= 3 the tail from h(i) >= g(i) is at most 2^-i plus one term far below 2^-(i+10).
    Interval rest = Interval(Rational(1, 4)) * (Interval(1L) + exp2i(-10));
    return Interval::from_bounds(Real(), (part2 + rest).hi());
  }();
  return cached;
}

}  // namespace

Interval Schedule::loss_tail(std::int64_t H) const {
  const Interval one(1L, kLoopPrecision);
  switch (family_) {
    case Family::FaithfulA:
    case Family::FaithfulB:
    case Family::RationalizedA:
    case Family::RationalizedB: {
      if (H < 2) throw OutOfRange("loss tail needs H >= 2");
      Interval t = tail_bounds(faithful_delta_term(0) * faithful_epsilon_term(0), Interval(Rational(H), kLoopPrecision));
      if (family_ == Family::RationalizedA || family_ == Family::RationalizedB)
        t = t + Interval::from_bounds(Real(kLoopPrecision), (Interval(3L) * exp2i(-H)).hi());
      return t + faithful_far_tail();
    }
    case Family::Accelerated: break;
  }
  if (H < k_saturation()) throw OutOfRange("loss tail needs H at or beyond k saturation");
  if (!loss_convergent()) throw DivergentLoss("sum of delta_i * eps_i diverges for " + name());
  Interval sum(0L, kLoopPrecision);
  const int K = spec_.k_max;
  for (int i = 0; i < K; ++i) {
    const auto& d = spec_.delta[static_cast<std::size_t>(i)];
    const auto& e = spec_.epsilon[static_cast<std::size_t>(i)];
    if (d.coef == 0 || e.coef == 0) continue;
    Interval norm = d.term.eval(Interval(Rational(1 + spec_.shift), kLoopPrecision)) *
                    e.term.eval(Interval(Rational(1 + spec_.shift), kLoopPrecision));
    Interval c = Interval(Rational(d.coef * e.coef), kLoopPrecision) / norm;
    sum = sum + c * tail_bounds(d.term * e.term, Interval(Rational(H + spec_.shift), kLoopPrecision));
  }
  if (needs_rounding()) {
    // realized = true + u with 0 <= u <= 2^-q(n), q(n) >= bits + 2 lg(n+1): sum_{n>H} 3K 2^-q(n) <= 3K 2^-bits / (H+1).
    Interval slack = Interval(Rational(3 * K), kLoopPrecision) * exp2i(-spec_.bits) / Interval(Rational(H + 1), kLoopPrecision);
    sum = sum + Interval::from_bounds(Real(kLoopPrecision), slack.hi());
  }
  return sum;
}

Interval Schedule::loss_sup_after(std::int64_t H) const {
  if (family_ != Family::Accelerated) return loss(std::max<std::int64_t>(H + 1, 2)) + exp2i(-60);
  const int K = spec_.k_max;
  Interval sum(0L, kLoopPrecision);
  for (int i = 0; i < K; ++i) {
    const auto& d = spec_.delta[static_cast<std::size_t>(i)];
    const auto& e = spec_.epsilon[static_cast<std::size_t>(i)];
    if (d.coef == 0 || e.coef == 0) continue;
    sum = sum + accelerated_value(d, H + 1) * accelerated_value(e, H + 1);
  }
  if (needs_rounding()) sum = sum + Interval(Rational(3 * K)) * exp2i(-rounding_bits(H + 1));
  return sum;
}

Rational delta(const Schedule& s, int i, std::int64_t n) {
  const auto& b = s.block(n);
  if (i < 0 || i > b.k) throw OutOfRange("delta index out of range");
  return b.delta[static_cast<std::size_t>(i)];
}

Rational epsilon(const Schedule& s, int i, std::int64_t n) {
  const auto& b = s.block(n);
  if (i < 0 || i > b.k) throw OutOfRange("epsilon index out of range");
  return b.epsilon[static_cast<std::size_t>(i)];
}

Integer m_reward(const Schedule& s, std::int64_t n) { return s.m(n); }

Interval windowed_survival(const Schedule& s, std::int64_t from, std::int64_t horizon) {
  if (from < s.n_star()) throw OutOfRange("survival product must start at or after N*");
  Interval prod(1L, kLoopPrecision);
  const Interval one(1L, kLoopPrecision);
  for (std::int64_t n = from; n <= horizon; ++n) prod = prod * (one - s.loss(n));
  return prod;
}

SurvivalReport survival_product(const Schedule& s, std::int64_t from, std::int64_t horizon) {
  if (!s.loss_convergent()) throw DivergentLoss("sum of delta_i * eps_i diverges for " + s.name());
  SurvivalReport r;
  r.from = from;
  r.horizon = std::max({horizon, from, s.k_saturation()});
  r.finite = windowed_survival(s, from, r.horizon);
  const Interval S = s.loss_tail(r.horizon);
  const Interval x = s.loss_sup_after(r.horizon);
  if (mpfr_cmp_ui(x.hi().get(), 1) >= 0) throw DivergentLoss("per-block loss does not stay below 1");
  // x <= -log(1 - x) <= x / (1 - xmax) for 0 <= x <= xmax < 1.
  const Interval one(1L, kLoopPrecision);
  Interval hi_arg = Interval::from_bounds(S.hi(), S.hi()) / (one - Interval::from_bounds(x.hi(), x.hi()));
  Interval lower = exp(-hi_arg);
  Interval upper = exp(-Interval::from_bounds(S.lo(), S.lo()));
  r.tail = Interval::from_bounds(lower.lo(), upper.hi());
  r.product = r.finite * r.tail;
  return r;
}

SkipIndex skip_index(const Schedule& s, const Rational& eps, std::int64_t horizon) {
  if (eps <= 0 || eps > 1) throw std::invalid_argument("skip_index needs 0 < eps <= 1");
  if (!s.loss_convergent()) throw DivergentLoss("sum of delta_i * eps_i diverges for " + s.name());
  const std::int64_t ns = s.n_star();
  const Interval target(Rational(1 - eps), kLoopPrecision);
  std::int64_t H = horizon > 0 ? horizon : std::max(ns, s.k_saturation()) + 4096;
  for (int attempt = 0; attempt < 12; ++attempt, H *= 2) {
    const SurvivalReport tail_only = survival_product(s, H + 1, H + 1);
    // Suffix products, lower and upper, from H + 1 downwards.
    Real lo = tail_only.product.lo(), hi = tail_only.product.hi();
    std::vector<std::pair<Real, Real>> suffix(static_cast<std::size_t>(H - ns + 2));
    suffix.back() = {lo, hi};
    const Interval one(1L, kLoopPrecision);
    for (std::int64_t n = H; n >= ns; --n) {
      Interval f = one - s.loss(n);
      mpfr_mul(lo.get(), lo.get(), f.lo().get(), MPFR_RNDD);
      mpfr_mul(hi.get(), hi.get(), f.hi().get(), MPFR_RNDU);
      suffix[static_cast<std::size_t>(n - ns)] = {lo, hi};
    }
    for (std::int64_t n = ns; n <= H + 1; ++n) {
      const auto& [l, h] = suffix[static_cast<std::size_t>(n - ns)];
      if (mpfr_cmp(l.get(), target.hi().get()) >= 0) {
        SkipIndex out;
        out.n = n;
        out.product = Interval::from_bounds(l, h);
        // If the previous index might also have qualified, n is only an over-approximation.
        if (n > ns) {
          const auto& prev = suffix[static_cast<std::size_t>(n - 1 - ns)];
          out.over_approximation = mpfr_cmp(prev.second.get(), target.lo().get()) >= 0;
        }
        return out;
      }
    }
    if (horizon > 0) break;
  }
  throw OutOfRange("no certifiable skip index for " + s.name() + " within the probed range");
}

ConfusionBound confusion_bound(const Schedule& s, std::int64_t n, int i, int j, const Rational& alpha) {
  const BlockParams& b = s.block(n);
  if (!(0 <= i && i < j && j <= b.k - 1)) throw OutOfRange("confusion_bound needs 0 <= i < j <= k(n) - 1");
  if (alpha < 0 || alpha > 1) throw OutOfRange("alpha must lie in [0, 1]");
  const Rational& di = b.delta[static_cast<std::size_t>(i)];
  const Rational& dj = b.delta[static_cast<std::size_t>(j)];
  const Rational& ei = b.epsilon[static_cast<std::size_t>(i)];
  const Rational& ej = b.epsilon[static_cast<std::size_t>(j)];
  ConfusionBound out;
  out.value = dj * (alpha * ej + (1 - alpha) * ei) + di * (alpha + (1 - alpha) * ei);
  out.alpha_free = std::min(Rational(dj * ei / 2), Rational(di / 2));
  return out;
}

Rational confusion_min(const Schedule& s, std::int64_t n) {
  const BlockParams& b = s.block(n);
  if (b.k < 2) return 0;
  std::optional<Rational> best;
  for (int i = 0; i < b.k - 1; ++i)
    for (int j = i + 1; j <= b.k - 1; ++j)
      for (int a = 0; a <= 1; ++a) {
        Rational v = confusion_bound(s, n, i, j, Rational(a)).value;
        if (!best || v < *best) best = v;
      }
  return *best;
}

}  // namespace cmdp
