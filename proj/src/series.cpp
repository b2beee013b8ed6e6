#include "cmdp/series.hpp"

#include <algorithm>

namespace cmdp {

namespace {

// Folding exp into the base is allowed while the base stays below this bound, which keeps
// binary exponents around 1.5e9 bits: far inside MPFR's widened range.
constexpr double kFoldLimit = 1e9;

bool positive(const Interval& x) { return mpfr_sgn(x.lo().get()) > 0; }

}  // namespace

Interval log_iter(int i, const Interval& x) {
  Interval y = x;
  for (int step = 0; step < i; ++step) {
    if (!positive(y)) throw DomainTooSmall("log_iter: argument not positive at step " + std::to_string(step));
    y = log(y);
  }
  if (i > 0 && !positive(y)) throw DomainTooSmall("log_iter: result not positive");
  return y;
}

BigExpr::BigExpr(const Interval& value, bool integer) : height_(0), base_(value), integer_(integer) {}

BigExpr BigExpr::exp_tower(int height, const Interval& base, bool integer) {
  BigExpr b(base, integer);
  b.height_ = height;
  b.normalize();
  return b;
}

BigExpr BigExpr::tower(int i) {
  if (i < 0) throw std::invalid_argument("tower index must be non-negative");
  return exp_tower(i + 1, Interval(0L));
}

void BigExpr::normalize() {
  while (height_ > 0 && mpfr_cmp_d(base_.hi().get(), kFoldLimit) <= 0) {
    base_ = cmdp::exp(base_);
    --height_;
  }
}

std::optional<Interval> BigExpr::numeric() const {
  if (height_ != 0) return std::nullopt;
  return base_;
}

BigExpr BigExpr::log_iter(int i) const {
  if (i <= height_) return exp_tower(height_ - i, base_);
  return BigExpr(cmdp::log_iter(i - height_, base_));
}

BigExpr BigExpr::ceil() const {
  BigExpr b = *this;
  if (height_ == 0) b.base_ = cmdp::ceil(base_);
  b.integer_ = true;
  return b;
}

std::string BigExpr::str() const {
  if (height_ == 0) {
    if (integer_ && mpfr_cmp_d(base_.hi().get(), 1e15) < 0) return std::to_string(static_cast<long long>(base_.hi_d()));
    return base_.hi().str(8);
  }
  std::string inner = "exp^" + std::to_string(height_) + "(" + base_.hi().str(8) + ")";
  return integer_ ? "ceil(" + inner + ")" : inner;
}

std::optional<std::strong_ordering> compare(const BigExpr& a, const BigExpr& b) {
  const int m = std::min(a.height_, b.height_);
  int ha = a.height_ - m, hb = b.height_ - m;
  Interval xa = a.base_, xb = b.base_;
  bool flipped = false;
  if (hb > ha) {
    std::swap(ha, hb);
    std::swap(xa, xb);
    flipped = true;
  }
  auto result = [&](std::strong_ordering o) -> std::optional<std::strong_ordering> {
    if (!flipped) return o;
    return o == std::strong_ordering::less ? std::strong_ordering::greater
           : o == std::strong_ordering::greater ? std::strong_ordering::less
                                                : o;
  };
  while (ha > 0) {
    if (mpfr_sgn(xb.hi().get()) <= 0) return result(std::strong_ordering::greater);
    if (!positive(xb)) return std::nullopt;
    xb = cmdp::log(xb);
    --ha;
  }
  auto c = compare(xa, xb);
  if (!c) return std::nullopt;
  return result(*c);
}

BigExpr certified_max(const BigExpr& a, const BigExpr& b) {
  auto c = compare(a, b);
  if (!c) {
    // Overlapping enclosures: the hull is a valid over-approximation only in numeric form.
    if (a.height() == 0 && b.height() == 0) return BigExpr(Interval::hull(a.base(), b.base()));
    throw std::logic_error("cannot order " + a.str() + " and " + b.str());
  }
  return *c == std::strong_ordering::less ? b : a;
}

Interval LogPowerTerm::eval(const Interval& x) const {
  if (a.empty()) return Interval(1L);
  std::size_t last = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0) last = i;
  if (!positive(x)) throw DomainTooSmall("term evaluated at a non-positive point");
  Interval expo(0L);
  Interval li = x;
  for (std::size_t i = 0; i <= last; ++i) {
    if (i > 0) li = cmdp::log(li);
    if (!positive(li)) throw DomainTooSmall("iterated log not positive in term evaluation");
    if (a[i] != 0) expo = expo + Interval(a[i]) * cmdp::log(li);
  }
  return cmdp::exp(-expo);
}

BigExpr LogPowerTerm::n_min() const {
  std::size_t d = 0;
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a[i] != 0) d = i;
  if (d == 0) return BigExpr(Interval(1L), true);
  BigExpr t = BigExpr::tower(static_cast<int>(d));
  if (auto v = t.numeric()) return BigExpr(floor(*v) + Interval(1L), true);
  return t.ceil();
}

LogPowerTerm LogPowerTerm::operator*(const LogPowerTerm& other) const {
  LogPowerTerm r;
  r.a.assign(std::max(a.size(), other.a.size()), Rational(0));
  for (std::size_t i = 0; i < a.size(); ++i) r.a[i] += a[i];
  for (std::size_t i = 0; i < other.a.size(); ++i) r.a[i] += other.a[i];
  return r;
}

bool LogPowerTerm::rational_valued() const {
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a[i] != 0) return false;
  return a.empty() || a[0].get_den() == 1;
}

Rational LogPowerTerm::eval_exact(const Rational& x) const {
  if (!rational_valued()) throw std::logic_error("term is not rational-valued: " + str());
  if (a.empty()) return 1;
  const long e = a[0].get_num().get_si();
  Rational p = 1;
  mpz_pow_ui(p.get_num_mpz_t(), x.get_num_mpz_t(), static_cast<unsigned long>(e >= 0 ? e : -e));
  mpz_pow_ui(p.get_den_mpz_t(), x.get_den_mpz_t(), static_cast<unsigned long>(e >= 0 ? e : -e));
  p.canonicalize();
  return e >= 0 ? Rational(1 / p) : p;
}

std::string LogPowerTerm::str() const {
  std::string out = "(";
  for (std::size_t i = 0; i < a.size(); ++i) out += (i ? "," : "") + to_string(a[i]);
  return out + ")";
}

std::string to_string(Convergence c) { return c == Convergence::Convergent ? "convergent" : "divergent"; }

Convergence classify(const LogPowerTerm& t) {
  for (const auto& x : t.a)
    if (x != 1) return x > 1 ? Convergence::Convergent : Convergence::Divergent;
  return Convergence::Divergent;
}

namespace {

struct TailShape {
  std::size_t j;  // first exponent different from 1
  std::size_t d;  // last nonzero exponent
  Rational aj;
};

TailShape tail_shape(const LogPowerTerm& t) {
  if (classify(t) == Convergence::Divergent) throw DivergentTerm("tail bound requested for divergent term " + t.str());
  TailShape s{0, 0, 0};
  while (t.a[s.j] == 1) ++s.j;
  s.aj = t.a[s.j];
  for (std::size_t i = 0; i < t.a.size(); ++i)
    if (t.a[i] != 0) s.d = i;
  return s;
}

// F(u) = prod_{l=j+1..d} (log_{l-j} u)^{-a_l}, plus the negative-exponent drift sum at u.
std::pair<Interval, Interval> trailing_factor(const LogPowerTerm& t, const TailShape& s, const Interval& u) {
  Interval expo(0L), negsum(0L), prod(1L), lm = u;
  for (std::size_t l = s.j + 1; l <= s.d; ++l) {
    if (!positive(lm)) throw DomainTooSmall("tail bound: iterated log not positive");
    lm = cmdp::log(lm);
    if (!positive(lm)) throw DomainTooSmall("tail bound: iterated log not positive");
    prod = prod * lm;
    if (t.a[l] != 0) expo = expo + Interval(t.a[l]) * cmdp::log(lm);
    if (t.a[l] < 0) negsum = negsum + Interval(Rational(-t.a[l])) / prod;
  }
  return {cmdp::exp(-expo), negsum};
}

Interval substitute(const TailShape& s, const Interval& N) {
  return s.j == 0 ? N : log_iter(static_cast<int>(s.j), N);
}

}  // namespace

Interval tail_bounds(const LogPowerTerm& t, const Interval& N) {
  const TailShape s = tail_shape(t);
  const Interval U = substitute(s, N);
  if (!positive(U)) throw DomainTooSmall("tail bound: N below the certified range");
  auto [F, negsum] = trailing_factor(t, s, U);
  const Interval aj(s.aj);
  const Interval one(1L);
  Interval eta = Interval::from_bounds(negsum.hi(), negsum.hi());
  Interval gap = aj - one - eta;
  if (!positive(gap)) throw DomainTooSmall("tail bound: N below the monotone range of the log factors");
  Interval upper = F * pow(U, one - aj) / gap;

  const Interval N1 = N + one;
  const Interval U1 = substitute(s, N1);
  bool all_nonneg = true;
  for (std::size_t l = s.j + 1; l <= s.d; ++l)
    if (t.a[l] < 0) all_nonneg = false;
  Real lower(N.precision());
  mpfr_set_zero(lower.get(), 1);
  if (all_nonneg) {
    // F is non-increasing, so the integral over [U1, W] is at least F(W) * (U1^{1-a} - W^{1-a}) / (a - 1).
    Interval W = U1;
    for (int step = 0; step < 64; ++step) {
      W = W * Interval(2L);
      Interval FW = trailing_factor(t, s, W).first;
      Interval piece = FW * (pow(U1, one - aj) - pow(W, one - aj)) / (aj - one);
      if (mpfr_cmp(piece.lo().get(), lower.get()) > 0) mpfr_set(lower.get(), piece.lo().get(), MPFR_RNDD);
    }
  } else {
    mpfr_set(lower.get(), t.eval(N1).lo().get(), MPFR_RNDD);
  }
  Real hi = upper.hi();
  if (mpfr_cmp(lower.get(), hi.get()) > 0) mpfr_set(lower.get(), hi.get(), MPFR_RNDD);
  return Interval::from_bounds(lower, hi);
}

Real tail_upper_bound(const LogPowerTerm& t, const Interval& N) { return tail_bounds(t, N).hi(); }

Interval log1m(const Interval& x) { return cmdp::log(Interval(1L) - x); }

}  // namespace cmdp
