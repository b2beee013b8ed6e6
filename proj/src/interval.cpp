#include "cmdp/interval.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace cmdp {

namespace {

void widen_exponent_range() {
  static std::once_flag once;
  std::call_once(once, [] {
    mpfr_set_emax(mpfr_get_emax_max());
    mpfr_set_emin(mpfr_get_emin_min());
  });
}

}  // namespace

Real::Real(mpfr_prec_t prec) {
  widen_exponent_range();
  mpfr_init2(value_, prec);
  mpfr_set_zero(value_, 1);
}

Real::Real(const Real& other) {
  mpfr_init2(value_, other.precision());
  mpfr_set(value_, other.value_, MPFR_RNDN);
}

Real::Real(Real&& other) noexcept : Real(other.precision()) { mpfr_swap(value_, other.value_); }

Real& Real::operator=(const Real& other) {
  if (this != &other) {
    mpfr_set_prec(value_, other.precision());
    mpfr_set(value_, other.value_, MPFR_RNDN);
  }
  return *this;
}

Real& Real::operator=(Real&& other) noexcept {
  mpfr_swap(value_, other.value_);
  return *this;
}

Real::~Real() { mpfr_clear(value_); }

std::string Real::str(int digits) const {
  if (!is_finite()) return mpfr_inf_p(value_) ? (mpfr_sgn(value_) > 0 ? "inf" : "-inf") : "nan";
  char* buf = nullptr;
  mpfr_asprintf(&buf, "%.*Rg", digits, value_);
  std::string out(buf);
  mpfr_free_str(buf);
  return out;
}

Interval::Interval() : Interval(Precision{kDefaultPrecision}) {}

Interval::Interval(Precision prec) : lo_(prec.bits), hi_(prec.bits) {}

Interval::Interval(const Rational& q, mpfr_prec_t prec) : lo_(prec), hi_(prec) {
  mpfr_set_q(lo_.get(), q.get_mpq_t(), MPFR_RNDD);
  mpfr_set_q(hi_.get(), q.get_mpq_t(), MPFR_RNDU);
}

Interval::Interval(long v, mpfr_prec_t prec) : lo_(prec), hi_(prec) {
  mpfr_set_si(lo_.get(), v, MPFR_RNDD);
  mpfr_set_si(hi_.get(), v, MPFR_RNDU);
}

Interval Interval::hull(const Interval& a, const Interval& b) {
  Interval r(Interval::Precision{std::max(a.precision(), b.precision())});
  mpfr_min(r.lo_.get(), a.lo_.get(), b.lo_.get(), MPFR_RNDD);
  mpfr_max(r.hi_.get(), a.hi_.get(), b.hi_.get(), MPFR_RNDU);
  return r;
}

Interval Interval::from_bounds(const Real& lo, const Real& hi) {
  Interval r(Interval::Precision{std::max(lo.precision(), hi.precision())});
  mpfr_set(r.lo_.get(), lo.get(), MPFR_RNDD);
  mpfr_set(r.hi_.get(), hi.get(), MPFR_RNDU);
  if (mpfr_cmp(r.lo_.get(), r.hi_.get()) > 0) throw std::invalid_argument("interval bounds out of order");
  return r;
}

Interval Interval::from_double(double lo, double hi, mpfr_prec_t prec) {
  Interval r(Interval::Precision{prec});
  mpfr_set_d(r.lo_.get(), lo, MPFR_RNDD);
  mpfr_set_d(r.hi_.get(), hi, MPFR_RNDU);
  return r;
}

double Interval::mid_d() const {
  Real m(precision());
  mpfr_add(m.get(), lo_.get(), hi_.get(), MPFR_RNDN);
  mpfr_div_2ui(m.get(), m.get(), 1, MPFR_RNDN);
  return m.to_double();
}

double Interval::width_d() const {
  Real w(precision());
  mpfr_sub(w.get(), hi_.get(), lo_.get(), MPFR_RNDU);
  return mpfr_get_d(w.get(), MPFR_RNDU);
}

bool Interval::contains(const Rational& q) const {
  return mpfr_cmp_q(lo_.get(), q.get_mpq_t()) <= 0 && mpfr_cmp_q(hi_.get(), q.get_mpq_t()) >= 0;
}

bool Interval::contains(double x) const {
  return mpfr_cmp_d(lo_.get(), x) <= 0 && mpfr_cmp_d(hi_.get(), x) >= 0;
}

std::optional<std::strong_ordering> compare(const Interval& a, const Interval& b) {
  if (mpfr_cmp(a.hi_.get(), b.lo_.get()) < 0) return std::strong_ordering::less;
  if (mpfr_cmp(a.lo_.get(), b.hi_.get()) > 0) return std::strong_ordering::greater;
  if (mpfr_equal_p(a.lo_.get(), a.hi_.get()) && mpfr_equal_p(b.lo_.get(), b.hi_.get()) &&
      mpfr_equal_p(a.lo_.get(), b.lo_.get()))
    return std::strong_ordering::equal;
  return std::nullopt;
}

bool Interval::certainly_less(const Interval& b) const { return mpfr_cmp(hi_.get(), b.lo_.get()) < 0; }
bool Interval::certainly_le(const Interval& b) const { return mpfr_cmp(hi_.get(), b.lo_.get()) <= 0; }

Interval operator+(const Interval& a, const Interval& b) {
  Interval r(Interval::Precision{std::max(a.precision(), b.precision())});
  mpfr_add(r.lo_.get(), a.lo_.get(), b.lo_.get(), MPFR_RNDD);
  mpfr_add(r.hi_.get(), a.hi_.get(), b.hi_.get(), MPFR_RNDU);
  return r;
}

Interval operator-(const Interval& a, const Interval& b) {
  Interval r(Interval::Precision{std::max(a.precision(), b.precision())});
  mpfr_sub(r.lo_.get(), a.lo_.get(), b.hi_.get(), MPFR_RNDD);
  mpfr_sub(r.hi_.get(), a.hi_.get(), b.lo_.get(), MPFR_RNDU);
  return r;
}

Interval Interval::operator-() const {
  Interval r(Interval::Precision{precision()});
  mpfr_neg(r.lo_.get(), hi_.get(), MPFR_RNDD);
  mpfr_neg(r.hi_.get(), lo_.get(), MPFR_RNDU);
  return r;
}

Interval operator*(const Interval& a, const Interval& b) {
  const mpfr_prec_t prec = std::max(a.precision(), b.precision());
  Interval r(Interval::Precision{prec});
  if (mpfr_sgn(a.lo_.get()) >= 0 && mpfr_sgn(b.lo_.get()) >= 0) {
    mpfr_mul(r.lo_.get(), a.lo_.get(), b.lo_.get(), MPFR_RNDD);
    mpfr_mul(r.hi_.get(), a.hi_.get(), b.hi_.get(), MPFR_RNDU);
    return r;
  }
  Real t(prec);
  mpfr_srcptr xs[2] = {a.lo_.get(), a.hi_.get()};
  mpfr_srcptr ys[2] = {b.lo_.get(), b.hi_.get()};
  mpfr_set_inf(r.lo_.get(), 1);
  mpfr_set_inf(r.hi_.get(), -1);
  for (auto x : xs)
    for (auto y : ys) {
      mpfr_mul(t.get(), x, y, MPFR_RNDD);
      mpfr_min(r.lo_.get(), r.lo_.get(), t.get(), MPFR_RNDD);
      mpfr_mul(t.get(), x, y, MPFR_RNDU);
      mpfr_max(r.hi_.get(), r.hi_.get(), t.get(), MPFR_RNDU);
    }
  return r;
}

Interval operator/(const Interval& a, const Interval& b) {
  if (mpfr_sgn(b.lo_.get()) <= 0 && mpfr_sgn(b.hi_.get()) >= 0)
    throw std::domain_error("interval division by an interval containing 0");
  const mpfr_prec_t prec = std::max(a.precision(), b.precision());
  Interval inv(Interval::Precision{prec});
  mpfr_ui_div(inv.lo_.get(), 1, b.hi_.get(), MPFR_RNDD);
  mpfr_ui_div(inv.hi_.get(), 1, b.lo_.get(), MPFR_RNDU);
  return a * inv;
}

Rational Interval::lower_rational() const {
  Rational q;
  mpfr_get_q(q.get_mpq_t(), lo_.get());
  return q;
}

Rational Interval::upper_rational() const {
  Rational q;
  mpfr_get_q(q.get_mpq_t(), hi_.get());
  return q;
}

std::string Interval::str(int digits) const { return "[" + lo_.str(digits) + ", " + hi_.str(digits) + "]"; }

Interval log(const Interval& x) {
  if (mpfr_sgn(x.lo().get()) <= 0) throw std::domain_error("log of a non-positive interval");
  Interval r(Interval::Precision{x.precision()});
  mpfr_log(r.lo().get(), x.lo().get(), MPFR_RNDD);
  mpfr_log(r.hi().get(), x.hi().get(), MPFR_RNDU);
  return r;
}

Interval exp(const Interval& x) {
  Interval r(Interval::Precision{x.precision()});
  mpfr_exp(r.lo().get(), x.lo().get(), MPFR_RNDD);
  mpfr_exp(r.hi().get(), x.hi().get(), MPFR_RNDU);
  return r;
}

Interval pow(const Interval& x, const Interval& a) { return exp(a * log(x)); }

Interval sqrt(const Interval& x) {
  if (mpfr_sgn(x.lo().get()) < 0) throw std::domain_error("sqrt of a negative interval");
  Interval r(Interval::Precision{x.precision()});
  mpfr_sqrt(r.lo().get(), x.lo().get(), MPFR_RNDD);
  mpfr_sqrt(r.hi().get(), x.hi().get(), MPFR_RNDU);
  return r;
}

Interval min(const Interval& a, const Interval& b) {
  Interval r(Interval::Precision{std::max(a.precision(), b.precision())});
  mpfr_min(r.lo().get(), a.lo().get(), b.lo().get(), MPFR_RNDD);
  mpfr_min(r.hi().get(), a.hi().get(), b.hi().get(), MPFR_RNDU);
  return r;
}

Interval max(const Interval& a, const Interval& b) {
  Interval r(Interval::Precision{std::max(a.precision(), b.precision())});
  mpfr_max(r.lo().get(), a.lo().get(), b.lo().get(), MPFR_RNDD);
  mpfr_max(r.hi().get(), a.hi().get(), b.hi().get(), MPFR_RNDU);
  return r;
}

Interval ceil(const Interval& x) {
  Interval r(Interval::Precision{x.precision()});
  mpfr_rint_ceil(r.lo().get(), x.lo().get(), MPFR_RNDD);
  mpfr_rint_ceil(r.hi().get(), x.hi().get(), MPFR_RNDU);
  return r;
}

Interval floor(const Interval& x) {
  Interval r(Interval::Precision{x.precision()});
  mpfr_rint_floor(r.lo().get(), x.lo().get(), MPFR_RNDD);
  mpfr_rint_floor(r.hi().get(), x.hi().get(), MPFR_RNDU);
  return r;
}

Interval exp2i(long e, mpfr_prec_t prec) {
  Interval r(Interval::Precision{prec});
  mpfr_set_ui_2exp(r.lo().get(), 1, e, MPFR_RNDD);
  mpfr_set_ui_2exp(r.hi().get(), 1, e, MPFR_RNDU);
  return r;
}

Interval ln2(mpfr_prec_t prec) {
  Interval r(Interval::Precision{prec});
  mpfr_const_log2(r.lo().get(), MPFR_RNDD);
  mpfr_const_log2(r.hi().get(), MPFR_RNDU);
  return r;
}

}  // namespace cmdp
