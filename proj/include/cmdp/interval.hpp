#pragma once

#include <mpfr.h>

#include <compare>
#include <optional>
#include <string>

#include "cmdp/rational.hpp"

namespace cmdp {

inline constexpr mpfr_prec_t kDefaultPrecision = 256;

/// Owning MPFR value. The exponent range is widened to the maximum on first use
/// so that towers like exp(exp(exp(e))) stay representable.
class Real {
 public:
  explicit Real(mpfr_prec_t prec = kDefaultPrecision);
  Real(const Real& other);
  Real(Real&& other) noexcept;
  Real& operator=(const Real& other);
  Real& operator=(Real&& other) noexcept;
  ~Real();

  mpfr_ptr get() { return value_; }
  mpfr_srcptr get() const { return value_; }
  mpfr_prec_t precision() const { return mpfr_get_prec(value_); }

  double to_double() const { return mpfr_get_d(value_, MPFR_RNDN); }
  bool is_finite() const { return mpfr_number_p(value_) != 0; }
  std::string str(int digits = 12) const;

  friend int cmp(const Real& a, const Real& b) { return mpfr_cmp(a.value_, b.value_); }

 private:
  mpfr_t value_;
};

/// Closed interval [lo, hi] with outward-rounded arithmetic.
class Interval {
 public:
  struct Precision {
    mpfr_prec_t bits;
  };
  Interval();
  explicit Interval(Precision prec);
  Interval(const Rational& q, mpfr_prec_t prec = kDefaultPrecision);
  Interval(long v, mpfr_prec_t prec = kDefaultPrecision);
  static Interval hull(const Interval& a, const Interval& b);
  static Interval from_bounds(const Real& lo, const Real& hi);
  static Interval from_double(double lo, double hi, mpfr_prec_t prec = kDefaultPrecision);

  const Real& lo() const { return lo_; }
  const Real& hi() const { return hi_; }
  Real& lo() { return lo_; }
  Real& hi() { return hi_; }
  mpfr_prec_t precision() const { return lo_.precision(); }

  double lo_d() const { return mpfr_get_d(lo_.get(), MPFR_RNDD); }
  double hi_d() const { return mpfr_get_d(hi_.get(), MPFR_RNDU); }
  double mid_d() const;
  double width_d() const;
  bool contains(const Rational& q) const;
  bool contains(double x) const;
  bool is_finite() const { return lo_.is_finite() && hi_.is_finite(); }

  /// Tri-state ordering: less/greater when the intervals are disjoint, nullopt when they overlap.
  friend std::optional<std::strong_ordering> compare(const Interval& a, const Interval& b);
  bool certainly_less(const Interval& b) const;
  bool certainly_le(const Interval& b) const;
  bool certainly_positive() const { return mpfr_sgn(lo_.get()) > 0; }

  friend Interval operator+(const Interval& a, const Interval& b);
  friend Interval operator-(const Interval& a, const Interval& b);
  friend Interval operator*(const Interval& a, const Interval& b);
  friend Interval operator/(const Interval& a, const Interval& b);
  Interval operator-() const;
  Interval& operator+=(const Interval& b) { return *this = *this + b; }
  Interval& operator*=(const Interval& b) { return *this = *this * b; }

  /// Rational bounds: floor(lo * 2^bits) / 2^bits and ceil(hi * 2^bits) / 2^bits, exact.
  Rational lower_rational() const;
  Rational upper_rational() const;

  std::string str(int digits = 12) const;

 private:
  Real lo_, hi_;
};

Interval log(const Interval& x);
Interval exp(const Interval& x);
Interval pow(const Interval& x, const Interval& a);
Interval sqrt(const Interval& x);
Interval min(const Interval& a, const Interval& b);
Interval max(const Interval& a, const Interval& b);
Interval ceil(const Interval& x);
Interval floor(const Interval& x);
/// 2^e exactly.
Interval exp2i(long e, mpfr_prec_t prec = kDefaultPrecision);
/// Natural log of 2 as an enclosure.
Interval ln2(mpfr_prec_t prec = kDefaultPrecision);

}  // namespace cmdp
