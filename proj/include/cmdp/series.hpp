#pragma once

#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmdp/interval.hpp"
#include "cmdp/rational.hpp"

namespace cmdp {

struct DomainTooSmall : std::domain_error {
  using std::domain_error::domain_error;
};
struct DivergentTerm : std::domain_error {
  using std::domain_error::domain_error;
};

/// i-fold natural logarithm. Every intermediate value (and the result) must stay positive.
Interval log_iter(int i, const Interval& x);

/// Values of the form exp^height(base). Kept normalized: an exponential is folded into the
/// base whenever the result still fits comfortably in an MPFR exponent.
class BigExpr {
 public:
  BigExpr() : BigExpr(Interval(0L)) {}
  explicit BigExpr(const Interval& value, bool integer = false);
  static BigExpr exp_tower(int height, const Interval& base, bool integer = false);
  /// Tower(0) = e^0 = 1, Tower(i+1) = e^Tower(i).
  static BigExpr tower(int i);

  int height() const { return height_; }
  const Interval& base() const { return base_; }
  bool integer() const { return integer_; }
  std::optional<Interval> numeric() const;

  BigExpr log_iter(int i) const;
  BigExpr exp() const { return exp_tower(height_ + 1, base_); }
  /// Marks the value as rounded up to an integer; only the numeric form is actually rounded.
  BigExpr ceil() const;
  std::string str() const;

  friend std::optional<std::strong_ordering> compare(const BigExpr& a, const BigExpr& b);

 private:
  void normalize();
  int height_ = 0;
  Interval base_;
  bool integer_ = false;
};

/// Certainly-ordered maximum; throws std::logic_error when the two cannot be separated.
BigExpr certified_max(const BigExpr& a, const BigExpr& b);

/// term(n) = 1 / (n^{a0} * prod_{i=1..d} (log_i n)^{a_i}).
struct LogPowerTerm {
  std::vector<Rational> a;

  LogPowerTerm() = default;
  explicit LogPowerTerm(std::vector<Rational> exps) : a(std::move(exps)) {
    for (auto& x : a) x.canonicalize();
  }

  std::size_t depth() const { return a.empty() ? 0 : a.size() - 1; }
  Interval eval(const Interval& x) const;
  /// Smallest integer at which every iterated log in the term exceeds 1.
  BigExpr n_min() const;
  LogPowerTerm operator*(const LogPowerTerm& other) const;
  /// True when every exponent is an integer and no log factor appears, so values at integers are rational.
  bool rational_valued() const;
  Rational eval_exact(const Rational& x) const;
  std::string str() const;
};

enum class Convergence { Convergent, Divergent };
std::string to_string(Convergence c);

/// Bertrand criterion: the first exponent different from 1 decides.
Convergence classify(const LogPowerTerm& t);

/// Enclosure of sum_{n > N} term(n), via the antiderivative of the Bertrand form.
/// Throws DivergentTerm for divergent terms and DomainTooSmall when N is below the
/// range where the bound is certified.
Interval tail_bounds(const LogPowerTerm& t, const Interval& N);
/// Upper end of tail_bounds.
Real tail_upper_bound(const LogPowerTerm& t, const Interval& N);

/// Natural-log enclosure of 1 - x for 0 <= x < 1.
Interval log1m(const Interval& x);

}  // namespace cmdp
