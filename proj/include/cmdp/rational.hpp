#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <string>
#include <string_view>

namespace cmdp {

using Rational = mpq_class;
using Integer = mpz_class;

/// "p/q", or "p" when the denominator is 1.
std::string to_string(const Rational& q);
std::string to_string(const Integer& z);

/// Accepts "p/q", integers and plain decimals such as "0.25". No exponent notation.
Rational parse_rational(std::string_view text);

double to_double(const Rational& q);

inline Rational pow2(std::int64_t e) {
  Rational r = 1;
  if (e >= 0) mpz_mul_2exp(r.get_num_mpz_t(), r.get_num_mpz_t(), static_cast<mp_bitcnt_t>(e));
  else mpz_mul_2exp(r.get_den_mpz_t(), r.get_den_mpz_t(), static_cast<mp_bitcnt_t>(-e));
  r.canonicalize();
  return r;
}

Integer ipow(const Integer& base, unsigned long e);

}  // namespace cmdp
