#include "cmdp/rational.hpp"

#include <stdexcept>

namespace cmdp {

std::string to_string(const Rational& q) {
  if (q.get_den() == 1) return q.get_num().get_str();
  return q.get_str();
}

std::string to_string(const Integer& z) { return z.get_str(); }

Rational parse_rational(std::string_view text) {
  std::string s(text);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  s = s.substr(b);
  if (s.empty()) throw std::invalid_argument("empty rational");
  if (auto dot = s.find('.'); dot != std::string::npos) {
    bool neg = s[0] == '-';
    std::string digits = s.substr(neg ? 1 : 0);
    dot = digits.find('.');
    std::string whole = digits.substr(0, dot), frac = digits.substr(dot + 1);
    if (whole.empty()) whole = "0";
    for (char c : whole + frac)
      if (c < '0' || c > '9') throw std::invalid_argument("bad decimal: " + s);
    Integer num(whole + frac), den = 1;
    mpz_ui_pow_ui(den.get_mpz_t(), 10, frac.size());
    Rational r(num, den);
    r.canonicalize();
    return neg ? Rational(-r) : r;
  }
  Rational r;
  if (r.set_str(s, 10) != 0) throw std::invalid_argument("bad rational: " + s);
  if (r.get_den() == 0) throw std::invalid_argument("zero denominator: " + s);
  r.canonicalize();
  return r;
}

double to_double(const Rational& q) { return q.get_d(); }

Integer ipow(const Integer& base, unsigned long e) {
  Integer r;
  mpz_pow_ui(r.get_mpz_t(), base.get_mpz_t(), e);
  return r;
}

}  // namespace cmdp
