#pragma once

#include <vector>

#include "cmdp/series.hpp"

namespace cmdp::oracle {

constexpr mpfr_prec_t kOraclePrec = 512;

inline Interval ival(long v) { return Interval(v, kOraclePrec); }

// Cauchy condensation oracle. Condensing L times (with the first L exponents equal to 1)
// leaves c_L(n) ~ 1 / prod_j (log_j psi_L(n))^{a_{L+j}}, psi_L(n) = log_L(x_L(n)) where
// x_L is the L-fold substitution n -> 2^n. The decision at each level is a numeric Raabe
// estimate n (1 - c(n+1)/c(n)) of the leading power at n = e^120.
inline Interval psi(int level, const Interval& n) {
  if (level == 0) return n;
  Interval v = n * ln2(kOraclePrec);
  if (level == 1) return v;
  Interval kappa = cmdp::log(ln2(kOraclePrec));
  if (level >= 3) {
    // kappa_L = log(log 2 + kappa_{L-1}(2^n) 2^-n), with kappa_{L-1} in [-1, 0] and n > 1000.
    Interval slack = Interval::hull(-exp2i(-1000, kOraclePrec), ival(0));
    kappa = cmdp::log(ln2(kOraclePrec) + slack);
  }
  return v + kappa;
}

inline Interval log_condensed(const std::vector<Rational>& a, int level, const Interval& n) {
  Interval arg = psi(level, n);
  Interval out = ival(0);
  for (std::size_t j = level; j < a.size(); ++j) {
    out = out - Interval(a[j], kOraclePrec) * cmdp::log(arg);
    arg = cmdp::log(arg);
  }
  return out;
}

inline Convergence condensation_oracle(const std::vector<Rational>& a) {
  Interval n = cmdp::exp(ival(120));
  for (int level = 0;; ++level) {
    if (static_cast<std::size_t>(level) >= a.size()) return Convergence::Divergent;  // constant term
    Interval ratio = cmdp::exp(log_condensed(a, level, n + ival(1)) - log_condensed(a, level, n));
    double p = (n * (ival(1) - ratio)).mid_d();
    if (p > 1.125) return Convergence::Convergent;
    if (p < 0.875) return Convergence::Divergent;
  }
}

}  // namespace cmdp::oracle
