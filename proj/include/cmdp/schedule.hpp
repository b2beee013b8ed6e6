#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmdp/interval.hpp"
#include "cmdp/kv.hpp"
#include "cmdp/rational.hpp"
#include "cmdp/series.hpp"

namespace cmdp {

struct OutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};
struct DivergentLoss : std::domain_error {
  using std::domain_error::domain_error;
};
/// An accelerated schedule that breaks the convergence/divergence hypotheses or normalization.
struct HypothesisViolated : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// delta_i(n) = 1 / log_{i+1} n.
Interval faithful_delta(int i, const Interval& n);
/// epsilon_i(n) = 1 / (n * log n * ... * log_{i+1} n).
Interval faithful_epsilon(int i, const Interval& n);
/// Exponent vector of delta_i * epsilon_j as a Bertrand term.
LogPowerTerm faithful_delta_term(int i);
LogPowerTerm faithful_epsilon_term(int i);

/// g(i): least N with sum_{n>N} delta_{i-1}(n) eps_{i-1}(n) <= 2^-i. Exact for i = 1,
/// a certified over-approximation beyond that.
struct Certified {
  BigExpr value;
  bool exact;
};
Certified g_of(int i);
Certified h_of(int i);
/// g*(i) for the rationalized family (tail of gamma*theta instead of delta*eps).
Certified g_star_of(int i);
/// Largest i with h(i) <= n (0 when n < h(1) = 2).
int k_of(const BigExpr& n);
int k_of(std::int64_t n);

enum class Family { FaithfulA, FaithfulB, RationalizedA, RationalizedB, Accelerated };
enum class MRecurrence { A, B };
std::string to_string(Family f);

/// value(n) = coef * term(n + shift) / term(1 + shift): coef is the value at n = 1.
struct PowerSpec {
  Rational coef;
  LogPowerTerm term;
};

struct AcceleratedSpec {
  std::string name = "accelerated";
  std::int64_t shift = 0;
  /// Irrational values are rounded up to dyadics with bits + 2*ceil(lg(n+1)) fractional bits.
  int bits = 40;
  MRecurrence m = MRecurrence::A;
  /// k(n) = min(1 + floor(n / k_block), k_max) unless k_table is given.
  std::int64_t k_block = 0;
  int k_max = 1;
  /// (first n, k) steps; k(n) is the k of the last step with first n <= n.
  std::vector<std::pair<std::int64_t, int>> k_table;
  std::vector<PowerSpec> delta, epsilon;
  /// Validate the convergence/divergence hypotheses when the schedule is built.
  bool check_hypotheses = true;
};

/// Everything the gadget builders need about block n.
struct BlockParams {
  std::int64_t n = 0;
  int k = 0;
  /// Realized values, size k + 1; the top entries are 1 - sum and 0.
  std::vector<Rational> delta, epsilon;
  /// Bound on |realized - true probability| per entry; nonzero only for the irrational faithful families.
  Rational delta_err = 0, epsilon_err = 0;
};

struct SurvivalReport {
  Interval product;
  Interval finite;
  Interval tail;
  std::int64_t from = 0;
  std::int64_t horizon = 0;
};

struct SkipIndex {
  std::int64_t n = 0;
  Interval product;
  /// The bound is certified but N may exceed the true minimum (the probe is not exhaustive).
  bool over_approximation = false;
};

struct ConfusionBound {
  Rational value;
  /// min(delta_j eps_i / 2, delta_i / 2): an alpha-free lower bound on the value.
  Rational alpha_free;
};

class Schedule {
 public:
  static std::shared_ptr<const Schedule> faithful(MRecurrence m);
  static std::shared_ptr<const Schedule> rationalized(MRecurrence m);
  static std::shared_ptr<const Schedule> accelerated(AcceleratedSpec spec);
  static std::shared_ptr<const Schedule> from_kv(const KvFile& kv);
  static std::shared_ptr<const Schedule> load(const std::string& path);
  /// Named presets used by tests and the command line.
  static std::shared_ptr<const Schedule> preset(const std::string& name);
  static std::vector<std::string> preset_names();

  Family family() const { return family_; }
  MRecurrence recurrence() const { return recurrence_; }
  std::string name() const;
  const AcceleratedSpec& spec() const { return spec_; }

  int k(std::int64_t n) const;
  std::int64_t n_star() const { return n_star_; }
  /// Smallest n from which k(n) no longer changes (max int64 when it keeps growing).
  std::int64_t k_saturation() const;

  const BlockParams& block(std::int64_t n) const;
  Integer m(std::int64_t n) const;
  /// Enclosures of the schedule's own values (irrational for the faithful family).
  Interval delta_enclosure(int i, std::int64_t n) const;
  Interval epsilon_enclosure(int i, std::int64_t n) const;

  /// Per-block loss sum_{i<k(n)} delta_i(n) eps_i(n) as an enclosure.
  Interval loss(std::int64_t n) const;
  /// Enclosure of sum_{n > H} loss(n), and an upper bound on loss(n) for every n > H.
  Interval loss_tail(std::int64_t H) const;
  Interval loss_sup_after(std::int64_t H) const;
  bool loss_convergent() const;
  /// Bertrand terms for delta_i and eps_i (accelerated and faithful families).
  LogPowerTerm delta_term(int i) const;
  LogPowerTerm epsilon_term(int i) const;

  KvFile to_kv() const;

 private:
  Schedule() = default;
  void init_n_star();
  BlockParams compute_block(std::int64_t n) const;
  Interval accelerated_value(const PowerSpec& p, std::int64_t n) const;
  Rational realized_accelerated(const PowerSpec& p, std::int64_t n) const;
  std::int64_t rounding_bits(std::int64_t n) const;
  bool needs_rounding() const;

  Family family_ = Family::FaithfulA;
  MRecurrence recurrence_ = MRecurrence::A;
  AcceleratedSpec spec_;
  std::int64_t n_star_ = 0;

  mutable std::mutex mutex_;
  mutable std::map<std::int64_t, std::shared_ptr<const BlockParams>> blocks_;
  mutable std::vector<Integer> m_memo_;
};

using ScheduleRef = std::shared_ptr<const Schedule>;

/// Checks, for nonzero coefficients: delta_i eps_i convergent, delta_j eps_i (i < j) and delta_i
/// divergent, and sum_{i<k(n)} delta_i(n) <= 1 with eps_i(n) <= 1 on a probe range past N*.
/// Throws HypothesisViolated naming the first failure.
void validate_hypotheses(const Schedule& s);

/// Realized block values (exact).
Rational delta(const Schedule& s, int i, std::int64_t n);
Rational epsilon(const Schedule& s, int i, std::int64_t n);
Integer m_reward(const Schedule& s, std::int64_t n);

/// Certified enclosure of prod_{n >= from} (1 - loss(n)): explicit factors through `horizon`,
/// then a tail enclosure from the loss tail sums.
SurvivalReport survival_product(const Schedule& s, std::int64_t from, std::int64_t horizon);
/// The same explicit factors, but only over [from, horizon] (no tail).
Interval windowed_survival(const Schedule& s, std::int64_t from, std::int64_t horizon);
/// Least probed N >= N* whose certified tail product is >= 1 - eps.
SkipIndex skip_index(const Schedule& s, const Rational& eps, std::int64_t horizon = 0);

ConfusionBound confusion_bound(const Schedule& s, std::int64_t n, int i, int j, const Rational& alpha);
/// e_n: minimum of the confusion value over 0 <= i < j <= k(n) - 1 and alpha in {0, 1}
/// (the value is linear in alpha). Zero when k(n) < 2.
Rational confusion_min(const Schedule& s, std::int64_t n);

}  // namespace cmdp
