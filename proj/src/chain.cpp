#include <algorithm>

#include "cmdp/gadgets.hpp"

namespace cmdp {

std::string to_string(ChainVariant v) {
  switch (v) {
    case ChainVariant::StepImplicit: return "step-implicit";
    case ChainVariant::RewardImplicit: return "reward-implicit";
    case ChainVariant::Restart: return "restart";
    case ChainVariant::RestartRewardImplicit: return "restart-reward-implicit";
  }
  return "?";
}

ChainVariant parse_chain_variant(const std::string& text) {
  for (auto v : {ChainVariant::StepImplicit, ChainVariant::RewardImplicit, ChainVariant::Restart,
                 ChainVariant::RestartRewardImplicit})
    if (to_string(v) == text) return v;
  throw ConfigInvalid("unknown chain variant: " + text);
}

namespace {

std::int64_t fit(const Integer& z, const char* what) {
  if (!z.fits_slong_p()) throw OutOfRange(std::string(what) + " does not fit in 64 bits");
  return z.get_si();
}

int ceil_lg(std::int64_t x) {
  int d = 0;
  while ((std::int64_t{1} << d) < x) ++d;
  return d;
}

std::int64_t split(std::int64_t lo, std::int64_t hi) { return lo + (hi - lo + 1) / 2; }

OutEdge ctrl(StateId to, Rational reward) { return OutEdge{std::move(to), std::move(reward), std::nullopt, 0}; }
OutEdge rnd(StateId to, Rational reward, Rational p, Rational err = 0) {
  return OutEdge{std::move(to), std::move(reward), std::move(p), std::move(err)};
}

const std::vector<std::string>& known_roles() {
  static const std::vector<std::string> roles{"start", "bot", "s",  "rs", "rp", "up", "c", "cs", "cp", "ng",
                                              "dn",    "ps",  "pb", "w",  "wr", "wc", "r", "b"};
  return roles;
}

}  // namespace

GadgetChain::GadgetChain(ScheduleRef schedule, ChainOptions options) : sched_(std::move(schedule)), opt_(options) {
  if (opt_.rationalized) {
    if (sched_->family() == Family::FaithfulA || sched_->family() == Family::FaithfulB)
      sched_ = Schedule::rationalized(sched_->recurrence());
  }
  const bool ri = reward_implicit();
  if (ri && sched_->recurrence() != MRecurrence::B)
    throw VariantMismatch("reward-implicit chains need the m recurrence B, schedule " + sched_->name() + " uses A");
  if (!ri && sched_->recurrence() != MRecurrence::A)
    throw VariantMismatch("step-implicit chains need the m recurrence A, schedule " + sched_->name() + " uses B");
}

bool GadgetChain::reward_implicit() const {
  return opt_.variant == ChainVariant::RewardImplicit || opt_.variant == ChainVariant::RestartRewardImplicit;
}
bool GadgetChain::restarts() const {
  return opt_.variant == ChainVariant::Restart || opt_.variant == ChainVariant::RestartRewardImplicit;
}

Integer GadgetChain::m(std::int64_t n) const { return sched_->m(n); }

std::int64_t GadgetChain::max_branches() const {
  if (sched_->family() == Family::Accelerated) return sched_->spec().k_max + 1;
  return 2;
}

GadgetChain::Shape GadgetChain::compute_shape(std::int64_t n) const {
  if (n < sched_->n_star()) throw ScheduleRange("block " + std::to_string(n) + " is below N*");
  Shape sh;
  sh.k = sched_->k(n);
  sh.m = sched_->m(n);
  sh.mi = sh.m.fits_slong_p() ? sh.m.get_si() : -1;
  sh.depth = opt_.binary ? ceil_lg(sh.k + 1) : 1;
  if (reward_implicit()) {
    Integer p = 1;
    for (int i = 0; i <= sh.k; ++i) {
      sh.ri_pow.push_back(p);
      sh.ri_up.push_back(fit(Integer(n) * p, "reward-implicit path length"));
      if (opt_.bounded) fit(p, "bounded reward-implicit segment");
      p *= sh.m;
    }
    sh.up = sh.ri_up.back();
    sh.down = 1;
    sh.reentry = 1;
    sh.length = 0;
    return sh;
  }
  if (opt_.bounded) {
    const std::int64_t km = fit(Integer(sh.k) * sh.m, "bounded segment length");
    sh.reentry = std::max<std::int64_t>(1, n - sched_->n_star());
    sh.up = km;
    sh.down = km + sh.reentry - 1;
  }
  sh.length = 2 * sh.depth + sh.up + sh.down;
  return sh;
}

const GadgetChain::Shape& GadgetChain::shape(std::int64_t n) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = shapes_.find(n); it != shapes_.end()) return *it->second;
  }
  auto sh = std::make_shared<const Shape>(compute_shape(n));
  std::lock_guard lock(mutex_);
  return *shapes_.emplace(n, std::move(sh)).first->second;
}

int GadgetChain::fan_depth(std::int64_t n) const { return shape(n).depth; }

std::int64_t GadgetChain::block_length(std::int64_t n) const {
  if (reward_implicit()) throw VariantMismatch("reward-implicit blocks have branch-dependent length");
  return shape(n).length;
}

std::int64_t GadgetChain::depth_of_block(std::int64_t n) const {
  if (reward_implicit()) throw VariantMismatch("reward-implicit chains are not depth-determined");
  const std::int64_t ns = n_star();
  if (n < ns) throw ScheduleRange("block below N*");
  std::int64_t from = ns, d = 1;
  {
    std::lock_guard lock(mutex_);
    auto it = depth_memo_.upper_bound(n);
    if (it != depth_memo_.begin()) {
      --it;
      from = it->first;
      d = it->second;
    }
  }
  for (std::int64_t j = from; j < n; ++j) {
    if (__builtin_add_overflow(d, block_length(j), &d)) throw OutOfRange("depth overflow");
    if ((j + 1) % 64 == 0) {
      std::lock_guard lock(mutex_);
      depth_memo_[j + 1] = d;
    }
  }
  std::lock_guard lock(mutex_);
  depth_memo_[n] = d;
  return d;
}

int GadgetChain::node_depth(std::int64_t lo, std::int64_t hi, std::int64_t size) const {
  std::int64_t a = 0, b = size;
  int d = 0;
  while (a != lo || b != hi) {
    if (b - a <= 1) throw UnknownState("not a tree node: [" + std::to_string(lo) + "," + std::to_string(hi) + ")");
    const std::int64_t mid = split(a, b);
    if (hi <= mid) b = mid;
    else if (lo >= mid) a = mid;
    else throw UnknownState("not a tree node: [" + std::to_string(lo) + "," + std::to_string(hi) + ")");
    ++d;
  }
  return d;
}

std::int64_t GadgetChain::declared_depth(const StateId& s) const {
  if (reward_implicit()) throw VariantMismatch("reward-implicit chains are not depth-determined");
  if (s.role == "start") return 0;
  if (s.role == "bot") return -1;
  const std::int64_t n = s.gadget;
  const auto& sh = shape(n);
  const std::int64_t base = depth_of_block(n);
  const std::int64_t size = sh.k + 1;
  if (s.role == "s") return base;
  if (s.role == "rs") return base + node_depth(s.branch, s.offset, size);
  if (s.role == "rp") return base + s.offset;
  if (s.role == "up") return base + sh.depth + s.offset;
  const std::int64_t c = base + sh.depth + sh.up;
  if (s.role == "c") return c;
  if (s.role == "cs") return c + node_depth(s.branch, s.offset, size);
  if (s.role == "cp") return c + s.offset;
  if (s.role == "dn" || s.role == "r" || s.role == "b") return c + sh.depth + s.offset;
  if (s.role == "w") return base + s.offset;
  if (s.role == "wr" || s.role == "wc") return base + sh.length - sh.reentry + s.offset;
  throw UnknownState("no declared depth for " + s.str());
}

Rational GadgetChain::declared_total(const StateId& s) const {
  if (!reward_implicit()) throw VariantMismatch("step-implicit chains do not fix the running total");
  const std::int64_t n = s.gadget;
  if (s.role == "start") return 0;
  if (s.role == "bot") throw UnknownState("the sink has no fixed total");
  if (s.role == "w") return -(n - s.branch);
  if (s.role == "wr") return -(n - s.branch) + s.offset;
  const auto& sh = shape(n);
  const auto x = static_cast<std::size_t>(std::clamp<std::int64_t>(s.branch, 0, sh.k));
  if (s.role == "ng") return -s.offset;
  if (s.role == "dn") return Rational(-sh.ri_pow[x]);
  if (s.role == "ps" || s.role == "pb") return Rational(-sh.ri_pow[x] + s.offset);
  if (s.role == "r") return 0;
  if (s.role == "b") {
    if (!opt_.bounded) return Rational(-ri_penalty(n));
    const Integer pen = ri_penalty(n);
    const Integer t = s.offset - 1;
    return Rational(t <= pen ? Integer(-t) : Integer(-pen + (t - pen)));
  }
  return 0;
}

Integer GadgetChain::ri_penalty(std::int64_t n) const {
  // Upper bound on the depth of s_j, memoized; the penalty exceeds every step count before the dip.
  const std::int64_t ns = n_star();
  auto maxpath = [&](std::int64_t j) -> Integer {
    const auto& sh = shape(j);
    const Integer mk = sh.ri_pow.back();
    return Integer(2 * sh.depth + 4 + std::max<std::int64_t>(1, j - ns)) + Integer(j) * mk + 2 * mk;
  };
  std::function<Integer(std::int64_t)> dsb;
  std::function<Integer(std::int64_t)> pen;
  pen = [&](std::int64_t j) -> Integer { return dsb(j + 1) + 2; };
  dsb = [&](std::int64_t j) -> Integer {
    if (j <= ns) return 1;
    {
      std::lock_guard lock(mutex_);
      if (auto it = ri_depth_memo_.find(j); it != ri_depth_memo_.end()) return it->second;
    }
    Integer v = dsb(j - 1) + maxpath(j - 1);
    if (restarts() && j - 2 >= ns) {
      const Integer p = opt_.bounded ? 1 + 2 * pen(j - 2) : Integer(3);
      const Integer alt = dsb(j - 2) + maxpath(j - 2) + p;
      if (alt > v) v = alt;
    }
    std::lock_guard lock(mutex_);
    ri_depth_memo_[j] = v;
    return v;
  };
  return pen(n);
}

StateKind GadgetChain::kind(const StateId& s) const {
  if (s.role == "s" || s.role == "rs") return StateKind::Random;
  if (s.role == "dn" && s.offset == 0) return StateKind::Random;
  if (std::find(known_roles().begin(), known_roles().end(), s.role) == known_roles().end())
    throw UnknownState("not a chain state: " + s.str());
  return StateKind::Controlled;
}

Degree GadgetChain::degree(const StateId& s) const { return edges(s).size(); }

std::vector<OutEdge> GadgetChain::successors(const StateId& s, std::size_t limit) const {
  auto out = edges(s);
  if (out.size() > limit) out.resize(limit);
  return out;
}

StateId GadgetChain::after_random_leaf(std::int64_t n, std::int64_t i, int depth, std::int64_t row) const {
  if (depth < shape(n).depth) return make_state(n, "rp", i, depth, row);
  return make_state(n, "up", i, 0, row);
}

OutEdge GadgetChain::enter_down(std::int64_t n, std::int64_t x, std::int64_t row) const {
  const auto& sh = shape(n);
  if (!reward_implicit()) return ctrl(make_state(n, "dn", x, 0, row), 0);
  const Integer& p = sh.ri_pow[static_cast<std::size_t>(x)];
  if (!opt_.bounded) return ctrl(make_state(n, "dn", x, 0, row), Rational(-p));
  return ctrl(p == 1 ? make_state(n, "dn", x, 0, row) : make_state(n, "ng", x, 1, row), -1);
}

StateId GadgetChain::after_controlled_leaf(std::int64_t n, std::int64_t x, int depth, std::int64_t row) const {
  return make_state(n, "cp", x, depth, row);
}

std::vector<OutEdge> GadgetChain::random_fan(const StateId& s, const GadgetChain::Shape& sh) const {
  const std::int64_t n = s.gadget, size = sh.k + 1;
  const auto& blk = sched_->block(n);
  auto err_of = [&](std::int64_t i) { return i == sh.k ? Rational(sh.k) * blk.delta_err : blk.delta_err; };
  std::vector<OutEdge> out;
  if (!opt_.binary) {
    for (std::int64_t i = 0; i < size; ++i) {
      const Rational& p = blk.delta[static_cast<std::size_t>(i)];
      if (p > 0) out.push_back(rnd(after_random_leaf(n, i, 1, s.row), 0, p, err_of(i)));
    }
    return out;
  }
  std::int64_t lo = 0, hi = size;
  if (s.role == "rs") {
    lo = s.branch;
    hi = s.offset;
  }
  const int d = node_depth(lo, hi, size);
  auto mass = [&](std::int64_t a, std::int64_t b) {
    Rational m = 0, e = 0;
    for (std::int64_t i = a; i < b; ++i) {
      m += blk.delta[static_cast<std::size_t>(i)];
      e += err_of(i);
    }
    return std::pair{m, e};
  };
  const auto [total, total_err] = mass(lo, hi);
  const std::int64_t mid = split(lo, hi);
  for (auto [a, b] : {std::pair{lo, mid}, std::pair{mid, hi}}) {
    auto [part, part_err] = mass(a, b);
    if (part == 0) continue;
    StateId child = b - a == 1 ? after_random_leaf(n, a, d + 1, s.row) : make_state(n, "rs", a, b, s.row);
    Rational err = 0;
    if (total_err > 0) {
      const Rational r = part / total;
      err = total > total_err ? Rational((part_err + r * total_err) / (total - total_err)) : Rational(1);
    }
    out.push_back(rnd(std::move(child), 0, part / total, err));
  }
  return out;
}

std::vector<OutEdge> GadgetChain::controlled_fan(const StateId& s, const GadgetChain::Shape& sh) const {
  const std::int64_t n = s.gadget, size = sh.k + 1;
  auto leaf = [&](std::int64_t x, int depth) {
    if (depth < sh.depth) return ctrl(after_controlled_leaf(n, x, depth, s.row), 0);
    return enter_down(n, x, s.row);
  };
  std::vector<OutEdge> out;
  if (!opt_.binary) {
    for (std::int64_t x = 0; x < size; ++x) out.push_back(leaf(x, 1));
    return out;
  }
  std::int64_t lo = 0, hi = size;
  if (s.role == "cs") {
    lo = s.branch;
    hi = s.offset;
  }
  const int d = node_depth(lo, hi, size);
  const std::int64_t mid = split(lo, hi);
  for (auto [a, b] : {std::pair{lo, mid}, std::pair{mid, hi}})
    out.push_back(b - a == 1 ? leaf(a, d + 1) : ctrl(make_state(n, "cs", a, b, s.row), 0));
  return out;
}

std::int64_t GadgetChain::restart_length(std::int64_t n) const {
  if (!reward_implicit()) return shape(n).down + shape(n + 1).length;
  if (!opt_.bounded) return 3;
  return fit(1 + 2 * ri_penalty(n), "restart path length");
}

std::vector<OutEdge> GadgetChain::escape_edge(std::int64_t n, std::int64_t x, std::int64_t row, const Rational& p) const {
  const auto& blk = sched_->block(n);
  if (!restarts()) return {rnd(bottom(), 0, p, blk.epsilon_err)};
  Rational reward;
  if (reward_implicit()) {
    reward = opt_.bounded ? Rational(1) : Rational(shape(n).ri_pow[static_cast<std::size_t>(x)]);
  } else if (opt_.bounded) {
    reward = -1;
  } else {
    reward = Rational(-(Integer(x) * shape(n).m + m(n + 2)));
  }
  return {rnd(make_state(n, "r", x, 1, row), reward, p, blk.epsilon_err)};
}

std::vector<OutEdge> GadgetChain::down_edges(const StateId& s, const GadgetChain::Shape& sh) const {
  const std::int64_t n = s.gadget, x = s.branch, t = s.offset, row = s.row;
  if (x < 0 || x > sh.k) throw UnknownState("branch out of range: " + s.str());
  const auto& blk = sched_->block(n);
  const StateId next_block = block_entry(n + 1, row);
  if (!reward_implicit()) {
    const Integer xm = Integer(x) * sh.m;
    auto step_reward = [&](std::int64_t tt) -> Rational {
      if (!opt_.bounded) return tt == 0 ? Rational(-xm) : Rational(0);
      return tt < x * sh.mi ? -1 : 0;
    };
    StateId next = t + 1 < sh.down ? make_state(n, "dn", x, t + 1, row) : next_block;
    if (t > 0) return {ctrl(std::move(next), step_reward(t))};
    const Rational& eps = blk.epsilon[static_cast<std::size_t>(x)];
    std::vector<OutEdge> out{rnd(std::move(next), step_reward(0), 1 - eps, blk.epsilon_err)};
    if (eps > 0) {
      auto esc = escape_edge(n, x, row, eps);
      out.insert(out.end(), esc.begin(), esc.end());
    }
    return out;
  }
  // Reward-implicit: dn/x/0 pays back m^x on both exits, possibly as a run of unit edges.
  const Integer& p = sh.ri_pow[static_cast<std::size_t>(x)];
  const Rational& eps = blk.epsilon[static_cast<std::size_t>(x)];
  std::vector<OutEdge> out;
  if (!opt_.bounded) {
    out.push_back(rnd(next_block, Rational(p), 1 - eps, blk.epsilon_err));
    if (eps > 0) {
      if (restarts()) out.push_back(escape_edge(n, x, row, eps)[0]);
      else out.push_back(rnd(bottom(), Rational(p), eps, blk.epsilon_err));
    }
    return out;
  }
  out.push_back(rnd(p == 1 ? next_block : make_state(n, "ps", x, 1, row), 1, 1 - eps, blk.epsilon_err));
  if (eps > 0) {
    if (p == 1) out.push_back(restarts() ? escape_edge(n, x, row, eps)[0] : rnd(bottom(), 1, eps, blk.epsilon_err));
    else out.push_back(rnd(make_state(n, "pb", x, 1, row), 1, eps, blk.epsilon_err));
  }
  return out;
}

std::vector<OutEdge> GadgetChain::restart_edges(const StateId& s) const {
  const std::int64_t n = s.gadget, x = s.branch, t = s.offset, row = s.row;
  const std::int64_t P = restart_length(n);
  if (t < 1 || t >= P) throw UnknownState("restart offset out of range: " + s.str());
  Rational reward = 0;
  if (reward_implicit()) {
    const Integer pen = ri_penalty(n);
    if (!opt_.bounded) reward = Rational(t == 1 ? Integer(-pen) : pen);
    else reward = Integer(t) <= pen ? -1 : 1;
  } else if (opt_.bounded) {
    const auto& sh = shape(n);
    if (t < (x + 1) * sh.mi) reward = -1;
    else if (t >= P - sh.mi) reward = 1;
    if ((x + 2) * sh.mi > P) throw OutOfRange("restart path too short for its penalty");
  } else if (t == P - 1) {
    reward = Rational(m(n + 2));
  }
  if (t + 1 < P) return {ctrl(make_state(n, "b", x, t + 1, row), reward)};
  return {ctrl(block_entry(n + 2, row + 1), reward), ctrl(column_bottom(n + 2, n + 2, row + 1), reward)};
}

std::vector<OutEdge> GadgetChain::column_edges(const StateId& s) const {
  const std::int64_t n = s.gadget, e = s.branch, t = s.offset, row = s.row;
  if (e < n_star() || e > n) throw UnknownState("column entry out of range: " + s.str());
  const std::int64_t deficit = n - e;
  const StateId next_block = block_entry(n + 1, row);
  const StateId next_column = column_bottom(n + 1, e, row);
  if (reward_implicit()) {
    const std::int64_t R = opt_.bounded ? std::max<std::int64_t>(1, deficit) : 1;
    if (s.role == "w") {
      OutEdge back = R == 1 ? ctrl(next_block, deficit) : ctrl(make_state(n, "wr", e, 1, row), 1);
      return {back, ctrl(next_column, -1)};
    }
    if (s.role == "wr") return {ctrl(t + 1 < R ? make_state(n, "wr", e, t + 1, row) : next_block, 1)};
    throw UnknownState("not a reward-implicit column state: " + s.str());
  }
  const auto& sh = shape(n);
  const std::int64_t R = sh.reentry, H = sh.length - R;
  auto back_reward = [&](std::int64_t tt) -> Rational {
    if (!opt_.bounded) return deficit;
    return tt < deficit ? 1 : 0;
  };
  if (s.role == "w") {
    if (t < H) return {ctrl(make_state(n, "w", e, t + 1, row), 0)};
    if (t > H) throw UnknownState("column offset out of range: " + s.str());
    OutEdge back = ctrl(R == 1 ? next_block : make_state(n, "wr", e, 1, row), back_reward(0));
    OutEdge on = ctrl(R == 1 ? next_column : make_state(n, "wc", e, 1, row), -1);
    return {back, on};
  }
  if (s.role == "wr") return {ctrl(t + 1 < R ? make_state(n, "wr", e, t + 1, row) : next_block, back_reward(t))};
  if (s.role == "wc") return {ctrl(t + 1 < R ? make_state(n, "wc", e, t + 1, row) : next_column, 0)};
  throw UnknownState("not a column state: " + s.str());
}

std::vector<OutEdge> GadgetChain::edges(const StateId& s) const {
  if (s.step || s.total) throw UnknownState("annotated state given to a chain: " + s.str());
  if (s.role == "start") return {ctrl(block_entry(n_star()), 0), ctrl(column_bottom(n_star(), n_star()), 0)};
  if (s.role == "bot") return {ctrl(bottom(), -1)};
  if (s.row < 0 || (s.row > 0 && !restarts())) throw UnknownState("no such row: " + s.str());
  const std::int64_t n = s.gadget;
  const auto& sh = shape(n);
  const std::string& role = s.role;
  if (role == "s" || role == "rs") return random_fan(s, sh);
  if (role == "rp") return {ctrl(after_random_leaf(n, s.branch, static_cast<int>(s.offset) + 1, s.row), 0)};
  if (role == "up") {
    const std::int64_t i = s.branch, t = s.offset;
    if (i < 0 || i > sh.k) throw UnknownState("branch out of range: " + s.str());
    if (reward_implicit()) {
      const std::int64_t len = sh.ri_up[static_cast<std::size_t>(i)];
      return {ctrl(t + 1 < len ? make_state(n, "up", i, t + 1, s.row) : controlled(n, s.row), 0)};
    }
    Rational reward = 0;
    if (opt_.bounded) reward = t < i * sh.mi ? 1 : 0;
    else if (t == 0) reward = Rational(Integer(i) * sh.m);
    return {ctrl(t + 1 < sh.up ? make_state(n, "up", i, t + 1, s.row) : controlled(n, s.row), reward)};
  }
  if (role == "c" || role == "cs") return controlled_fan(s, sh);
  if (role == "cp") {
    const int d = static_cast<int>(s.offset) + 1;
    if (d < sh.depth) return {ctrl(after_controlled_leaf(n, s.branch, d, s.row), 0)};
    return {enter_down(n, s.branch, s.row)};
  }
  if (role == "dn") return down_edges(s, sh);
  if (role == "ng" || role == "ps" || role == "pb") {
    if (!reward_implicit() || !opt_.bounded) throw UnknownState("no such state: " + s.str());
    const Integer& p = sh.ri_pow[static_cast<std::size_t>(s.branch)];
    const bool last = Integer(s.offset + 1) >= p;
    if (role == "ng") return {ctrl(last ? make_state(n, "dn", s.branch, 0, s.row) : make_state(n, "ng", s.branch, s.offset + 1, s.row), -1)};
    if (role == "ps") return {ctrl(last ? block_entry(n + 1, s.row) : make_state(n, "ps", s.branch, s.offset + 1, s.row), 1)};
    if (!last) return {ctrl(make_state(n, "pb", s.branch, s.offset + 1, s.row), 1)};
    if (restarts()) {
      auto e = escape_edge(n, s.branch, s.row, 1)[0];
      return {ctrl(e.target, e.reward)};
    }
    return {ctrl(bottom(), 1)};
  }
  if (role == "w" || role == "wr" || role == "wc") return column_edges(s);
  if (role == "r" || role == "b") {
    if (!restarts()) throw UnknownState("no restarts in this chain: " + s.str());
    return restart_edges(s);
  }
  throw UnknownState("not a chain state: " + s.str());
}

std::size_t GadgetChain::route(const StateId& node, std::int64_t x) const {
  const auto& sh = shape(node.gadget);
  std::int64_t lo = 0, hi = sh.k + 1;
  if (node.role == "cs") {
    lo = node.branch;
    hi = node.offset;
  } else if (node.role != "c") {
    return 0;
  }
  x = std::clamp(x, lo, hi - 1);
  if (!opt_.binary) return static_cast<std::size_t>(x);
  return x < split(lo, hi) ? 0 : 1;
}

NodeTag GadgetChain::tag(const StateId& s) const {
  if (s.role == "up" && s.offset == 0) return {NodeTag::Up, s.branch};
  if (s.role == "dn" && s.offset == 0) return {NodeTag::Down, s.branch};
  if (s.role == "r") return {NodeTag::Restart, s.branch};
  if (s.role == "bot") return {NodeTag::Sink, 0};
  return {};
}

StructuralFacts GadgetChain::facts() const {
  return StructuralFacts{[](const StateId& s) { return s.role == "bot"; }, {}};
}

ChainPtr build_chain(ScheduleRef schedule, ChainOptions options) {
  return std::make_shared<GadgetChain>(std::move(schedule), options);
}

bool BlockFragment::contains(const StateId& s) const {
  if (s.role == "bot") return false;
  if (s.gadget != n || s.row != entry.row) return false;
  return s.role != "w" && s.role != "wr" && s.role != "wc" && s.role != "r" && s.role != "b";
}

BlockFragment build_block(ScheduleRef schedule, std::int64_t n, ChainOptions options) {
  if (n < schedule->n_star()) throw ScheduleRange("block " + std::to_string(n) + " is below N*");
  auto chain = build_chain(std::move(schedule), options);
  return BlockFragment{chain, n, chain->block_entry(n)};
}

ChainPtr build_reward_implicit(ScheduleRef schedule, bool binary, bool bounded) {
  return build_chain(std::move(schedule), {ChainVariant::RewardImplicit, binary, false, bounded});
}

ChainPtr build_restart(ScheduleRef schedule, ChainVariant variant, bool binary, bool bounded) {
  if (variant != ChainVariant::Restart && variant != ChainVariant::RestartRewardImplicit)
    throw VariantMismatch("build_restart needs a restart variant");
  return build_chain(std::move(schedule), {variant, binary, false, bounded});
}

ChainPtr to_binary_branching(const GadgetChain& c) {
  auto o = c.options();
  o.binary = true;
  return build_chain(c.schedule_ref(), o);
}

ChainPtr rationalize(const GadgetChain& c) {
  const auto f = c.schedule().family();
  if (f != Family::FaithfulA && f != Family::FaithfulB) throw VariantMismatch("rationalize needs a faithful schedule");
  auto o = c.options();
  o.rationalized = true;
  return build_chain(c.schedule_ref(), o);
}

ChainPtr bound_rewards(const GadgetChain& c) {
  auto o = c.options();
  o.bounded = true;
  return build_chain(c.schedule_ref(), o);
}

// ---- manifest ----

KvFile ChainManifest::to_kv() const {
  KvFile kv;
  kv.set("chain.variant", to_string(options.variant));
  kv.set("chain.binary", options.binary ? "true" : "false");
  kv.set("chain.rationalized", options.rationalized ? "true" : "false");
  kv.set("chain.bounded", options.bounded ? "true" : "false");
  if (!schedule_preset.empty()) kv.set("chain.schedule", schedule_preset);
  for (const auto& [k, v] : schedule_inline.values()) kv.set("chain.schedule." + k, v);
  return kv;
}

namespace {
bool flag(const KvFile& kv, const std::string& key) {
  auto v = kv.get_or(key, "false");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigInvalid("expected a boolean for " + key + ", got " + v);
}
}  // namespace

ChainManifest ChainManifest::from_kv(const KvFile& kv, const std::string& prefix) {
  ChainManifest m;
  m.options.variant = parse_chain_variant(kv.get_or(prefix + ".variant", "step-implicit"));
  m.options.binary = flag(kv, prefix + ".binary");
  m.options.rationalized = flag(kv, prefix + ".rationalized");
  m.options.bounded = flag(kv, prefix + ".bounded");
  m.schedule_preset = kv.get_or(prefix + ".schedule", "");
  for (const auto& [k, v] : kv.section(prefix + ".schedule")) m.schedule_inline.set(k, v);
  if (m.schedule_preset.empty() && m.schedule_inline.values().empty())
    throw ConfigInvalid("chain manifest needs " + prefix + ".schedule");
  return m;
}

ChainPtr ChainManifest::build() const {
  ScheduleRef s = schedule_preset.empty() ? Schedule::from_kv(schedule_inline) : Schedule::preset(schedule_preset);
  return build_chain(s, options);
}

}  // namespace cmdp
