#include <sstream>

#include "cmdp/schedule.hpp"

namespace cmdp {

namespace {

PowerSpec parse_power(const std::string& key, const std::string& text) {
  auto semi = text.find(';');
  if (semi == std::string::npos) throw ConfigInvalid(key + ": expected 'coef ; exponents'");
  PowerSpec p;
  try {
    p.coef = parse_rational(trim(text.substr(0, semi)));
    for (const auto& tok : split_ws(text.substr(semi + 1))) p.term.a.push_back(parse_rational(tok));
  } catch (const std::invalid_argument& e) {
    throw ConfigInvalid(key + ": " + e.what());
  }
  if (p.term.a.empty()) throw ConfigInvalid(key + ": missing exponent vector");
  return p;
}

std::string power_text(const PowerSpec& p) {
  std::string out = to_string(p.coef) + " ;";
  for (const auto& a : p.term.a) out += " " + to_string(a);
  return out;
}

AcceleratedSpec base_spec(std::string name, int k_max) {
  AcceleratedSpec s;
  s.name = std::move(name);
  s.k_max = k_max;
  return s;
}

PowerSpec power(Rational coef, std::vector<Rational> exps) { return PowerSpec{std::move(coef), LogPowerTerm(std::move(exps))}; }

}  // namespace

void validate_hypotheses(const Schedule& s) {
  if (s.family() != Family::Accelerated) return;
  const auto& spec = s.spec();
  auto live = [](const PowerSpec& p) { return p.coef != 0; };
  for (int i = 0; i < spec.k_max; ++i) {
    const auto& di = spec.delta[static_cast<std::size_t>(i)];
    const auto& ei = spec.epsilon[static_cast<std::size_t>(i)];
    if (live(di) && live(ei) && classify(di.term * ei.term) != Convergence::Convergent)
      throw HypothesisViolated("delta_" + std::to_string(i) + " * eps_" + std::to_string(i) + " must be convergent");
    if (live(di) && classify(di.term) != Convergence::Divergent)
      throw HypothesisViolated("sum of delta_" + std::to_string(i) + " must diverge");
    for (int j = i + 1; j < spec.k_max; ++j) {
      const auto& dj = spec.delta[static_cast<std::size_t>(j)];
      if (live(dj) && live(ei) && classify(dj.term * ei.term) != Convergence::Divergent)
        throw HypothesisViolated("delta_" + std::to_string(j) + " * eps_" + std::to_string(i) + " must be divergent");
    }
  }
  const std::int64_t end = std::max(s.n_star(), s.k_saturation()) + 256;
  for (std::int64_t n = s.n_star(); n <= end; ++n) {
    const auto& b = s.block(n);
    if (b.delta[static_cast<std::size_t>(b.k)] < 0)
      throw HypothesisViolated("sum of delta_i(" + std::to_string(n) + ") exceeds 1");
    for (const auto& e : b.epsilon)
      if (e > 1) throw HypothesisViolated("eps_i(" + std::to_string(n) + ") exceeds 1");
  }
}

std::shared_ptr<const Schedule> Schedule::from_kv(const KvFile& kv) {
  kv.check_known({"family", "name", "shift", "bits", "m", "k.block", "k.max", "k.table", "delta.*", "epsilon.*", "check"});
  const std::string family = kv.require("family");
  const std::string mrec = kv.get_or("m", family.ends_with("-b") ? "B" : "A");
  if (mrec != "A" && mrec != "B") throw ConfigInvalid("m must be A or B");
  const MRecurrence m = mrec == "A" ? MRecurrence::A : MRecurrence::B;
  if (family == "faithful-a" || family == "faithful-b") return faithful(m);
  if (family == "rationalized-a" || family == "rationalized-b") return rationalized(m);
  if (family != "accelerated") throw ConfigInvalid("unknown schedule family: " + family);
  AcceleratedSpec spec;
  spec.name = kv.get_or("name", "accelerated");
  spec.shift = kv.get_int("shift", 0);
  spec.bits = static_cast<int>(kv.get_int("bits", 40));
  spec.m = m;
  spec.k_max = static_cast<int>(kv.get_int("k.max", 1));
  spec.k_block = kv.get_int("k.block", 0);
  spec.check_hypotheses = kv.get_or("check", "true") != "false";
  if (auto table = kv.get("k.table")) {
    for (const auto& tok : split_ws(*table)) {
      auto colon = tok.find(':');
      if (colon == std::string::npos) throw ConfigInvalid("k.table entries look like n:k");
      try {
        spec.k_table.emplace_back(std::stoll(tok.substr(0, colon)), std::stoi(tok.substr(colon + 1)));
      } catch (const std::exception&) {
        throw ConfigInvalid("bad k.table entry: " + tok);
      }
    }
  }
  for (int i = 0; i < spec.k_max; ++i) {
    const std::string dk = "delta." + std::to_string(i), ek = "epsilon." + std::to_string(i);
    spec.delta.push_back(parse_power(dk, kv.require(dk)));
    spec.epsilon.push_back(parse_power(ek, kv.require(ek)));
  }
  return accelerated(std::move(spec));
}

std::shared_ptr<const Schedule> Schedule::load(const std::string& path) { return from_kv(KvFile::load(path)); }

KvFile Schedule::to_kv() const {
  KvFile kv;
  kv.set("family", to_string(family_));
  kv.set("m", recurrence_ == MRecurrence::A ? "A" : "B");
  if (family_ != Family::Accelerated) return kv;
  kv.set("name", spec_.name);
  kv.set("shift", std::to_string(spec_.shift));
  kv.set("bits", std::to_string(spec_.bits));
  kv.set("k.max", std::to_string(spec_.k_max));
  if (spec_.k_block > 0) kv.set("k.block", std::to_string(spec_.k_block));
  if (!spec_.k_table.empty()) {
    std::string t;
    for (const auto& [n, k] : spec_.k_table) t += (t.empty() ? "" : " ") + std::to_string(n) + ":" + std::to_string(k);
    kv.set("k.table", t);
  }
  if (!spec_.check_hypotheses) kv.set("check", "false");
  for (int i = 0; i < spec_.k_max; ++i) {
    kv.set("delta." + std::to_string(i), power_text(spec_.delta[static_cast<std::size_t>(i)]));
    kv.set("epsilon." + std::to_string(i), power_text(spec_.epsilon[static_cast<std::size_t>(i)]));
  }
  return kv;
}

std::vector<std::string> Schedule::preset_names() {
  return {"faithful-a",          "faithful-b",         "rationalized-a",    "rationalized-b",
          "accelerated-mimic",   "accelerated-restart", "accelerated-confusion", "accelerated-audit",
          "accelerated-square",  "accelerated-ri"};
}

std::shared_ptr<const Schedule> Schedule::preset(const std::string& name) {
  if (name == "faithful-a") return faithful(MRecurrence::A);
  if (name == "faithful-b") return faithful(MRecurrence::B);
  if (name == "rationalized-a") return rationalized(MRecurrence::A);
  if (name == "rationalized-b") return rationalized(MRecurrence::B);
  if (name == "accelerated-mimic") {
    // k(n) = 2 throughout; loss ~ 0.02 / n^2, so 200 blocks leave a tail near 1e-4.
    auto s = base_spec(name, 2);
    s.k_table = {{1, 2}};
    s.delta = {power(Rational(1, 5), {1}), power(Rational(1, 4), {0})};
    s.epsilon = {power(Rational(1, 10), {1}), power(Rational(1, 10), {3})};
    return accelerated(s);
  }
  if (name == "accelerated-restart") {
    auto s = base_spec(name, 2);
    s.k_table = {{1, 2}};
    s.delta = {power(Rational(1, 2), {1}), power(Rational(1, 4), {0})};
    s.epsilon = {power(Rational(1, 3), {1}), power(Rational(1, 4), {3})};
    return accelerated(s);
  }
  if (name == "accelerated-confusion") {
    // Nearly flat over the first hundred blocks (shift 10^4) but with the right asymptotics:
    // delta_i eps_i ~ n^-1.1 and delta_j eps_i ~ n^-(1.1 - (j-i)/5) for i < j.
    auto s = base_spec(name, 6);
    s.shift = 10000;
    s.k_block = 4;
    for (int i = 0; i < 6; ++i) {
      Rational p = i < 5 ? Rational(5 - i) / 5 : Rational(0);
      Rational q = i < 5 ? Rational(i, 5) + Rational(1, 10) : Rational(2);
      s.delta.push_back(power(Rational(7, 50), {p}));
      s.epsilon.push_back(power(Rational(1, 5), {q}));
    }
    return accelerated(s);
  }
  if (name == "accelerated-audit") {
    // Structural audits only: k(n) = n up to 7 so blocks stay small enough to enumerate.
    auto s = base_spec(name, 7);
    for (int i = 1; i <= 7; ++i) s.k_table.emplace_back(i, i);
    for (int i = 0; i < 7; ++i) {
      s.delta.push_back(power(Rational(1, 16), {1}));
      s.epsilon.push_back(power(Rational(1, 8), {1}));
    }
    s.check_hypotheses = false;
    return accelerated(s);
  }
  if (name == "accelerated-square") {
    auto s = base_spec(name, 1);
    s.delta = {power(Rational(1), {1})};
    s.epsilon = {power(Rational(1), {1})};
    return accelerated(s);
  }
  if (name == "accelerated-ri") {
    // Reward-implicit chain: recurrence B with k = 1 then 2, small enough to walk.
    auto s = base_spec(name, 2);
    s.m = MRecurrence::B;
    s.k_table = {{1, 1}, {6, 2}};
    s.delta = {power(Rational(1, 5), {1}), power(Rational(1, 4), {0})};
    s.epsilon = {power(Rational(1, 10), {1}), power(Rational(1, 10), {3})};
    return accelerated(s);
  }
  throw ConfigInvalid("unknown schedule preset: " + name);
}

}  // namespace cmdp
