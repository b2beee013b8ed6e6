#include <algorithm>

#include "cmdp/gadgets.hpp"

namespace cmdp {

namespace {

bool fan_node(const StateId& s) { return s.role == "c" || s.role == "cs"; }

/// Branch remembered by the reward counter at c_n: total / m_n, floored and clamped.
std::int64_t branch_from_total(const GadgetChain& c, const StateId& s, const Rational& total) {
  if (total <= 0) return 0;
  const Integer q = Integer(total.get_num() / total.get_den()) / c.m(s.gadget);
  return q.fits_slong_p() ? std::min<std::int64_t>(q.get_si(), c.k(s.gadget)) : c.k(s.gadget);
}

/// Decisions outside the controlled fan for skipping strategies; nullopt defers to mimic.
std::optional<std::size_t> skip_choice(const GadgetChain& c, std::int64_t target, const StateId& s, Degree d) {
  if (!d || *d != 2) return std::nullopt;
  if (s.role == "start") return target > c.n_star() ? 1 : 0;
  if (s.role == "w") return s.gadget + 1 >= target ? 0 : 1;
  if (s.role == "b") return s.gadget + 2 >= target ? 0 : 1;
  return std::nullopt;
}

StrategyPtr build_fr(ChainPtr chain, std::optional<std::int64_t> target, std::string name) {
  const std::int64_t K = chain->max_branches();
  auto choose = [chain, target](std::int64_t mode, const StateId& s, Degree d) -> Dist<std::size_t> {
    if (target)
      if (auto i = skip_choice(*chain, *target, s, d)) return dirac(*i);
    if (fan_node(s)) return dirac(chain->route(s, mode));
    return dirac<std::size_t>(0);
  };
  auto update = [K](std::int64_t mode, const StateId&, std::size_t, const OutEdge& e) -> Dist<std::int64_t> {
    if (e.target.role == "up" && e.target.offset == 0) return dirac(std::min(e.target.branch, K - 1));
    return dirac(mode);
  };
  return make_fr(std::move(name), K, 0, choose, update);
}

StrategyPtr build_rc(ChainPtr chain, std::optional<std::int64_t> target, std::string name) {
  return make_reward_counter(std::move(name), [chain, target](const StateId& s, const Rational& total) -> Dist<std::size_t> {
    if (target) {
      const Degree d = s.role == "start" || s.role == "w" || s.role == "b" ? chain->degree(s) : Degree(1);
      if (auto i = skip_choice(*chain, *target, s, d)) return dirac(*i);
    }
    if (fan_node(s)) return dirac(chain->route(s, branch_from_total(*chain, s, total)));
    return dirac<std::size_t>(0);
  });
}

}  // namespace

StrategyPtr mimic(ChainPtr chain) {
  if (chain->reward_implicit()) return build_fr(chain, std::nullopt, "mimic");
  return build_rc(chain, std::nullopt, "mimic");
}

StrategyPtr mimic_fr(ChainPtr chain) { return build_fr(chain, std::nullopt, "mimic-fr"); }

std::int64_t skip_target(const Schedule& s, const Rational& eps) { return skip_index(s, eps).n; }

StrategyPtr skip_then_mimic(ChainPtr chain, const Rational& eps, bool fr) {
  const std::int64_t target = skip_target(chain->schedule(), eps);
  const std::string name = "skip-then-mimic(" + to_string(eps) + ")";
  if (fr || chain->reward_implicit()) return build_fr(chain, target, name);
  return build_rc(chain, target, name);
}

StrategyPtr concat_half(ChainPtr chain, bool fr) {
  if (!chain->restarts()) throw VariantMismatch("concat_half needs a restart variant");
  return skip_then_mimic(chain, Rational(1, 2), fr);
}

std::vector<FrSpec> fr_family(int k) {
  if (k < 1) throw std::invalid_argument("fr_family needs k >= 1");
  const std::string head = "modes " + std::to_string(k) + "\ninitial 0\n";
  const std::vector<std::pair<std::string, std::string>> bodies{
      {"pigeon-clamp", "update * up * -> clamp-branch\nchoose * c -> mode\n"},
      {"pigeon-mod", "update * up * -> branch-mod\nchoose * c -> mode\n"},
      {"coin-update", "update * up * -> clamp-branch:1/2 0:1/2\nchoose * c -> mode\n"},
      {"coin-choice", "update * up * -> clamp-branch\nchoose * c -> mode:1/2 top:1/2\n"},
      {"always-zero", "choose * c -> 0\n"},
  };
  std::vector<FrSpec> out;
  for (const auto& [name, body] : bodies) out.push_back(FrSpec::parse("name " + name + "-" + std::to_string(k) + "\n" + head + body));
  return out;
}

}  // namespace cmdp
