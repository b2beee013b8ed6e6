#include "cmdp/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "cmdp/gadgets.hpp"
#include "cmdp/series.hpp"
#include "cmdp/sim.hpp"

namespace cmdp {

namespace {

using json = nlohmann::json;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

std::int64_t ceil_lg(std::int64_t x) {
  std::int64_t d = 0;
  while ((std::int64_t{1} << d) < x) ++d;
  return d;
}

class Ctx {
 public:
  Ctx(const KvFile& cfg, ExperimentResult& out) : cfg_(cfg), out_(out) {}

  std::string text(const std::string& key) const { return cfg_.require(key); }
  std::int64_t integer(const std::string& key) const {
    const std::string v = text(key);
    try {
      return std::stoll(v);
    } catch (const std::exception&) {
      throw ConfigInvalid(key + " must be an integer, got " + v);
    }
  }
  double real(const std::string& key) const {
    const std::string v = text(key);
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw ConfigInvalid(key + " must be a number, got " + v);
    }
  }
  Rational rational(const std::string& key) const { return parse_rational(text(key)); }
  std::vector<std::string> words(const std::string& key) const { return split_ws(text(key)); }
  std::vector<std::int64_t> integers(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& w : words(key)) out.push_back(std::stoll(w));
    return out;
  }
  std::vector<Rational> rationals(const std::string& key) const {
    std::vector<Rational> out;
    for (const auto& w : words(key)) out.push_back(parse_rational(w));
    return out;
  }
  ScheduleRef schedule(const std::string& key) const { return resolve_schedule(text(key)); }

  void row(std::string n, std::optional<double> alo, std::optional<double> ahi, std::optional<double> mlo,
           std::optional<double> mhi, std::string exact, bool pass) {
    out_.rows.push_back(CsvRow{out_.id, std::move(n), alo, ahi, mlo, mhi, std::move(exact), pass ? "pass" : "fail"});
  }
  void clause(std::string name, bool pass, std::string detail) {
    out_.clauses.push_back(Clause{std::move(name), pass, std::move(detail)});
  }
  void record(json j) {
    j["experiment"] = out_.id;
    out_.records.push_back(std::move(j));
  }

 private:
  const KvFile& cfg_;
  ExperimentResult& out_;
};

// ---- series-classification ----

void run_series(Ctx& c) {
  const int top = static_cast<int>(c.integer("max_index"));
  int wrong = 0, checked = 0;
  auto check = [&](const std::string& label, const LogPowerTerm& t, Convergence want) {
    const Convergence got = classify(t);
    ++checked;
    if (got != want) ++wrong;
    c.row(label, std::nullopt, std::nullopt, std::nullopt, std::nullopt, to_string(got), got == want);
  };
  for (int i = 0; i <= top; ++i) {
    const std::string si = std::to_string(i);
    check("delta" + si + "*eps" + si, faithful_delta_term(i) * faithful_epsilon_term(i), Convergence::Convergent);
    check("delta" + si, faithful_delta_term(i), Convergence::Divergent);
    for (int j = i + 1; j <= top; ++j)
      check("delta" + std::to_string(j) + "*eps" + si, faithful_delta_term(j) * faithful_epsilon_term(i),
            Convergence::Divergent);
  }
  c.clause("faithful products classified", wrong == 0,
           std::to_string(checked - wrong) + "/" + std::to_string(checked) + " terms as required");
}

// ---- well-definedness ----

void run_well_definedness(Ctx& c) {
  const int kmax = static_cast<int>(c.integer("k_max"));
  const std::int64_t squarings = c.integer("squarings");
  bool all = true;
  std::string detail;
  for (int k = 1; k <= kmax; ++k) {
    const auto t = BigExpr::tower(k + 1).numeric();
    if (!t) {
      all = false;
      detail += " Tower(" + std::to_string(k + 1) + ") not representable;";
      continue;
    }
    Interval n = ceil(*t);
    bool ok = true;
    Interval first(0L);
    std::int64_t probes = 0;
    for (std::int64_t step = 0; step < squarings && n.is_finite(); ++step, n = n * n) {
      Interval sum(0L);
      for (int i = 0; i < k; ++i) sum = sum + faithful_delta(i, n);
      if (step == 0) first = sum;
      ok = ok && sum.certainly_le(Interval(1L));
      ++probes;
    }
    all = all && ok;
    c.row("k=" + std::to_string(k) + " n>=Tower(" + std::to_string(k + 1) + ")", first.lo_d(), first.hi_d(),
          std::nullopt, std::nullopt, std::to_string(probes) + " probes", ok);
  }
  c.clause("sum of delta_i below 1 from Tower(k+1)", all, detail.empty() ? "every probe certified" : detail);

  const auto s = c.schedule("schedule");
  if (s->family() != Family::RationalizedA && s->family() != Family::RationalizedB)
    throw ConfigInvalid("well-definedness needs a rationalized schedule");
  const std::int64_t blocks = c.integer("blocks");
  std::int64_t bad = 0;
  Rational worst_sum = 0;
  for (std::int64_t n = s->n_star(); n < s->n_star() + blocks; ++n) {
    const auto& b = s->block(n);
    const Interval x{Rational(n)}, slack = exp2i(-n);
    Rational sum = 0;
    for (int i = 0; i < b.k; ++i) {
      sum += b.delta[static_cast<std::size_t>(i)];
      const Interval d = faithful_delta(i, x), e = faithful_epsilon(i, x);
      const Interval g(b.delta[static_cast<std::size_t>(i)]), th(b.epsilon[static_cast<std::size_t>(i)]);
      if (!(d.certainly_less(g) && g.certainly_less(d + slack) && e.certainly_less(th) && th.certainly_less(e + slack)))
        ++bad;
    }
    if (sum > 1) ++bad;
    if (sum > worst_sum) worst_sum = sum;
  }
  c.row("rationalized " + std::to_string(blocks) + " blocks", std::nullopt, to_double(worst_sum), std::nullopt, std::nullopt,
        "max sum " + fmt(to_double(worst_sum)), bad == 0);
  c.clause("rationalized values within 2^-n above and summing below 1", bad == 0,
           std::to_string(bad) + " violations over " + std::to_string(blocks) + " blocks");
}

// ---- transform-equivalence ----

void run_transforms(Ctx& c) {
  const auto rep = transform_equivalence(static_cast<std::uint64_t>(c.integer("seed")), static_cast<int>(c.integer("mdps")),
                                         static_cast<int>(c.integer("max_states")), c.integer("horizon"));
  const bool ok = rep.mismatches == 0;
  c.row(std::to_string(rep.mdps) + " mdps", std::nullopt, std::nullopt, std::nullopt, std::nullopt,
        std::to_string(rep.mismatches) + " mismatches / " + std::to_string(rep.entries), ok);
  c.record({{"mdps", rep.mdps}, {"runs", rep.runs}, {"entries", rep.entries}, {"mismatches", rep.mismatches},
            {"first_failures", rep.first_failures}});
  c.clause("payoff sequences identical", ok,
           std::to_string(rep.runs) + " run pairs, " + std::to_string(rep.entries) + " entries, " +
               std::to_string(rep.mismatches) + " mismatches");
}

// ---- mimic-attainment ----

void run_mimic(Ctx& c) {
  const auto s = c.schedule("schedule");
  const auto chain = build_chain(s);
  const std::int64_t blocks = c.integer("horizon_blocks"), first = chain->n_star(), last = first + blocks - 1;
  const Interval window = windowed_survival(*s, first, last);
  const SurvivalReport full = survival_product(*s, first, last);
  const double max_width = c.real("max_width");
  c.clause("enclosure width", window.width_d() <= max_width,
           "width " + fmt(window.width_d()) + " over " + std::to_string(blocks) + " blocks");

  TrialPlan plan = chain_plan(chain, mimic(chain), blocks, c.integer("trials"), static_cast<std::uint64_t>(c.integer("seed")));
  plan.confidence = c.real("confidence");
  plan.max_unknown = c.real("max_unknown");
  const EstimateReport rep = run_trials(plan);
  const double lose = 1 - window.mid_d();
  const bool inside = rep.lose.contains(lose);
  c.clause("certLose inside Wilson interval", inside,
           "certLose " + std::to_string(rep.cert_lose) + "/" + std::to_string(rep.trials) + ", interval [" + fmt(rep.lose.lo) +
               ", " + fmt(rep.lose.hi) + "], 1 - product " + fmt(lose));
  c.row(std::to_string(blocks), window.lo_d(), window.hi_d(), 1 - rep.lose.hi, 1 - rep.lose.lo, "", inside);
  c.row("infinite", full.product.lo_d(), full.product.hi_d(), std::nullopt, std::nullopt, "", true);
  json j = rep.to_json();
  j["window_product"] = {window.lo_d(), window.hi_d()};
  j["infinite_product"] = {full.product.lo_d(), full.product.hi_d()};
  c.record(std::move(j));
}

// ---- skip-index ----

void run_skip(Ctx& c) {
  const auto s = c.schedule("schedule");
  const auto chain = build_chain(s);
  const std::int64_t blocks = c.integer("horizon_blocks"), last = chain->n_star() + blocks - 1;
  const Interval tail = s->loss_tail(last);
  bool all = true;
  std::string detail;
  for (const Rational& eps : c.rationals("eps")) {
    const std::int64_t target = skip_target(*s, eps);
    BlockDpOptions o;
    o.blocks = blocks;
    const auto r = exact_block_dp<Interval>(*chain, *skip_then_mimic(chain, eps, true), o);
    // prod_{n > last} (1 - loss(n)) >= 1 - sum_{n > last} loss(n).
    const Interval win = r.alive.back() * (Interval(1L) - tail);
    const bool ok = win.lo_d() >= to_double(1 - eps) && Interval(1 - eps).certainly_le(win);
    all = all && ok;
    const SurvivalReport from = survival_product(*s, target, last);
    c.row("eps=" + to_string(eps) + " N=" + std::to_string(target), from.product.lo_d(), from.product.hi_d(), std::nullopt,
          std::nullopt, fmt(win.lo_d()), ok);
    detail += " eps " + to_string(eps) + ": N=" + std::to_string(target) + " win>=" + fmt(win.lo_d()) + ";";
    c.record({{"eps", to_string(eps)}, {"skip_index", target}, {"win_lower", win.lo_d()}, {"alive", r.alive.back().mid_d()},
              {"tail_loss", tail.hi_d()}});
  }
  c.clause("skip-then-mimic wins with probability at least 1 - eps", all, detail);
}

// ---- FR sweeps (fr-defeat and the restart variant) ----

struct SweepOptions {
  int max_modes = 1;
  std::int64_t blocks = 1;
  std::vector<std::int64_t> probes;
  Rational slack;
  bool restart_is_bad = false;
  std::optional<Rational> target;
  // Monte Carlo cross-check (trials = 0 skips it).
  std::int64_t mc_blocks = 0, trials = 0;
  std::uint64_t seed = 0;
  double confidence = 0.99;
};

void fr_sweep(Ctx& c, const ChainPtr& chain, const SweepOptions& so, const std::string& tag) {
  const Schedule& s = chain->schedule();
  const std::int64_t first = chain->n_star();
  for (auto N : so.probes)
    if (N < 1 || N > so.blocks) throw ConfigInvalid("probe outside the horizon: " + std::to_string(N));
  std::size_t machines = 0;
  for (int k = 1; k <= so.max_modes; ++k) machines += fr_family(k).size();
  // Family-wise confidence over all brackets of the sweep.
  const double per_bracket = 1 - (1 - so.confidence) / static_cast<double>(machines);

  bool bound_ok = true, target_ok = true, mc_ok = true;
  std::string worst;
  double worst_gap = -1;
  for (int k = 1; k <= so.max_modes; ++k) {
    std::vector<Rational> bound(static_cast<std::size_t>(so.blocks));
    Rational b = 1;
    for (std::int64_t j = 0; j < so.blocks; ++j) {
      if (s.k(first + j) > k) b *= 1 - confusion_min(s, first + j);
      bound[static_cast<std::size_t>(j)] = b;
    }
    for (const auto& spec : fr_family(k)) {
      const auto sigma = spec.build();
      BlockDpOptions o;
      o.blocks = so.blocks;
      o.restart_is_bad = so.restart_is_bad;
      const auto r = exact_block_dp<Interval>(*chain, *sigma, o);
      json rec{{"machine", spec.name}, {"modes", k}, {"variant", tag}};
      for (auto N : so.probes) {
        const auto j = static_cast<std::size_t>(N - 1);
        const Interval limit(bound[j] + so.slack);
        const bool ok = r.alive[j].certainly_le(limit);
        bound_ok = bound_ok && ok;
        const double gap = r.alive[j].hi_d() - to_double(bound[j]);
        if (gap > worst_gap) {
          worst_gap = gap;
          worst = spec.name + " at N=" + std::to_string(N);
        }
        c.row(tag + " " + spec.name + " N=" + std::to_string(N), std::nullopt, to_double(bound[j]), std::nullopt, std::nullopt,
              fmt(r.alive[j].mid_d()), ok);
        rec["probes"].push_back({{"N", N}, {"win", r.alive[j].mid_d()}, {"bound", to_double(bound[j])}});
      }
      if (so.target) {
        const bool ok = r.alive.back().certainly_le(Interval(*so.target));
        target_ok = target_ok && ok;
        if (!ok) worst += " (" + spec.name + " above target)";
      }
      if (so.trials > 0) {
        TrialPlan plan = chain_plan(chain, sigma, so.mc_blocks, so.trials, so.seed);
        plan.restart_is_bad = so.restart_is_bad;
        plan.confidence = per_bracket;
        const EstimateReport rep = run_trials(plan);
        const double exact_bad = 1 - r.alive[static_cast<std::size_t>(so.mc_blocks - 1)].mid_d();
        const bool ok = rep.bad_ci.contains(exact_bad);
        mc_ok = mc_ok && ok;
        c.row(tag + " " + spec.name + " mc N=" + std::to_string(so.mc_blocks), std::nullopt, std::nullopt, 1 - rep.bad_ci.hi,
              1 - rep.bad_ci.lo, fmt(1 - exact_bad), ok);
        json mc = rep.to_json();
        mc["exact_win"] = 1 - exact_bad;
        rec["monte_carlo"] = mc;
      }
      c.record(std::move(rec));
    }
  }
  c.clause(tag + ": exact win probability below the confusion product", bound_ok,
           "largest win - bound " + fmt(worst_gap) + " (" + worst + ")");
  if (so.target)
    c.clause(tag + ": win probability below " + to_string(*so.target) + " after " + std::to_string(so.blocks) + " blocks",
             target_ok, target_ok ? "every machine" : worst);
  if (so.trials > 0)
    c.clause(tag + ": Monte Carlo brackets contain the exact values", mc_ok,
             std::to_string(machines) + " machines at per-bracket confidence " + fmt(per_bracket));
}

void run_fr_defeat(Ctx& c) {
  const auto s = c.schedule("schedule");
  const ChainVariant v = parse_chain_variant(c.text("variant"));
  const auto chain = build_chain(s, ChainOptions{v, false, false, false});
  SweepOptions so;
  so.max_modes = static_cast<int>(c.integer("max_modes"));
  so.blocks = c.integer("horizon_blocks");
  so.probes = c.integers("probes");
  so.slack = c.rational("slack");
  so.restart_is_bad = chain->restarts();
  so.target = c.rational("target");
  so.mc_blocks = c.integer("mc_blocks");
  so.trials = c.integer("trials");
  so.seed = static_cast<std::uint64_t>(c.integer("seed"));
  so.confidence = c.real("confidence");
  fr_sweep(c, chain, so, to_string(v));
}

// ---- restart-almost-sure ----

void run_restart(Ctx& c) {
  const auto s = c.schedule("schedule");
  const auto chain = build_restart(s);
  const std::int64_t blocks = c.integer("horizon_blocks"), last = chain->n_star() + blocks - 1;
  BlockDpOptions o;
  o.blocks = blocks;
  o.choice_bad = ChoiceBad::None;
  o.prune = c.real("prune");
  const auto r = exact_block_dp<Interval>(*chain, *concat_half(chain, true), o);
  // Block indices only grow along a run, so restarts after the horizon need an escape in some
  // block n > last, and each such block is played at most once.
  const Interval late = s->loss_tail(last) + r.pruned;
  bool all = true;
  json rec{{"horizon_blocks", blocks}, {"late_bound", late.hi_d()}, {"pruned", r.pruned.hi_d()}};
  for (std::int64_t i = 1; i <= c.integer("max_restarts"); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const Interval within = idx < r.at_least_restarts.size() ? r.at_least_restarts[idx] : Interval(0L);
    const Interval upper = within + late;
    const bool ok = upper.certainly_le(Interval(pow2(-i)));
    all = all && ok;
    c.row("restarts>=" + std::to_string(i), std::nullopt, to_double(pow2(-i)), std::nullopt, std::nullopt, fmt(upper.hi_d()), ok);
    rec["at_least"].push_back({{"i", i}, {"within_horizon", within.hi_d()}, {"upper", upper.hi_d()}});
  }
  c.record(std::move(rec));
  c.clause("P(at least i restarts) <= 2^-i", all,
           "horizon " + std::to_string(blocks) + " blocks, late-restart allowance " + fmt(late.hi_d()));

  SweepOptions so;
  so.max_modes = static_cast<int>(c.integer("max_modes"));
  so.blocks = c.integer("fr_blocks");
  so.probes = c.integers("probes");
  so.slack = c.rational("slack");
  so.restart_is_bad = true;
  fr_sweep(c, build_restart(c.schedule("fr_schedule")), so, "restart");
}

// ---- reward-implicit ----

void run_reward_implicit(Ctx& c) {
  const auto s = c.schedule("schedule");
  const std::int64_t last = c.integer("last_block");
  bool mimic_ok = true;
  std::string mimic_detail;
  for (const auto& v : c.words("variants")) {
    const bool binary = v.find("binary") != std::string::npos, bounded = v.find("bounded") != std::string::npos;
    if (!binary && !bounded && v != "plain") throw ConfigInvalid("unknown variant " + v);
    const auto chain = build_reward_implicit(s, binary, bounded);
    for (std::int64_t n = chain->n_star(); n <= last; ++n) {
      const BlockAudit a = audit_block(*chain, n);
      std::optional<Rational> dip;
      for (const auto& p : a.paths)
        if (p.x == p.i && (!dip || p.min_mean < *dip)) dip = p.min_mean;
      const Rational floor(-1, n);
      const bool ok = dip && *dip >= floor;
      mimic_ok = mimic_ok && ok;
      c.row(v + " mimic dip n=" + std::to_string(n), to_double(floor), std::nullopt, std::nullopt, std::nullopt,
            dip ? fmt(to_double(*dip)) : "none", ok);
    }
  }
  mimic_ok = mimic_ok && last >= s->n_star();
  c.clause("mimic dip at least -1/n", mimic_ok, "blocks " + std::to_string(s->n_star()) + ".." + std::to_string(last));

  // Padded step count up to the dip after choosing j = i + 1, against 2 m_n^{i+1}.
  const auto p = c.schedule("padded_schedule");
  const std::int64_t count = c.integer("padded_blocks"), first = p->n_star();
  Integer prefix = 0;
  bool all = true;
  Rational worst_dip = -1, last_dip = -1;
  std::string failing;
  for (std::int64_t n = first; n < first + count; ++n) {
    const Integer m = p->m(n);
    const int k = p->k(n);
    for (int i = 0; i < k; ++i) {
      const Integer mi = ipow(m, static_cast<unsigned long>(i)), mi1 = mi * m;
      const Integer beta = prefix + 2 * ceil_lg(k + 1) + mi + mi1;
      const bool ok = beta <= 2 * mi1;
      const Rational dip = Rational(-mi1) / Rational(beta);
      if (dip > worst_dip) worst_dip = dip;
      if (n == first + count - 1 && (i == 0 || dip > last_dip)) last_dip = dip;
      all = all && ok;
      if (!ok && failing.size() < 200)
        failing += " n=" + std::to_string(n) + ",i=" + std::to_string(i) + ": beta " + to_string(beta) + " > " + to_string(Integer(2 * mi1)) + ";";
      c.row("padded n=" + std::to_string(n) + " i=" + std::to_string(i), std::nullopt, -0.5, std::nullopt, std::nullopt,
            fmt(to_double(dip)), ok);
    }
    prefix += 2 * ceil_lg(k + 1) + 2 * ipow(m, static_cast<unsigned long>(k));
  }
  c.record({{"padded_schedule", p->name()}, {"blocks", count}, {"guaranteed_dip", to_double(worst_dip)},
            {"last_block_dip", to_double(last_dip)}});
  c.clause("erroneous choice dips to -1/2 under padding", all,
           "guaranteed dip " + fmt(to_double(worst_dip)) + " overall, " + fmt(to_double(last_dip)) + " at block " +
               std::to_string(first + count - 1) + (failing.empty() ? "" : ";" + failing));
}

// ---- infinite-branching ----

/// Plays sigma on the gadget until `cycles` random r-states have been left; true iff t was hit.
bool hits_within(const Mdp& g, const Strategy& sigma, SeedStream& rng, std::int64_t cycles) {
  Memory mem = sigma.initial_memory();
  StateId s = g.initial();
  std::int64_t left = 0;
  while (left < cycles) {
    const bool random = g.kind(s) == StateKind::Random;
    const std::size_t idx = random ? sample_edge(g, s, rng) : sigma.sample_choice(mem, s, g.degree(s), rng);
    const OutEdge e = g.successors(s, idx + 1).at(idx);
    if (random) {
      ++left;
      if (e.target.role == "t") return true;
    }
    sigma.advance(mem, s, idx, e, rng);
    s = e.target;
  }
  return false;
}

void run_infinite_branching(Ctx& c) {
  const Interval p = never_hit_product(static_cast<int>(c.integer("terms")));
  const double floor = c.real("floor");
  c.clause("never-hit product enclosure above floor", p.lo_d() >= floor, "product in " + p.str(15));
  c.row("never-hit product", p.lo_d(), p.hi_d(), std::nullopt, std::nullopt, p.str(12), p.lo_d() >= floor);

  const auto g = build_infinite_branching();
  const Rational target = c.rational("target");
  const std::int64_t trials = c.integer("trials");
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  const auto branches = c.integers("branches");
  const double per_bracket = 1 - (1 - c.real("confidence")) / static_cast<double>(branches.size() + 1);
  auto estimate = [&](const Strategy& sigma, std::int64_t cycles, std::uint64_t stream_base) {
    std::int64_t hits = 0;
    for (std::int64_t t = 0; t < trials; ++t) {
      SeedStream rng(seed, stream_base + static_cast<std::uint64_t>(t));
      if (hits_within(*g, sigma, rng, cycles)) ++hits;
    }
    return hits;
  };

  bool horizon_ok = true, mc_ok = true;
  std::string detail;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const std::int64_t i = branches[b];
    const std::int64_t H = hit_horizon(i, target);
    const Rational miss = 1 - pow2(-i);
    Rational stay = 1;
    for (std::int64_t h = 0; h < H - 1; ++h) stay *= miss;
    const Rational before = 1 - stay, at = 1 - stay * miss;
    const bool ok = at > target && before <= target;
    horizon_ok = horizon_ok && ok;
    const std::int64_t hits = estimate(*fixed_branch_strategy(i), H, (b + 1) << 32);
    const WilsonInterval w = wilson(hits, trials, per_bracket);
    const bool inside = w.contains(to_double(at));
    mc_ok = mc_ok && inside;
    c.row("branch " + std::to_string(i) + " H=" + std::to_string(H), to_double(at), to_double(at), w.lo, w.hi, to_string(at),
          ok && inside);
    c.record({{"branch", i}, {"H", H}, {"hit_probability", to_double(at)}, {"hits", hits}, {"trials", trials},
              {"wilson", {w.lo, w.hi}}});
    detail += " i=" + std::to_string(i) + ":H=" + std::to_string(H) + ";";
  }
  c.clause("fixed branch hits t within the computed horizon", horizon_ok, detail);

  // Proxy for "t finitely often": no visit during the first T cycles, paired with the product.
  const std::int64_t T = c.integer("hd_cycles");
  Rational never = 1;
  for (std::int64_t k = 1; k <= T; ++k) never *= 1 - pow2(-k);
  const std::int64_t hits = estimate(*increasing_branch_strategy(), T, 0);
  const WilsonInterval w = wilson(trials - hits, trials, per_bracket);
  const bool inside = w.contains(to_double(never));
  mc_ok = mc_ok && inside;
  c.row("increasing branches T=" + std::to_string(T), to_double(never), to_double(never), w.lo, w.hi, fmt(to_double(never)), inside);
  c.record({{"strategy", "increasing-branch"}, {"cycles", T}, {"no_hit_probability", to_double(never)}, {"no_hit", trials - hits},
            {"trials", trials}, {"wilson", {w.lo, w.hi}}});
  c.clause("Monte Carlo agrees", mc_ok, "per-bracket confidence " + fmt(per_bracket));
}

// ---- strengthening-preservation ----

using PathKey = std::tuple<std::int64_t, std::int64_t, int>;

std::map<PathKey, std::pair<Rational, Rational>> path_summary(const BlockAudit& a) {
  std::map<PathKey, std::pair<Rational, Rational>> out;  // (prob, total) of block-crossing paths
  for (const auto& p : a.paths) {
    auto& slot = out[PathKey{p.i, p.x, static_cast<int>(p.end)}];
    slot.first += p.prob;
    if (p.end == BlockPath::Next) slot.second = p.total;
  }
  return out;
}

void run_strengthening(Ctx& c) {
  const auto s = c.schedule("audit_schedule");
  const std::int64_t last = c.integer("audit_last");
  bool audit_ok = true;
  std::string detail;
  std::int64_t audited = 0;
  const auto base = build_chain(s);
  for (std::int64_t n = base->n_star(); n <= last; ++n) {
    if (base->k(n) + 1 > 8) continue;
    const BlockAudit ref = audit_block(*base, n);
    const auto ref_paths = path_summary(ref);
    for (const auto& v : c.words("variants")) {
      const bool binary = v.find("binary") != std::string::npos, bounded = v.find("bounded") != std::string::npos;
      if (!binary && !bounded && v != "plain") throw ConfigInvalid("unknown variant " + v);
      const auto chain = build_chain(s, ChainOptions{ChainVariant::StepImplicit, binary, false, bounded});
      const BlockAudit a = audit_block(*chain, n);
      bool lengths = true;
      for (const auto& p : a.paths)
        if (p.end == BlockPath::Next && p.length != chain->block_length(n)) lengths = false;
      const bool probs = a.branch_prob == ref.branch_prob;
      const bool totals = path_summary(a) == ref_paths;
      const bool ok = probs && totals && a.depth_consistent && lengths;
      audit_ok = audit_ok && ok;
      ++audited;
      if (!ok)
        detail += " " + v + " n=" + std::to_string(n) + (probs ? "" : " probabilities") + (totals ? "" : " totals") +
                  (a.depth_consistent ? "" : " depth") + (lengths ? "" : " lengths") + ";";
      c.row(v + " audit n=" + std::to_string(n), std::nullopt, std::nullopt, std::nullopt, std::nullopt,
            std::to_string(a.paths.size()) + " paths, " + std::to_string(a.edges) + " edges", ok);
    }
  }
  c.clause("strengthenings keep branch probabilities, block totals and depths", audit_ok && audited > 0,
           std::to_string(audited) + " block audits" + detail);

  const auto faithful = build_chain(c.schedule("dp_schedule"));
  const auto rational = rationalize(*faithful);
  BlockDpOptions o;
  o.blocks = c.integer("dp_blocks");
  const auto a = exact_block_dp<Interval>(*faithful, *mimic_fr(faithful), o);
  const auto b = exact_block_dp<Rational>(*rational, *mimic_fr(rational), o);
  bool dp_ok = true;
  Rational budget = 0;
  double worst = 0;
  for (std::int64_t j = 0; j < o.blocks; ++j) {
    const std::int64_t n = faithful->n_star() + j;
    // Each block perturbs at most k(n) + 1 random edge probabilities by 2^-n each in total variation.
    budget += Rational(faithful->k(n) + 1) * pow2(-n);
    const auto idx = static_cast<std::size_t>(j);
    const Interval diff = a.alive[idx] - Interval(b.alive[idx]);
    const bool ok = diff.certainly_le(Interval(budget)) && (-diff).certainly_le(Interval(budget));
    dp_ok = dp_ok && ok;
    worst = std::max({worst, diff.hi_d(), -diff.lo_d()});
    if (j % 10 == 9 || j + 1 == o.blocks)
      c.row("rationalized dp N=" + std::to_string(j + 1), a.alive[idx].lo_d(), a.alive[idx].hi_d(), std::nullopt, std::nullopt,
            fmt(to_double(b.alive[idx])), ok);
  }
  c.clause("rationalized DP within the accumulated 2^-n perturbation", dp_ok,
           "largest difference " + fmt(worst) + ", final budget " + fmt(to_double(budget)));
}

// ---- puterman-trajectory ----

void run_puterman(Ctx& c) {
  const std::int64_t kx = c.integer("exact_k"), kf = c.integer("floor_k");
  const auto m = build_puterman();
  const auto sigma = puterman_strategy();
  std::vector<std::optional<Rational>> closed;
  std::int64_t steps = 0;
  for (std::int64_t k = 1; k <= kx; ++k) {
    closed.push_back(puterman_exit_mean_exact(k));
    if (!closed.back()) throw ConfigInvalid("exit mean for k=" + std::to_string(k) + " is not exactly representable");
    steps += static_cast<std::int64_t>(puterman_loops(k).lo_d()) + 1;
  }
  SeedStream rng(0, 0);
  Memory mem = sigma->initial_memory();
  MonitorState mon;
  StateId s = m->initial();
  std::vector<Rational> exits;
  for (std::int64_t t = 0; t < steps; ++t) {
    const std::size_t idx = sigma->sample_choice(mem, s, m->degree(s), rng);
    const OutEdge e = m->successors(s, 2).at(idx);
    mon = observe(mon, e.reward);
    if (e.target != s) exits.push_back(*mon.value(PayoffKind::Mean));
    sigma->advance(mem, s, idx, e, rng);
    s = e.target;
  }
  bool exact_ok = exits.size() == static_cast<std::size_t>(kx);
  for (std::int64_t k = 1; k <= kx && exact_ok; ++k) {
    const Rational& sim = exits[static_cast<std::size_t>(k - 1)];
    const bool ok = sim == *closed[static_cast<std::size_t>(k - 1)] && puterman_exit_mean(k).contains(sim);
    exact_ok = exact_ok && ok;
    c.row("exit k=" + std::to_string(k), to_double(sim), to_double(sim), std::nullopt, std::nullopt, to_string(sim), ok);
  }
  c.clause("closed-form exit means equal the simulated ones", exact_ok, std::to_string(exits.size()) + " exits simulated");

  bool mono = true;
  Interval prev = puterman_phase_floor(1);
  c.row("floor k=1", prev.lo_d(), prev.hi_d(), std::nullopt, std::nullopt, prev.str(10), prev.hi_d() < 0);
  for (std::int64_t k = 2; k <= kf; ++k) {
    const Interval f = puterman_phase_floor(k);
    const bool ok = prev.certainly_less(f) && f.certainly_less(Interval(0L));
    mono = mono && ok;
    c.row("floor k=" + std::to_string(k), f.lo_d(), f.hi_d(), std::nullopt, std::nullopt, f.str(10), ok);
    prev = f;
  }
  c.clause("liminf floors rise strictly toward 0", mono, "floor at k=" + std::to_string(kf) + " is " + prev.str(10));
}

struct Kind {
  std::string name;
  std::vector<std::string> keys;
  std::function<void(Ctx&)> run;
};

const std::vector<Kind>& kinds() {
  static const std::vector<Kind> all{
      {"series-classification", {"max_index"}, run_series},
      {"well-definedness", {"k_max", "squarings", "schedule", "blocks"}, run_well_definedness},
      {"transform-equivalence", {"seed", "mdps", "max_states", "horizon"}, run_transforms},
      {"mimic-attainment",
       {"schedule", "horizon_blocks", "trials", "seed", "confidence", "max_width", "max_unknown"},
       run_mimic},
      {"skip-index", {"schedule", "eps", "horizon_blocks"}, run_skip},
      {"fr-defeat",
       {"schedule", "variant", "max_modes", "horizon_blocks", "probes", "slack", "target", "mc_blocks", "trials", "seed",
        "confidence"},
       run_fr_defeat},
      {"restart-almost-sure",
       {"schedule", "horizon_blocks", "max_restarts", "prune", "fr_schedule", "fr_blocks", "max_modes", "probes", "slack"},
       run_restart},
      {"reward-implicit", {"schedule", "last_block", "variants", "padded_schedule", "padded_blocks"}, run_reward_implicit},
      {"infinite-branching",
       {"terms", "floor", "target", "branches", "trials", "seed", "confidence", "hd_cycles"},
       run_infinite_branching},
      {"strengthening-preservation",
       {"audit_schedule", "audit_last", "variants", "dp_schedule", "dp_blocks"},
       run_strengthening},
      {"puterman-trajectory", {"exact_k", "floor_k"}, run_puterman},
  };
  return all;
}

const Kind& find_kind(const std::string& name) {
  for (const auto& k : kinds())
    if (k.name == name) return k;
  throw ConfigInvalid("unknown experiment kind: " + name);
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << content;
    if (!f.flush()) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string csv_header() { return "experiment,n_or_N,analytic_lo,analytic_hi,mc_lo,mc_hi,exact,verdict"; }

std::string to_csv(const CsvRow& r) {
  auto num = [](const std::optional<double>& x) { return x ? fmt(*x) : std::string(); };
  return csv_cell(r.experiment) + "," + csv_cell(r.n_or_N) + "," + num(r.analytic_lo) + "," + num(r.analytic_hi) + "," +
         num(r.mc_lo) + "," + num(r.mc_hi) + "," + csv_cell(r.exact) + "," + r.verdict;
}

bool ExperimentResult::passed() const {
  return !clauses.empty() && std::all_of(clauses.begin(), clauses.end(), [](const Clause& c) { return c.pass; });
}

std::vector<std::string> experiment_kinds() {
  std::vector<std::string> out;
  for (const auto& k : kinds()) out.push_back(k.name);
  return out;
}

std::vector<std::string> experiment_keys(const std::string& kind) { return find_kind(kind).keys; }

std::vector<std::string> apply_overrides(KvFile& config, const Overrides& o) {
  const auto keys = experiment_keys(config.require("experiment"));
  const std::set<std::string> known(keys.begin(), keys.end());
  std::vector<std::string> ignored;
  auto put = [&](const char* key, const char* flag, const std::optional<std::string>& v) {
    if (!v) return;
    if (known.count(key)) config.set(key, *v);
    else ignored.push_back(flag);
  };
  auto str = [](const auto& x) -> std::optional<std::string> {
    if (!x) return std::nullopt;
    if constexpr (std::is_same_v<std::decay_t<decltype(*x)>, std::string>) return *x;
    else if constexpr (std::is_same_v<std::decay_t<decltype(*x)>, double>) return fmt(*x);
    else return std::to_string(*x);
  };
  put("seed", "--seed", str(o.seed));
  put("trials", "--trials", str(o.trials));
  put("horizon_blocks", "--horizon-blocks", str(o.horizon_blocks));
  put("schedule", "--schedule", str(o.schedule));
  put("confidence", "--confidence", str(o.confidence));
  return ignored;
}

ScheduleRef resolve_schedule(const std::string& name_or_path) {
  const auto names = Schedule::preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return Schedule::preset(name_or_path);
  if (!std::filesystem::exists(name_or_path)) throw ConfigInvalid("no schedule preset or file named " + name_or_path);
  return Schedule::load(name_or_path);
}

void validate_config(const KvFile& config) {
  const Kind& kind = find_kind(config.require("experiment"));
  std::set<std::string> allowed(kind.keys.begin(), kind.keys.end());
  allowed.insert("experiment");
  allowed.insert("id");
  config.check_known(allowed);
  for (const auto& key : kind.keys) config.require(key);
  // Schedules declared structural-only (check = false) opted out of the series hypotheses at construction.
  for (const auto& key : kind.keys) {
    if (key.find("schedule") == std::string::npos) continue;
    const auto s = resolve_schedule(config.require(key));
    if (s->family() != Family::Accelerated || s->spec().check_hypotheses) validate_hypotheses(*s);
  }
}

ExperimentResult run_experiment(const KvFile& config) {
  validate_config(config);
  ExperimentResult out;
  out.kind = config.require("experiment");
  out.id = config.get_or("id", out.kind);
  out.config = config;
  const auto t0 = std::chrono::steady_clock::now();
  Ctx ctx(config, out);
  find_kind(out.kind).run(ctx);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void write_artifacts(const ExperimentResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  std::string csv = csv_header() + "\n";
  for (const auto& row : r.rows) csv += to_csv(row) + "\n";
  write_atomic(base / (r.id + ".csv"), csv);
  std::string jsonl;
  for (const auto& rec : r.records) jsonl += rec.dump() + "\n";
  // Timing stays out of the artifacts so that reruns reproduce them byte for byte.
  json summary{{"experiment", r.id}, {"kind", r.kind}, {"passed", r.passed()}};
  for (const auto& c : r.clauses) summary["clauses"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  jsonl += summary.dump() + "\n";
  write_atomic(base / (r.id + ".jsonl"), jsonl);
  write_atomic(base / (r.id + ".kv"), r.config.str());
}

}  // namespace cmdp
