#include "cmdp/strategy.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

namespace cmdp {

std::string to_string(StrategyTag t) {
  switch (t) {
    case StrategyTag::MD: return "MD";
    case StrategyTag::FR: return "FR";
    case StrategyTag::Markov: return "Markov";
    case StrategyTag::RC: return "RC";
    case StrategyTag::SCRC: return "SC+RC";
    case StrategyTag::KBitMarkov: return "kBitMarkov";
    case StrategyTag::HD: return "HD";
  }
  return "?";
}

std::string StrategyClass::str() const {
  if (tag == StrategyTag::FR) return "FR(" + std::to_string(modes) + ")";
  if (tag == StrategyTag::KBitMarkov) {
    int bits = 0;
    while ((std::int64_t{1} << bits) < modes) ++bits;
    return "kBitMarkov(" + std::to_string(bits) + ")";
  }
  return to_string(tag);
}

Strategy::Strategy(StrategyClass cls, std::string name, std::int64_t initial_mode, ChoiceRule choose, UpdateRule update)
    : cls_(cls), name_(std::move(name)), initial_mode_(initial_mode), choose_(std::move(choose)), update_(std::move(update)) {}

Dist<std::size_t> Strategy::choose(const Memory& m, const StateId& s, Degree d) const {
  auto out = choose_(m, s, d);
  for (auto& [i, p] : out)
    if (d && i >= *d) throw BadChoice("strategy " + name_ + " picked edge " + std::to_string(i) + " at " + s.str());
  return out;
}

Dist<std::int64_t> Strategy::update(const Memory& m, const StateId& from, std::size_t index, const OutEdge& e) const {
  if (!update_) return dirac(m.mode);
  return update_(m, from, index, e);
}

namespace {

template <class T>
T sample(const Dist<T>& d, SeedStream& rng) {
  if (d.size() == 1) return d.front().first;
  std::vector<Rational> probs;
  probs.reserve(d.size());
  for (const auto& [v, p] : d) probs.push_back(p);
  return d[sample_index(probs, rng)].first;
}

}  // namespace

std::size_t Strategy::sample_choice(const Memory& m, const StateId& s, Degree d, SeedStream& rng) const {
  return sample(choose(m, s, d), rng);
}

void Strategy::advance(Memory& m, const StateId& from, std::size_t index, const OutEdge& e, SeedStream& rng) const {
  if (update_) m.mode = sample(update_(m, from, index, e), rng);
  ++m.steps;
  m.total += e.reward;
}

std::size_t clamp_index(std::size_t i, Degree d) {
  if (!d || *d == 0) return i;
  return std::min(i, *d - 1);
}

StrategyPtr make_md(std::string name, std::function<std::size_t(const StateId&)> rule) {
  return std::make_shared<Strategy>(StrategyClass{StrategyTag::MD, 1}, std::move(name), 0,
                                    [rule = std::move(rule)](const Memory&, const StateId& s, Degree) { return dirac(rule(s)); });
}

StrategyPtr make_markov(std::string name, std::function<Dist<std::size_t>(const StateId&, std::int64_t)> rule) {
  return std::make_shared<Strategy>(StrategyClass{StrategyTag::Markov, 1}, std::move(name), 0,
                                    [rule = std::move(rule)](const Memory& m, const StateId& s, Degree) { return rule(s, m.steps); });
}

StrategyPtr make_reward_counter(std::string name, std::function<Dist<std::size_t>(const StateId&, const Rational&)> rule) {
  return std::make_shared<Strategy>(StrategyClass{StrategyTag::RC, 1}, std::move(name), 0,
                                    [rule = std::move(rule)](const Memory& m, const StateId& s, Degree) { return rule(s, m.total); });
}

StrategyPtr make_sc_rc(std::string name, std::function<Dist<std::size_t>(const StateId&, std::int64_t, const Rational&)> rule) {
  return std::make_shared<Strategy>(
      StrategyClass{StrategyTag::SCRC, 1}, std::move(name), 0,
      [rule = std::move(rule)](const Memory& m, const StateId& s, Degree) { return rule(s, m.steps, m.total); });
}

StrategyPtr make_fr(std::string name, std::int64_t k, std::int64_t initial,
                    std::function<Dist<std::size_t>(std::int64_t, const StateId&, Degree)> choose,
                    std::function<Dist<std::int64_t>(std::int64_t, const StateId&, std::size_t, const OutEdge&)> update) {
  if (k < 1 || initial < 0 || initial >= k) throw std::invalid_argument("make_fr: bad mode count or initial mode");
  ChoiceRule c = [choose = std::move(choose)](const Memory& m, const StateId& s, Degree d) { return choose(m.mode, s, d); };
  UpdateRule u;
  if (update)
    u = [update = std::move(update), k](const Memory& m, const StateId& from, std::size_t i, const OutEdge& e) {
      auto out = update(m.mode, from, i, e);
      for (const auto& [mode, p] : out)
        if (mode < 0 || mode >= k) throw std::out_of_range("FR update left the mode set");
      return out;
    };
  return std::make_shared<Strategy>(StrategyClass{StrategyTag::FR, k}, std::move(name), initial, std::move(c), std::move(u));
}

StrategyPtr make_kbit(std::string name, int bits,
                      std::function<Dist<std::size_t>(std::int64_t, std::int64_t, const StateId&)> choose,
                      std::function<Dist<std::int64_t>(std::int64_t, std::int64_t, const StateId&, std::size_t)> update) {
  if (bits < 0 || bits > 30) throw std::invalid_argument("make_kbit: bits out of range");
  const std::int64_t modes = std::int64_t{1} << bits;
  ChoiceRule c = [choose = std::move(choose)](const Memory& m, const StateId& s, Degree) { return choose(m.mode, m.steps, s); };
  UpdateRule u;
  if (update)
    u = [update = std::move(update), modes](const Memory& m, const StateId& from, std::size_t i, const OutEdge&) {
      auto out = update(m.mode, m.steps, from, i);
      for (const auto& [mode, p] : out)
        if (mode < 0 || mode >= modes) throw std::out_of_range("k-bit update left the pattern set");
      return out;
    };
  return std::make_shared<Strategy>(StrategyClass{StrategyTag::KBitMarkov, modes}, std::move(name), 0, std::move(c), std::move(u));
}

StrategyPtr make_hd(std::string name, std::int64_t initial, ChoiceRule choose, UpdateRule update) {
  return std::make_shared<Strategy>(StrategyClass{StrategyTag::HD, 0}, std::move(name), initial, std::move(choose), std::move(update));
}

// ---- FR text format ----

bool FrSpec::Pattern::matches(std::int64_t m, const StateId& s) const {
  if (mode && *mode != m) return false;
  if (role && *role != s.role) return false;
  if (branch_eq && *branch_eq != s.branch) return false;
  if (branch_ge && s.branch < *branch_ge) return false;
  return true;
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw std::invalid_argument("FR spec line " + std::to_string(line) + ": " + what);
}

std::int64_t to_int(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    auto v = std::stoll(tok, &used);
    if (used != tok.size()) fail(line, "not an integer: " + tok);
    return v;
  } catch (const std::logic_error&) {
    fail(line, "not an integer: " + tok);
  }
}

FrSpec::Target parse_target(const std::string& tok, bool choice, std::size_t line) {
  FrSpec::Target t;
  auto colon = tok.find(':');
  std::string head = tok.substr(0, colon);
  if (colon != std::string::npos) {
    try {
      t.prob = parse_rational(tok.substr(colon + 1));
    } catch (const std::exception&) {
      fail(line, "bad probability in " + tok);
    }
  }
  using K = FrSpec::Target;
  if (choice && head == "mode") t.kind = K::Mode;
  else if (choice && head == "top") t.kind = K::Top;
  else if (!choice && head == "keep") t.kind = K::Keep;
  else if (!choice && head == "clamp-branch") t.kind = K::ClampBranch;
  else if (!choice && head == "branch-mod") t.kind = K::BranchMod;
  else {
    t.kind = choice ? K::Index : K::Mode;
    t.value = to_int(head, line);
  }
  return t;
}

std::string target_text(const FrSpec::Target& t) {
  using K = FrSpec::Target;
  std::string head;
  switch (t.kind) {
    case K::Index: head = std::to_string(t.value); break;
    case K::Mode: head = t.value >= 0 ? std::to_string(t.value) : "mode"; break;
    case K::Top: head = "top"; break;
    case K::Keep: head = "keep"; break;
    case K::ClampBranch: head = "clamp-branch"; break;
    case K::BranchMod: head = "branch-mod"; break;
  }
  return head + ":" + to_string(t.prob);
}

}  // namespace

FrSpec FrSpec::parse(const std::string& text) {
  FrSpec spec;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto hash = raw.find('#');
    std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "name") {
      ls >> spec.name;
      continue;
    }
    if (word == "modes" || word == "initial") {
      std::string v;
      ls >> v;
      (word == "modes" ? spec.modes : spec.initial) = to_int(v, lineno);
      continue;
    }
    if (word != "choose" && word != "update") fail(lineno, "unknown directive " + word);
    const bool choice = word == "choose";
    std::vector<std::string> lhs, rhs;
    bool arrow = false;
    for (std::string tok; ls >> tok;) {
      if (tok == "->") {
        arrow = true;
        continue;
      }
      (arrow ? rhs : lhs).push_back(tok);
    }
    if (!arrow || lhs.size() < 2 || lhs.size() > 3 || rhs.empty()) fail(lineno, "expected '<mode> <role> [branch] -> targets'");
    Line l;
    if (lhs[0] != "*") l.pattern.mode = to_int(lhs[0], lineno);
    if (lhs[1] != "*") l.pattern.role = lhs[1];
    if (lhs.size() == 3 && lhs[2] != "*") {
      if (lhs[2].rfind(">=", 0) == 0) l.pattern.branch_ge = to_int(lhs[2].substr(2), lineno);
      else l.pattern.branch_eq = to_int(lhs[2], lineno);
    }
    Rational sum = 0;
    for (const auto& tok : rhs) {
      l.targets.push_back(parse_target(tok, choice, lineno));
      sum += l.targets.back().prob;
    }
    if (sum != 1) fail(lineno, "target probabilities sum to " + to_string(sum));
    (choice ? spec.choose : spec.update).push_back(std::move(l));
  }
  if (spec.modes < 1) throw std::invalid_argument("FR spec needs modes >= 1");
  if (spec.initial < 0 || spec.initial >= spec.modes) throw std::invalid_argument("FR spec initial mode out of range");
  for (const auto& l : spec.update)
    for (const auto& t : l.targets)
      if (t.kind == Target::Mode && (t.value < 0 || t.value >= spec.modes))
        throw std::invalid_argument("FR spec update targets mode " + std::to_string(t.value));
  return spec;
}

FrSpec FrSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string FrSpec::str() const {
  std::ostringstream out;
  out << "name " << name << "\nmodes " << modes << "\ninitial " << initial << "\n";
  auto emit = [&](const char* word, const Line& l) {
    out << word << ' ' << (l.pattern.mode ? std::to_string(*l.pattern.mode) : "*") << ' ' << l.pattern.role.value_or("*") << ' ';
    if (l.pattern.branch_eq) out << *l.pattern.branch_eq;
    else if (l.pattern.branch_ge) out << ">=" << *l.pattern.branch_ge;
    else out << '*';
    out << " ->";
    for (const auto& t : l.targets) {
      auto copy = t;
      if (word[0] == 'c' && copy.kind == Target::Mode) copy.value = -1;
      out << ' ' << target_text(copy);
    }
    out << '\n';
  };
  for (const auto& l : choose) emit("choose", l);
  for (const auto& l : update) emit("update", l);
  return out.str();
}

StrategyPtr FrSpec::build() const {
  auto self = std::make_shared<const FrSpec>(*this);
  auto choose_fn = [self](std::int64_t mode, const StateId& s, Degree d) {
    for (const auto& l : self->choose) {
      if (!l.pattern.matches(mode, s)) continue;
      std::map<std::size_t, Rational> acc;
      for (const auto& t : l.targets) {
        std::size_t idx = 0;
        switch (t.kind) {
          case Target::Index: idx = static_cast<std::size_t>(std::max<std::int64_t>(t.value, 0)); break;
          case Target::Mode: idx = static_cast<std::size_t>(mode); break;
          case Target::Top: idx = d ? *d - 1 : 0; break;
          default: break;
        }
        acc[clamp_index(idx, d)] += t.prob;
      }
      return Dist<std::size_t>(acc.begin(), acc.end());
    }
    return dirac<std::size_t>(0);
  };
  auto update_fn = [self](std::int64_t mode, const StateId&, std::size_t, const OutEdge& e) {
    const StateId& to = e.target;
    for (const auto& l : self->update) {
      if (!l.pattern.matches(mode, to)) continue;
      std::map<std::int64_t, Rational> acc;
      for (const auto& t : l.targets) {
        std::int64_t next = mode;
        switch (t.kind) {
          case Target::Mode: next = t.value; break;
          case Target::ClampBranch: next = std::clamp<std::int64_t>(to.branch, 0, self->modes - 1); break;
          case Target::BranchMod: next = ((to.branch % self->modes) + self->modes) % self->modes; break;
          default: break;
        }
        acc[next] += t.prob;
      }
      return Dist<std::int64_t>(acc.begin(), acc.end());
    }
    return dirac(mode);
  };
  return make_fr(name, modes, initial, choose_fn, update_fn);
}

// ---- act ----

Dist<std::size_t> act(const Strategy& sigma, const Mdp& mdp, const Run& run) {
  if (mdp.kind(run.last()) != StateKind::Controlled) throw NotControlled("act at random state " + run.last().str());
  // Belief over modes given the observed run; counters are forced and shared by every branch.
  std::map<std::int64_t, Rational> belief{{sigma.initial_memory().mode, Rational(1)}};
  Memory mem = sigma.initial_memory();
  for (std::size_t i = 0; i < run.length(); ++i) {
    const StateId& s = run.state(i);
    const std::size_t idx = run.edge(i).index;
    auto edges = mdp.successors(s, idx + 1);
    if (edges.size() <= idx) throw BadChoice("run uses a missing edge at " + s.str());
    const OutEdge& e = edges[idx];
    const bool controlled = mdp.kind(s) == StateKind::Controlled;
    std::map<std::int64_t, Rational> next;
    for (const auto& [mode, w] : belief) {
      Memory m{mode, mem.steps, mem.total};
      Rational weight = w;
      if (controlled) {
        Rational p = 0;
        for (const auto& [j, q] : sigma.choose(m, s, mdp.degree(s)))
          if (j == idx) p += q;
        weight *= p;
      }
      if (weight == 0) continue;
      for (const auto& [m2, q] : sigma.update(m, s, idx, e)) next[m2] += weight * q;
    }
    Rational total = 0;
    for (const auto& [mode, w] : next) total += w;
    if (total == 0) throw std::invalid_argument("run has probability zero under strategy " + sigma.name());
    for (auto& [mode, w] : next) w /= total;
    belief = std::move(next);
    ++mem.steps;
    mem.total += e.reward;
  }
  std::map<std::size_t, Rational> out;
  const Degree d = mdp.degree(run.last());
  for (const auto& [mode, w] : belief)
    for (const auto& [j, q] : sigma.choose(Memory{mode, mem.steps, mem.total}, run.last(), d)) out[j] += w * q;
  Dist<std::size_t> dist;
  for (auto& [j, p] : out)
    if (p != 0) dist.emplace_back(j, p);
  return dist;
}

// ---- induced chain ----

namespace {
std::string node_key(const StateId& s, std::int64_t mode) { return s.str() + "|" + std::to_string(mode); }
}  // namespace

std::size_t InducedChain::find(const StateId& s, std::int64_t mode) const {
  auto it = index.find(node_key(s, mode));
  if (it == index.end()) throw UnknownState("node not in induced chain: " + node_key(s, mode));
  return it->second;
}

InducedChain induced_chain(const Mdp& mdp, const Strategy& sigma, const std::vector<std::pair<StateId, std::int64_t>>& roots,
                           const std::function<bool(const StateId&)>& inside, std::size_t max_nodes) {
  const auto tag = sigma.cls().tag;
  if (tag != StrategyTag::MD && tag != StrategyTag::FR)
    throw NotFiniteMemory("induced_chain needs an MD or FR strategy, got " + sigma.cls().str());
  InducedChain chain;
  std::deque<std::size_t> work;
  auto intern = [&](const StateId& s, std::int64_t mode) {
    auto key = node_key(s, mode);
    auto [it, fresh] = chain.index.emplace(key, chain.nodes.size());
    if (fresh) {
      if (chain.nodes.size() >= max_nodes) throw std::length_error("induced chain exceeds node budget");
      const bool in = inside(s);
      chain.nodes.push_back({s, mode, in});
      chain.rows.emplace_back();
      if (in) work.push_back(it->second);
    }
    return it->second;
  };
  for (const auto& [s, m] : roots) intern(s, m);
  while (!work.empty()) {
    const std::size_t u = work.front();
    work.pop_front();
    const StateId s = chain.nodes[u].state;
    const Memory mem{chain.nodes[u].mode, 0, 0};
    const auto edges = mdp.all_successors(s);
    std::vector<InducedChain::Entry> row;
    auto push = [&](std::size_t idx, const Rational& p) {
      for (const auto& [m2, q] : sigma.update(mem, s, idx, edges[idx])) {
        Rational w = p * q;
        if (w == 0) continue;
        std::size_t v = intern(edges[idx].target, m2);
        row.push_back({v, w, idx, edges[idx].reward});
      }
    };
    if (mdp.kind(s) == StateKind::Controlled) {
      for (const auto& [idx, p] : sigma.choose(mem, s, edges.size())) push(idx, p);
    } else {
      for (std::size_t idx = 0; idx < edges.size(); ++idx) push(idx, *edges[idx].prob);
    }
    chain.rows[u] = std::move(row);
  }
  return chain;
}

}  // namespace cmdp
