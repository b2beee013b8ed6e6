#include "cmdp/mdp.hpp"

#include <algorithm>
#include <charconv>
#include <tuple>

namespace cmdp {

std::string StateId::str() const {
  std::string out = "g" + std::to_string(gadget) + "/" + role;
  if (row != 0) out += "#" + std::to_string(row);
  out += "/" + std::to_string(branch) + "/" + std::to_string(offset);
  if (step) out += "@" + std::to_string(*step);
  if (total) out += "@r=" + to_string(*total);
  return out;
}

namespace {

std::int64_t parse_int(std::string_view text, std::string_view whole) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw UnknownState("malformed state id: " + std::string(whole));
  return v;
}

}  // namespace

StateId StateId::parse(std::string_view text) {
  const std::string_view whole = text;
  StateId s;
  if (text.empty() || text[0] != 'g') throw UnknownState("malformed state id: " + std::string(whole));
  std::string_view core = text.substr(1);
  std::string_view annotations;
  if (auto at = core.find('@'); at != std::string_view::npos) {
    annotations = core.substr(at);
    core = core.substr(0, at);
  }
  std::vector<std::string_view> parts;
  for (std::size_t start = 0;;) {
    auto slash = core.find('/', start);
    parts.push_back(core.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  if (parts.size() != 4) throw UnknownState("malformed state id: " + std::string(whole));
  s.gadget = parse_int(parts[0], whole);
  std::string_view role = parts[1];
  if (auto hash = role.find('#'); hash != std::string_view::npos) {
    s.row = parse_int(role.substr(hash + 1), whole);
    role = role.substr(0, hash);
  }
  if (role.empty()) throw UnknownState("malformed state id: " + std::string(whole));
  s.role = std::string(role);
  s.branch = parse_int(parts[2], whole);
  s.offset = parse_int(parts[3], whole);
  while (!annotations.empty()) {
    annotations.remove_prefix(1);
    auto next = annotations.find('@');
    std::string_view item = annotations.substr(0, next);
    if (item.starts_with("r=")) s.total = parse_rational(item.substr(2));
    else s.step = parse_int(item, whole);
    annotations = next == std::string_view::npos ? std::string_view{} : annotations.substr(next);
  }
  return s;
}

StateId StateId::base() const {
  StateId b = *this;
  b.step.reset();
  b.total.reset();
  return b;
}

bool operator==(const StateId& a, const StateId& b) {
  return a.gadget == b.gadget && a.branch == b.branch && a.offset == b.offset && a.row == b.row &&
         a.role == b.role && a.step == b.step && a.total == b.total;
}

bool operator<(const StateId& a, const StateId& b) {
  if (std::tie(a.gadget, a.row, a.role, a.branch, a.offset, a.step) !=
      std::tie(b.gadget, b.row, b.role, b.branch, b.offset, b.step))
    return std::tie(a.gadget, a.row, a.role, a.branch, a.offset, a.step) <
           std::tie(b.gadget, b.row, b.role, b.branch, b.offset, b.step);
  if (a.total.has_value() != b.total.has_value()) return !a.total.has_value();
  return a.total && *a.total < *b.total;
}

std::size_t StateIdHash::operator()(const StateId& s) const {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(s.gadget));
  h = splitmix64(h ^ std::hash<std::string>{}(s.role));
  h = splitmix64(h ^ static_cast<std::uint64_t>(s.branch));
  h = splitmix64(h ^ static_cast<std::uint64_t>(s.offset));
  h = splitmix64(h ^ static_cast<std::uint64_t>(s.row));
  if (s.step) h = splitmix64(h ^ static_cast<std::uint64_t>(*s.step) ^ 0x5151);
  if (s.total) h = splitmix64(h ^ std::hash<std::string>{}(s.total->get_str()));
  return static_cast<std::size_t>(h);
}

Rational Mdp::tail_mass(const StateId& s, std::size_t from) const {
  if (kind(s) != StateKind::Random) return 0;
  auto d = degree(s);
  if (!d) throw std::logic_error("infinite branching state without a declared tail: " + s.str());
  Rational mass = 0;
  auto edges = successors(s, *d);
  for (std::size_t i = from; i < edges.size(); ++i) mass += *edges[i].prob;
  return mass;
}

std::vector<OutEdge> Mdp::all_successors(const StateId& s) const {
  auto d = degree(s);
  if (!d) throw std::logic_error("all_successors on an infinitely branching state: " + s.str());
  return successors(s, *d);
}

std::vector<OutEdge> successors(const Mdp& mdp, const StateId& s, std::size_t limit) {
  return mdp.successors(s, limit);
}

void TableMdp::add(const StateId& s, StateKind kind, std::vector<OutEdge> edges) {
  auto it = std::find(order_.begin(), order_.end(), s);
  if (it != order_.end()) {
    entries_[static_cast<std::size_t>(it - order_.begin())] = Entry{kind, std::move(edges)};
    return;
  }
  order_.push_back(s);
  entries_.push_back(Entry{kind, std::move(edges)});
}

const TableMdp::Entry& TableMdp::entry(const StateId& s) const {
  auto it = std::find(order_.begin(), order_.end(), s);
  if (it == order_.end()) throw UnknownState("unknown state: " + s.str());
  return entries_[static_cast<std::size_t>(it - order_.begin())];
}

StateKind TableMdp::kind(const StateId& s) const { return entry(s).kind; }

Degree TableMdp::degree(const StateId& s) const { return entry(s).edges.size(); }

std::vector<OutEdge> TableMdp::successors(const StateId& s, std::size_t limit) const {
  const auto& e = entry(s).edges;
  return {e.begin(), e.begin() + static_cast<std::ptrdiff_t>(std::min(limit, e.size()))};
}

ValidationReport validate_local(const Mdp& mdp, const StateId& s, const Rational& tol, std::size_t probe) {
  ValidationReport report;
  const StateKind kind = mdp.kind(s);
  const Degree d = mdp.degree(s);
  report.infinite = !d.has_value();
  const std::size_t limit = d ? *d : probe;
  auto edges = mdp.successors(s, limit);
  report.probed = edges.size();
  if (edges.empty()) {
    report.ok = report.nonempty = false;
    report.failures.push_back("no successors");
    return report;
  }
  if (kind == StateKind::Controlled) {
    for (const auto& e : edges)
      if (e.prob) {
        report.ok = false;
        report.failures.push_back("probability on a controlled edge");
        break;
      }
    return report;
  }
  Rational err = 0;
  for (const auto& e : edges) {
    if (!e.prob) {
      report.ok = false;
      report.failures.push_back("random edge without probability");
      continue;
    }
    if (*e.prob <= 0 || *e.prob > 1) {
      report.ok = false;
      report.failures.push_back("probability outside (0,1] on edge to " + e.target.str());
    }
    report.prob_sum += *e.prob;
    err += e.prob_err;
  }
  if (report.infinite) report.declared_tail = mdp.tail_mass(s, edges.size());
  report.deficit = 1 - report.prob_sum - report.declared_tail;
  Rational dev = abs(report.deficit);
  if (dev > tol + err) {
    report.ok = false;
    report.failures.push_back("probability deficit " + to_string(report.deficit));
  }
  return report;
}

std::size_t sample_edge(const Mdp& mdp, const StateId& s, SeedStream& stream) {
  const std::uint64_t bits = stream.next();
  Rational u(Integer(static_cast<unsigned long>(bits >> 32)) * Integer(4294967296UL) +
                 Integer(static_cast<unsigned long>(bits & 0xffffffffULL)),
             Integer(1));
  u /= pow2(64);
  Rational cum = 0;
  const Degree d = mdp.degree(s);
  std::size_t chunk = d ? *d : 64;
  std::size_t seen = 0;
  for (;;) {
    auto edges = mdp.successors(s, chunk);
    for (std::size_t i = seen; i < edges.size(); ++i) {
      cum += *edges[i].prob;
      if (u < cum) return i;
    }
    if (d || edges.size() < chunk) return edges.size() - 1;
    seen = edges.size();
    chunk *= 2;
  }
}

std::uint64_t threshold64(const Rational& cum) {
  if (cum >= 1) return ~std::uint64_t{0};
  if (cum <= 0) return 0;
  Rational scaled = cum * pow2(64);
  Integer t;
  mpz_cdiv_q(t.get_mpz_t(), scaled.get_num_mpz_t(), scaled.get_den_mpz_t());
  if (mpz_sizeinbase(t.get_mpz_t(), 2) > 64) return ~std::uint64_t{0};
  std::uint64_t out = 0;
  mpz_export(&out, nullptr, -1, sizeof(out), 0, 0, t.get_mpz_t());
  return out;
}

std::size_t sample_index(const std::vector<Rational>& probs, SeedStream& stream) {
  const std::uint64_t u = stream.next();
  Rational cum = 0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    cum += probs[i];
    if (u < threshold64(cum)) return i;
  }
  return probs.empty() ? 0 : probs.size() - 1;
}

void extend_run(const Mdp& mdp, Run& run, Choice choice) {
  const StateId& s = run.last();
  const StateKind kind = mdp.kind(s);
  std::size_t index = 0;
  if (auto* idx = std::get_if<std::size_t>(&choice)) {
    if (kind != StateKind::Controlled) throw BadChoice("edge index supplied at random state " + s.str());
    const Degree d = mdp.degree(s);
    if (d && *idx >= *d) throw BadChoice("edge index " + std::to_string(*idx) + " out of range at " + s.str());
    index = *idx;
  } else {
    if (kind != StateKind::Random) throw BadChoice("random draw supplied at controlled state " + s.str());
    index = sample_edge(mdp, s, *std::get<RandomDraw>(choice).stream);
  }
  auto edges = mdp.successors(s, index + 1);
  if (edges.size() <= index) throw BadChoice("edge index out of range at " + s.str());
  OutEdge e = std::move(edges[index]);
  run.push(Transition{index, e.reward}, std::move(e.target));
}

}  // namespace cmdp
