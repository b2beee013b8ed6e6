#include "cmdp/gadgets.hpp"

namespace cmdp {

namespace {

/// Number of consecutive unit steps v_t -> v_{t+1} -> ... (same gadget, role, branch and row, offset
/// advancing by one) that all carry `reward`, starting from `from`, which is known to be one.
/// Rewards along such runs change at thresholds, so the predicate holds on a prefix and galloping
/// plus bisection finds its end while still querying every boundary through the chain itself.
std::int64_t straight_run(const GadgetChain& chain, const StateId& from, const OutEdge& first, bool check_depth) {
  const StateId& to = first.target;
  if (to.gadget != from.gadget || to.role != from.role || to.branch != from.branch || to.row != from.row ||
      to.offset != from.offset + 1 || chain.kind(from) != StateKind::Controlled)
    return 1;
  const auto kind = chain.tag(to).kind;
  const std::int64_t depth0 = check_depth ? chain.declared_depth(from) : 0;
  auto step_ok = [&](std::int64_t j) {  // the j-th step of the run (0-based) matches
    const StateId v = make_state(from.gadget, from.role, from.branch, from.offset + j, from.row);
    try {
      if (chain.kind(v) != StateKind::Controlled) return false;
      const auto es = chain.successors(v, 2);
      if (es.size() != 1 || es[0].reward != first.reward) return false;
      const StateId& w = es[0].target;
      if (w.gadget != v.gadget || w.role != v.role || w.branch != v.branch || w.row != v.row || w.offset != v.offset + 1)
        return false;
      if (chain.tag(w).kind != kind) return false;
      return !check_depth || chain.declared_depth(w) == depth0 + j + 1;
    } catch (const std::exception&) {
      return false;
    }
  };
  std::int64_t good = 1, bad = 2;
  while (step_ok(bad - 1)) {
    good = bad;
    if (bad > (std::int64_t{1} << 50)) return good;
    bad *= 2;
  }
  while (bad - good > 1) {
    const std::int64_t mid = good + (bad - good) / 2;
    (step_ok(mid - 1) ? good : bad) = mid;
  }
  return good;
}

}  // namespace

BlockAudit audit_block(const GadgetChain& chain, std::int64_t n, std::int64_t row) {
  BlockAudit out;
  out.n = n;
  const bool check_depth = !chain.reward_implicit();
  struct Partial {
    StateId at;
    BlockPath path;
    bool has_mean = false;
  };
  std::vector<Partial> stack{{chain.block_entry(n, row), BlockPath{}, false}};
  while (!stack.empty()) {
    Partial cur = std::move(stack.back());
    stack.pop_back();
    const StateId u = cur.at;
    const auto edges = chain.successors(u, 1 << 20);
    const bool random = chain.kind(u) == StateKind::Random;
    std::vector<std::pair<std::size_t, std::int64_t>> moves;  // (edge index, chosen x)
    if (random) {
      for (std::size_t j = 0; j < edges.size(); ++j) moves.emplace_back(j, cur.path.x);
    } else if (u.role == "c" && u.offset == 0 && cur.path.x < 0) {
      for (std::int64_t x = 0; x <= chain.k(n); ++x) moves.emplace_back(chain.route(u, x), x);
    } else if (u.role == "c" || u.role == "cs") {
      moves.emplace_back(chain.route(u, cur.path.x), cur.path.x);
    } else {
      if (edges.size() != 1) throw std::logic_error("unexpected choice inside block at " + u.str());
      moves.emplace_back(0, cur.path.x);
    }
    for (const auto& [j, x] : moves) {
      OutEdge e = edges.at(j);
      Partial next{e.target, cur.path, cur.has_mean};
      BlockPath& p = next.path;
      p.x = x;
      if (random) p.prob *= *e.prob;
      // Constant-reward runs are taken in one stride; the running mean is monotone along each,
      // so its minimum sits at the first or the last step.
      const std::int64_t run = random ? 1 : straight_run(chain, u, e, check_depth);
      p.total += e.reward;
      ++p.length;
      Rational mean = p.total / p.length;
      if (!next.has_mean || mean < p.min_mean) p.min_mean = mean;
      next.has_mean = true;
      if (run > 1) {
        p.total += Rational(run - 1) * e.reward;
        p.length += run - 1;
        mean = p.total / p.length;
        if (mean < p.min_mean) p.min_mean = mean;
        const StateId last = make_state(u.gadget, u.role, u.branch, u.offset + run - 1, u.row);
        e = chain.successors(last, 2).at(0);
        next.at = e.target;
        if (check_depth && chain.declared_depth(e.target) != chain.declared_depth(u) + run) out.depth_consistent = false;
      }
      out.edges += run;
      const NodeTag tag = chain.tag(e.target);
      if (tag.kind == NodeTag::Up && p.i < 0) {
        p.i = tag.branch;
        auto [it, fresh] = out.branch_prob.try_emplace(p.i, p.prob);
        if (!fresh && it->second != p.prob) throw std::logic_error("two probabilities for one branch");
      }
      if (check_depth && run == 1 && tag.kind != NodeTag::Sink && chain.declared_depth(e.target) != chain.declared_depth(u) + 1)
        out.depth_consistent = false;
      const bool leaves = e.target.gadget != n || e.target.row != row;
      if (tag.kind == NodeTag::Sink || tag.kind == NodeTag::Restart || leaves) {
        p.exit = e.target;
        p.end = tag.kind == NodeTag::Sink ? BlockPath::Sink : tag.kind == NodeTag::Restart ? BlockPath::Restart : BlockPath::Next;
        out.paths.push_back(std::move(p));
      } else {
        stack.push_back(std::move(next));
      }
    }
  }
  return out;
}

}  // namespace cmdp
