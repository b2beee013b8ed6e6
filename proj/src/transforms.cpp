#include "cmdp/transforms.hpp"

namespace cmdp {

std::string to_string(Encoding e) {
  switch (e) {
    case Encoding::Step: return "step";
    case Encoding::Reward: return "reward";
    case Encoding::Mean: return "mean";
  }
  return "?";
}

StateId EncodedMdp::annotate(const StateId& base_state, std::int64_t steps, const Rational& total) const {
  StateId s = base_state.base();
  if (enc_ != Encoding::Reward) s.step = steps;
  if (enc_ != Encoding::Step) s.total = total;
  return s;
}

StateId EncodedMdp::initial() const { return annotate(base_->initial(), 0, 0); }

std::vector<OutEdge> EncodedMdp::successors(const StateId& s, std::size_t limit) const {
  if ((enc_ != Encoding::Reward && !s.step) || (enc_ != Encoding::Step && !s.total))
    throw UnknownState("missing annotation for the " + to_string(enc_) + " encoding: " + s.str());
  const std::int64_t n = s.step.value_or(0) + 1;
  const Rational r = s.total.value_or(0);
  auto edges = base_->successors(s.base(), limit);
  for (auto& e : edges) {
    Rational next = r + e.reward;
    e.target = annotate(e.target, n, next);
    if (enc_ == Encoding::Reward) e.reward = next;
    else if (enc_ == Encoding::Mean) e.reward = next / n;
  }
  return edges;
}

MdpPtr encode(MdpPtr m, Encoding e) { return std::make_shared<EncodedMdp>(std::move(m), e); }
MdpPtr encode_step(MdpPtr m) { return encode(std::move(m), Encoding::Step); }
MdpPtr encode_reward(MdpPtr m) { return encode(std::move(m), Encoding::Reward); }
MdpPtr encode_mean(MdpPtr m) { return encode(std::move(m), Encoding::Mean); }

StrategyPtr pull_back(StrategyPtr sigma, Encoding e) {
  const auto tag = sigma->cls().tag;
  const bool md = tag == StrategyTag::MD;
  const bool markov = tag == StrategyTag::Markov;
  if (!(md || (markov && e == Encoding::Reward)))
    throw ClassTooRich("cannot pull back a " + sigma->cls().str() + " strategy through the " + to_string(e) + " encoding");
  StrategyTag out = StrategyTag::SCRC;
  if (e == Encoding::Step) out = StrategyTag::Markov;
  else if (e == Encoding::Reward && md) out = StrategyTag::RC;
  // The encoded state is the base state plus the counters the pulled-back strategy keeps.
  ChoiceRule rule = [sigma, e](const Memory& m, const StateId& s, Degree d) {
    StateId a = s.base();
    if (e != Encoding::Reward) a.step = m.steps;
    if (e != Encoding::Step) a.total = m.total;
    return sigma->choose(Memory{0, m.steps, m.total}, a, d);
  };
  return std::make_shared<Strategy>(StrategyClass{out, 1}, sigma->name() + "/pulled-" + to_string(e), 0, std::move(rule));
}

}  // namespace cmdp
