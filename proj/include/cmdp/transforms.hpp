#pragma once

#include <stdexcept>

#include "cmdp/mdp.hpp"
#include "cmdp/strategy.hpp"

namespace cmdp {

struct ClassTooRich : std::logic_error {
  using std::logic_error::logic_error;
};

enum class Encoding { Step, Reward, Mean };
std::string to_string(Encoding e);

/// Lazy product of a base MDP with a step counter, a reward counter or both. Annotations live
/// in StateId::step and StateId::total, so encoded states print as "...@n" and "...@r=q".
///   Step:   (s,n) -> (s',n+1), reward copied.
///   Reward: (s,r) -> (s',r+x), reward r+x (the target's accumulated total).
///   Mean:   (s,n,r) -> (s',n+1,r+x), reward (r+x)/(n+1).
/// Reward levels are only created along explored edges, so every level is witnessed by a path.
class EncodedMdp final : public Mdp {
 public:
  EncodedMdp(MdpPtr base, Encoding enc) : base_(std::move(base)), enc_(enc) {}
  Encoding encoding() const { return enc_; }
  const Mdp& base() const { return *base_; }

  StateId initial() const override;
  StateKind kind(const StateId& s) const override { return base_->kind(s.base()); }
  Degree degree(const StateId& s) const override { return base_->degree(s.base()); }
  std::vector<OutEdge> successors(const StateId& s, std::size_t limit) const override;
  Rational tail_mass(const StateId& s, std::size_t from) const override { return base_->tail_mass(s.base(), from); }

  StateId annotate(const StateId& base_state, std::int64_t steps, const Rational& total) const;

 private:
  MdpPtr base_;
  Encoding enc_;
};

MdpPtr encode_step(MdpPtr m);
MdpPtr encode_reward(MdpPtr m);
MdpPtr encode_mean(MdpPtr m);
MdpPtr encode(MdpPtr m, Encoding e);

/// Strategy on M that feeds its forced counters into a strategy on the encoding.
///   Step:   MD -> Markov
///   Reward: MD -> RC, Markov -> SC+RC
///   Mean:   MD -> SC+RC
/// Anything else throws ClassTooRich.
StrategyPtr pull_back(StrategyPtr on_encoded, Encoding e);

}  // namespace cmdp
