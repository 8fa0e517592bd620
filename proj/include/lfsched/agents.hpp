#pragma once

// State encoders, follower/leader action sampling, and the goal channel.

#include <array>
#include <span>
#include <vector>

#include "lfsched/guard.hpp"
#include "lfsched/policy.hpp"
#include "lfsched/simulator.hpp"

namespace lfsched {

inline constexpr int kGoalDim = 3;
using GoalVector = std::array<double, kGoalDim>;

struct EncoderConfig {
  double count_cap = 10.0;  // lot counts are divided by this and clipped to 1
};

// Per-product demand counters shared by all follower encoders at a tick.
struct DemandView {
  std::vector<int> past_due;   // unfinished lots whose due time has passed
  std::vector<int> due_now;    // unfinished lots due at the end of the current shift
  std::vector<int> due_next;   // unfinished lots due at the end of the next shift (inside the window)
};

inline DemandView demand_view(const ScenarioConfig& c, const FactoryState& s, Tick window_end) {
  DemandView v;
  v.past_due.assign(c.num_products(), 0);
  v.due_now.assign(c.num_products(), 0);
  v.due_next.assign(c.num_products(), 0);
  const Tick S = c.shift_length;
  const Tick shift_end = (s.tick / S + 1) * S;
  for (const auto& lot : s.lots) {
    if (lot.finished()) continue;
    if (lot.due <= s.tick) ++v.past_due[lot.product];
    else if (lot.due == shift_end) ++v.due_now[lot.product];
    else if (lot.due == shift_end + S && lot.due <= window_end) ++v.due_next[lot.product];
  }
  return v;
}

class FollowerEncoder {
 public:
  FollowerEncoder() = default;
  FollowerEncoder(const ScenarioConfig& c, int op, EncoderConfig cfg = {})
      : op_(op), cfg_(cfg), machines_(c.machines_of(op)), products_(c.products_at(op)),
        num_ops_(c.num_operations), shift_length_(c.shift_length), threshold_(c.conversion_threshold) {}

  int operation() const { return op_; }
  const std::vector<int>& machines() const { return machines_; }
  const std::vector<int>& products() const { return products_; }
  int choices_per_machine() const { return 2 * static_cast<int>(products_.size()); }

  int machine_block() const { return static_cast<int>(products_.size()) + 1 + num_ops_ + 1 + 5; }
  int state_dim() const {
    return static_cast<int>(machines_.size()) * machine_block() + 4 * static_cast<int>(products_.size()) + 1;
  }
  int dim() const { return state_dim() + kGoalDim; }

  // Machine and demand features only (the leader's view of this operation).
  Vec encode_state(const FactoryState& s, const DemandView& d) const {
    Vec x = Vec::Zero(state_dim());
    const double S = shift_length_;
    const int np = static_cast<int>(products_.size());
    int i = 0;
    for (int l : machines_) {
      const auto& m = s.machines[l];
      int pslot = np;
      if (m.setup)
        for (int k = 0; k < np; ++k)
          if (products_[k] == m.setup->product && m.setup->operation == op_) pslot = k;
      x(i + pslot) = 1.0;
      i += np + 1;
      x(i + (m.setup ? m.setup->operation : num_ops_)) = 1.0;
      i += num_ops_ + 1;
      x(i++) = m.busy_until > s.tick ? 1.0 : 0.0;
      x(i++) = threshold_ > 0 ? std::min(1.0, static_cast<double>(m.shift_conversion_used) / threshold_) : 0.0;
      x(i++) = std::clamp(static_cast<double>(m.busy_until - s.tick) / S, 0.0, 1.0);
      // Queue behind the current setup: what keeping the setup would serve next.
      const double own = pslot < np ? static_cast<double>(s.queue(op_, products_[pslot]).size()) : 0.0;
      x(i++) = own > 0 ? 1.0 : 0.0;
      x(i++) = std::min(1.0, own / cfg_.count_cap);
    }
    auto norm = [&](double v) { return std::min(1.0, v / cfg_.count_cap); };
    for (int p : products_) {
      x(i++) = norm(static_cast<double>(s.queue(op_, p).size()));
      x(i++) = norm(d.past_due[p]);
      x(i++) = norm(d.due_now[p]);
      x(i++) = norm(d.due_next[p]);
    }
    x(i++) = static_cast<double>(s.tick % shift_length_) / S;
    return x;
  }

  Vec encode(const FactoryState& s, const DemandView& d, const GoalVector& goal) const {
    Vec x(dim());
    x.head(state_dim()) = encode_state(s, d);
    for (int g = 0; g < kGoalDim; ++g) x(state_dim() + g) = goal[g];
    return x;
  }

  // Decodes one machine's categorical outcome: even = convert to product,
  // odd = keep the current setup.
  ConversionIntent decode(int choice) const {
    if (choice < 0 || choice >= choices_per_machine()) throw ContractError("follower choice out of range");
    return {choice % 2 == 0, products_[choice / 2]};
  }

 private:
  int op_ = 0;
  EncoderConfig cfg_;
  std::vector<int> machines_;
  std::vector<int> products_;
  int num_ops_ = 0;
  int shift_length_ = 1;
  Tick threshold_ = 0;
};

// One categorical per managed machine; unavailable machines are masked.
struct FollowerAction {
  std::vector<int> choices;  // per managed machine slot, -1 when not acting
};

struct FollowerDecision {
  FollowerAction action;
  double log_prob = 0.0;
  double value = 0.0;
};

inline FollowerDecision follower_act(const Vec& obs, const ActorCritic& policy, std::span<const bool> available,
                                     ActMode mode, Rng& rng) {
  if (policy.kind() != HeadKind::Categorical || static_cast<int>(available.size()) != policy.groups())
    throw std::invalid_argument("follower policy does not match the observation/machine layout");
  auto r = policy.act(obs, available, mode, rng);
  return {{std::move(r.action.choices)}, r.log_prob, r.value};
}

struct LeaderDecision {
  std::vector<GoalVector> goals;  // per operation
  PolicyAction action;
  double log_prob = 0.0;
  double value = 0.0;
};

inline Vec leader_observation(const std::vector<FollowerEncoder>& encoders, const FactoryState& s, const DemandView& d) {
  int dim = 0;
  for (const auto& e : encoders) dim += e.state_dim();
  Vec x(dim);
  int off = 0;
  for (const auto& e : encoders) {
    x.segment(off, e.state_dim()) = e.encode_state(s, d);
    off += e.state_dim();
  }
  return x;
}

// Emits one goal vector per operation; only valid at the first decision
// point of a shift.
inline LeaderDecision leader_act(const Vec& global_obs, const ActorCritic& policy, ActMode mode, Rng& rng, Tick tick,
                                 int shift_length) {
  if (tick % shift_length != 0) throw ContractError("leader_act called in the middle of a shift");
  if (policy.kind() != HeadKind::Beta || policy.groups() % kGoalDim != 0)
    throw std::invalid_argument("leader policy must have a Beta head with 3 coordinates per operation");
  auto r = policy.act(global_obs, {}, mode, rng);
  LeaderDecision d;
  const int ops = policy.groups() / kGoalDim;
  d.goals.resize(ops);
  for (int o = 0; o < ops; ++o)
    for (int g = 0; g < kGoalDim; ++g) d.goals[o][g] = r.action.values[o * kGoalDim + g];
  d.action = std::move(r.action);
  d.log_prob = r.log_prob;
  d.value = r.value;
  return d;
}

}  // namespace lfsched
