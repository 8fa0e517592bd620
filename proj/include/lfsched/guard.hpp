#pragma once

// Rule-based conversion guard: urgency scoring plus the per-machine
// conversion decision that can supersede a follower's intent.

#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "lfsched/simulator.hpp"

namespace lfsched {

// Capacity estimates for one operation. Vectors are indexed by global
// product id; entries for products not processable at the operation are 0.
struct CapacityView {
  int operation = 0;
  std::vector<int> eligible;             // P_o, ascending
  std::vector<Tick> required;            // RC_{o,p}
  std::vector<Tick> expected_remaining;  // ERC_{o,p}
  std::map<int, Tick> machine_remaining; // ERCM_{o,m,p_m} for machines set to (o, p_m)
  Tick big_number = 1;                   // BN

  Tick ercm(int machine) const {
    auto it = machine_remaining.find(machine);
    return it == machine_remaining.end() ? 0 : it->second;
  }
};

struct UrgencyTable {
  int operation = 0;
  std::vector<Tick> score;  // US_{o,p} by product id

  Tick total() const { return std::accumulate(score.begin(), score.end(), Tick{0}); }
  // argmax over products; ties go to the lowest product id.
  int most_urgent() const {
    int best = 0;
    for (int p = 1; p < static_cast<int>(score.size()); ++p)
      if (score[p] > score[best]) best = p;
    return best;
  }
};

// BN = 1 + total processing ticks of every lot over every stage, which
// exceeds any attainable RC.
inline Tick big_number(const ScenarioConfig& config, const EpisodeInstance& episode) {
  Tick total = 0;
  auto add = [&](int p, int units, int first) {
    for (int j = first; j < config.products[p].stages(); ++j) total += config.products[p].unit_time[j] * units;
  };
  for (const auto& d : episode.demand) add(d.product, d.units, 0);
  for (const auto& w : episode.initial_wip) add(w.product, w.units, w.stage);
  return total + 1;
}

// RC from the waiting WIP; ERCM = max(0, horizon_end - max(t, busy_until))
// for machines whose setup is (o, p).
inline CapacityView capacity_view(const ScenarioConfig& config, const FactoryState& state, int op, Tick horizon_end,
                                  Tick big_number) {
  CapacityView v;
  v.operation = op;
  v.eligible = config.products_at(op);
  v.big_number = big_number;
  v.required.assign(config.num_products(), 0);
  v.expected_remaining.assign(config.num_products(), 0);
  for (int p : v.eligible) {
    const int j = config.products[p].stage_of(op);
    for (int idx : state.queue(op, p)) v.required[p] += config.products[p].unit_time[j] * state.lots[idx].units;
  }
  for (int l : config.machines_of(op)) {
    const auto& m = state.machines[l];
    if (!m.setup || m.setup->operation != op) continue;
    const Tick rem = std::max<Tick>(0, horizon_end - std::max(state.tick, m.busy_until));
    v.machine_remaining[l] = rem;
    v.expected_remaining[m.setup->product] += rem;
  }
  return v;
}

// US = RC + BN when RC > ERC and no machine of the operation is set to p;
// US = RC when RC > ERC otherwise; 0 when capacity suffices.
inline UrgencyTable score_urgency(const CapacityView& view, std::span<const std::optional<Setup>> setups) {
  UrgencyTable u;
  u.operation = view.operation;
  u.score.assign(view.required.size(), 0);
  for (int p : view.eligible) {
    if (view.required[p] <= view.expected_remaining[p]) continue;
    const bool covered = std::any_of(setups.begin(), setups.end(), [&](const auto& s) {
      return s && s->operation == view.operation && s->product == p;
    });
    u.score[p] = covered ? view.required[p] : view.required[p] + view.big_number;
  }
  return u;
}

inline UrgencyTable score_urgency(const ScenarioConfig& config, const FactoryState& state, const CapacityView& view) {
  std::vector<std::optional<Setup>> setups;
  for (int l : config.machines_of(view.operation)) setups.push_back(state.machines[l].setup);
  return score_urgency(view, setups);
}

struct ConversionIntent {
  bool convert = false;  // CI
  int candidate = -1;    // p_cand
};

enum class GuardBranch { Keep, Candidate, Urgent, Blocked };

struct GuardedDecision {
  bool convert = false;
  int product = -1;
  GuardBranch branch = GuardBranch::Keep;

  bool overrides(const ConversionIntent& intent) const {
    return intent.convert && !(convert && product == intent.candidate);
  }
};

// `has_wip[p]` tells whether queue (o, p) holds a lot. The machine must be
// available.
inline GuardedDecision decide_conversion(const ConversionIntent& intent, const MachineState& machine,
                                         std::span<const bool> has_wip, const CapacityView& view,
                                         const UrgencyTable& urgency) {
  if (machine.busy) throw ContractError("guard called for a busy machine");
  if (!intent.convert) return {false, -1, GuardBranch::Keep};
  if (intent.candidate >= 0 && intent.candidate < static_cast<int>(has_wip.size()) && has_wip[intent.candidate])
    return {true, intent.candidate, GuardBranch::Candidate};
  bool current_covered = true;
  if (machine.setup && machine.setup->operation == view.operation) {
    const int pm = machine.setup->product;
    current_covered = view.required[pm] < view.expected_remaining[pm] - view.ercm(machine.machine_id);
  }
  if (current_covered && urgency.total() > 0) return {true, urgency.most_urgent(), GuardBranch::Urgent};
  return {false, -1, GuardBranch::Blocked};
}

struct GuardLogEntry {
  Tick tick = 0;
  int machine = 0;
  int operation = 0;
  ConversionIntent intent;
  GuardedDecision outcome;
  bool overridden = false;
};

}  // namespace lfsched
