#pragma once

// Dispatching rules, model variants, and the runnable agent bundle.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "lfsched/agents.hpp"

namespace lfsched {

// ---- dispatching rules -------------------------------------------------------

enum class DispatchRule { SPT, EDD, FIFO, LQF };

inline std::string to_string(DispatchRule r) {
  switch (r) {
    case DispatchRule::SPT: return "SPT";
    case DispatchRule::EDD: return "EDD";
    case DispatchRule::FIFO: return "FIFO";
    case DispatchRule::LQF: return "LQF";
  }
  return "?";
}

using RuleSet = std::vector<DispatchRule>;

inline RuleSet jssp_rules() { return {DispatchRule::SPT, DispatchRule::EDD, DispatchRule::FIFO}; }
inline RuleSet dfjss_rules() { return {DispatchRule::SPT, DispatchRule::EDD, DispatchRule::LQF}; }

// Resolves the given machines of `op` (ascending id) with `rule`. Each rule
// ranks the head lots of the (op, p) queues, so service within a queue stays
// FIFO. Only candidates that are compatible and whose conversion fits the
// remaining shift budget are considered; a machine with no candidate idles.
inline std::vector<MachineCommand> apply_rule(DispatchRule rule, const ScenarioConfig& c, const FactoryState& s,
                                              int op, std::vector<int> machines) {
  std::sort(machines.begin(), machines.end());
  const auto products = c.products_at(op);
  std::vector<std::size_t> taken(c.num_products(), 0);  // heads consumed by earlier machines this tick
  std::vector<MachineCommand> out;
  for (int l : machines) {
    const auto& m = s.machines[l];
    int best = -1;
    double best_key = 0.0;
    int best_k = 0;
    for (int p : products) {
      const auto& q = s.queue(op, p);
      if (taken[p] >= q.size()) continue;
      const int j = c.products[p].stage_of(op);
      if (!c.compatible(p, j, l)) continue;
      const Tick conv = c.conversion_ticks(m.setup, Setup{p, op});
      if (conv > 0 && m.shift_conversion_used + conv > c.conversion_threshold) continue;
      const auto& lot = s.lots[q[taken[p]]];
      double key = 0.0;
      switch (rule) {
        case DispatchRule::SPT: key = static_cast<double>(c.products[p].unit_time[j] * lot.units); break;
        case DispatchRule::EDD: key = static_cast<double>(lot.due); break;
        case DispatchRule::FIFO: key = static_cast<double>(lot.arrival_tick_at_stage); break;
        case DispatchRule::LQF: key = -static_cast<double>(q.size() - taken[p]); break;
      }
      if (best < 0 || key < best_key || (key == best_key && std::tie(p, lot.lot) < std::tie(best, best_k))) {
        best = p;
        best_key = key;
        best_k = lot.lot;
      }
    }
    if (best < 0) continue;
    ++taken[best];
    const bool same = m.setup && m.setup->operation == op && m.setup->product == best;
    out.push_back({l, !same, best});
  }
  return out;
}

// ---- variants ----------------------------------------------------------------

enum class Variant { SRM, ORM, LFSRM, LFORM, LFORM_RC, DRL_JSSP, DRL_DFJSS };
enum class RewardMode { Shared, OperationWise };
enum class ActionSpace { Direct, RuleSelection };

inline constexpr Variant kAllVariants[] = {Variant::SRM,      Variant::ORM,      Variant::LFSRM,    Variant::LFORM,
                                           Variant::LFORM_RC, Variant::DRL_JSSP, Variant::DRL_DFJSS};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::SRM: return "SRM";
    case Variant::ORM: return "ORM";
    case Variant::LFSRM: return "LFSRM";
    case Variant::LFORM: return "LFORM";
    case Variant::LFORM_RC: return "LFORM-RC";
    case Variant::DRL_JSSP: return "DRL-JSSP";
    case Variant::DRL_DFJSS: return "DRL-DFJSS";
  }
  return "?";
}

inline Variant parse_variant(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::toupper(ch); });
  std::replace(s.begin(), s.end(), '_', '-');
  for (Variant v : kAllVariants)
    if (to_string(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

struct VariantSpec {
  Variant variant = Variant::LFORM_RC;
  bool leader = true;
  RewardMode reward = RewardMode::OperationWise;
  bool guard = true;
  ActionSpace actions = ActionSpace::Direct;
  bool global_agent = false;  // one agent resolves all operations
  RuleSet rules;
};

inline VariantSpec variant_spec(Variant v) {
  VariantSpec s;
  s.variant = v;
  switch (v) {
    case Variant::SRM: s.leader = false; s.reward = RewardMode::Shared; s.guard = false; break;
    case Variant::ORM: s.leader = false; s.guard = false; break;
    case Variant::LFSRM: s.reward = RewardMode::Shared; s.guard = false; break;
    case Variant::LFORM: s.guard = false; break;
    case Variant::LFORM_RC: break;
    case Variant::DRL_JSSP:
      s.leader = false; s.guard = false; s.actions = ActionSpace::RuleSelection; s.rules = jssp_rules();
      break;
    case Variant::DRL_DFJSS:
      s.leader = false; s.guard = false; s.actions = ActionSpace::RuleSelection; s.rules = dfjss_rules();
      s.global_agent = true;
      break;
  }
  return s;
}

inline void validate(const VariantSpec& s) {
  if (s.guard && s.actions != ActionSpace::Direct) throw ConfigError("the conversion guard requires direct actions");
  if (s.actions == ActionSpace::RuleSelection && s.rules.empty()) throw ConfigError("empty rule set");
  if (s.actions == ActionSpace::Direct && (s.global_agent || !s.rules.empty()))
    throw ConfigError("direct-action variants use one follower per operation and no rules");
  if (s.actions == ActionSpace::RuleSelection && s.leader) throw ConfigError("rule-selection variants have no leader");
}

struct ModelShape {
  int hidden = 256;
  int hidden_layers = 2;
  EncoderConfig encoder;
};

// Agents plus reward routing for one variant on one scenario.
struct Model {
  VariantSpec spec;
  ModelShape shape;
  std::uint64_t fingerprint = 0;
  std::vector<FollowerEncoder> encoders;  // per operation
  std::vector<ActorCritic> agents;        // followers or rule selectors; the leader last
  std::vector<int> agent_of_op;           // -1 when the operation has no agent
  int leader = -1;

  int num_agents() const { return static_cast<int>(agents.size()); }
  int global_obs_dim() const {
    int d = 0;
    for (const auto& e : encoders) d += e.state_dim();
    return d;
  }
};

inline Model build_variant(const VariantSpec& spec, const ScenarioConfig& c, std::uint64_t seed,
                           ModelShape shape = {}) {
  validate(spec);
  Model m;
  m.spec = spec;
  m.shape = shape;
  m.fingerprint = fingerprint(c);
  for (int o = 0; o < c.num_operations; ++o) m.encoders.emplace_back(c, o, shape.encoder);
  m.agent_of_op.assign(c.num_operations, -1);
  Rng rng = make_rng(seed, {0xa9e47ULL});
  const int rules = static_cast<int>(spec.rules.size());
  if (spec.global_agent) {
    m.agents.emplace_back(m.global_obs_dim(), HeadKind::Categorical, 1, rules, rng, shape.hidden, shape.hidden_layers);
    for (int o = 0; o < c.num_operations; ++o)
      if (!m.encoders[o].products().empty()) m.agent_of_op[o] = 0;
  } else {
    for (int o = 0; o < c.num_operations; ++o) {
      const auto& e = m.encoders[o];
      if (e.products().empty()) continue;
      m.agent_of_op[o] = m.num_agents();
      if (spec.actions == ActionSpace::Direct)
        m.agents.emplace_back(e.dim(), HeadKind::Categorical, static_cast<int>(e.machines().size()),
                              e.choices_per_machine(), rng, shape.hidden, shape.hidden_layers);
      else
        m.agents.emplace_back(e.state_dim(), HeadKind::Categorical, 1, rules, rng, shape.hidden, shape.hidden_layers);
    }
  }
  if (spec.leader) {
    m.leader = m.num_agents();
    m.agents.emplace_back(m.global_obs_dim(), HeadKind::Beta, kGoalDim * c.num_operations, 2, rng, shape.hidden,
                          shape.hidden_layers);
  }
  return m;
}

// Shift reward credited to each non-leader agent, indexed by agent id.
inline std::vector<double> route_rewards(const Model& m, const ShiftRewards& r) {
  std::vector<double> out(m.num_agents(), 0.0);
  for (int o = 0; o < static_cast<int>(m.agent_of_op.size()); ++o) {
    const int a = m.agent_of_op[o];
    if (a < 0) continue;
    if (m.spec.global_agent) out[a] += r.follower[o];
    else out[a] = m.spec.reward == RewardMode::Shared ? r.leader : r.follower[o];
  }
  if (m.leader >= 0) out[m.leader] = r.leader;
  return out;
}

// Rule-selection step: one categorical over the rule set, then the chosen
// rule resolves every available machine in `ops`.
struct RuleDecision {
  int choice = 0;
  double log_prob = 0.0;
  double value = 0.0;
  OperationCommands commands;
};

inline RuleDecision rule_select_act(const Vec& obs, const ActorCritic& policy, const RuleSet& rules,
                                    const ScenarioConfig& c, const Simulator& sim, const std::vector<int>& ops,
                                    ActMode mode, Rng& rng) {
  if (rules.empty()) throw ConfigError("empty rule set");
  if (policy.choices() != static_cast<int>(rules.size())) throw std::invalid_argument("rule policy size mismatch");
  const auto r = policy.act(obs, {}, mode, rng);
  RuleDecision d;
  d.choice = r.action.choices[0];
  d.log_prob = r.log_prob;
  d.value = r.value;
  for (int o : ops) {
    auto machines = sim.available_machines(o);
    if (machines.empty()) continue;
    d.commands[o] = apply_rule(rules[d.choice], c, sim.state(), o, machines);
  }
  return d;
}

}  // namespace lfsched
