#pragma once

// Decision-point discrete-event factory environment.
//
// One tick is one decision point. Per tick the driver calls
//   realize_maintenance() -> apply_actions(...) -> advance()
// Lots finishing at tick t enter the next stage queue at t; machines that
// finish at t are assignable at t.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lfsched/factory.hpp"
#include "lfsched/random.hpp"
#include "lfsched/scenario.hpp"

namespace lfsched {

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct FactoryState {
  Tick tick = 0;
  int shift = 0;
  Tick horizon = 0;  // NS
  std::vector<MachineState> machines;
  std::vector<LotState> lots;
  std::vector<std::deque<int>> queues;  // index op * P + p; lot indices, FIFO
  std::vector<int> finished;
  std::vector<int> pending;             // released later, ascending release tick
  std::vector<AssignmentEvent> trace;
  std::vector<MaintenanceInterval> maintenance;
  int num_products = 0;

  const std::deque<int>& queue(int op, int p) const { return queues[static_cast<std::size_t>(op) * num_products + p]; }
  std::deque<int>& queue(int op, int p) { return queues[static_cast<std::size_t>(op) * num_products + p]; }

  friend bool operator==(const FactoryState&, const FactoryState&) = default;
};

struct ShiftRewards {
  int shift = 0;
  std::vector<double> follower;  // r^o_n per operation
  double leader = 0.0;           // r^l_n
};

struct StepOutcome {
  std::vector<AssignmentEvent> events;
  std::optional<ShiftRewards> rewards;
  bool done = false;
};

// Final per-machine decision after decoding (and optional guarding).
struct MachineCommand {
  int machine = 0;
  bool convert = false;  // false keeps the current setup
  int product = -1;      // target product when converting
};

using OperationCommands = std::map<int, std::vector<MachineCommand>>;

class Simulator {
 public:
  explicit Simulator(const ScenarioConfig& config) : config_(&config) {}

  const ScenarioConfig& config() const { return *config_; }
  const FactoryState& state() const { return state_; }
  const EpisodeInstance& episode() const { return episode_; }

  const FactoryState& reset(const EpisodeInstance& episode) {
    validate(episode, *config_);
    const auto& c = *config_;
    episode_ = episode;
    state_ = FactoryState{};
    state_.num_products = c.num_products();
    state_.horizon = static_cast<Tick>(episode.horizon_shifts) * c.shift_length;
    state_.queues.assign(static_cast<std::size_t>(c.num_operations) * c.num_products(), {});
    state_.machines.resize(c.num_machines());
    for (int l = 0; l < c.num_machines(); ++l) {
      auto& m = state_.machines[l];
      m.machine_id = l;
      m.setup = episode.initial_machines[l].setup;
      m.busy_until = episode.initial_machines[l].busy_until;
      m.busy = m.busy_until > 0;
    }

    auto make_lot = [&](int p, int k, int units, Tick due, Tick release, int stage) {
      LotState s;
      s.product = p;
      s.lot = k;
      s.units = units;
      s.due = due;
      s.release = release;
      s.stage = s.first_stage = stage;
      s.arrival_tick_at_stage = release;
      s.completion_times.assign(c.products[p].stages(), std::nullopt);
      state_.lots.push_back(std::move(s));
      return static_cast<int>(state_.lots.size()) - 1;
    };
    std::vector<int> arrivals;
    for (const auto& w : episode.initial_wip) arrivals.push_back(make_lot(w.product, w.lot, w.units, w.due, 0, w.stage));
    for (const auto& d : episode.demand) {
      const int idx = make_lot(d.product, d.lot, d.units, d.due, d.release, 0);
      if (d.release == 0) arrivals.push_back(idx);
      else state_.pending.push_back(idx);
    }
    std::stable_sort(state_.pending.begin(), state_.pending.end(), [&](int a, int b) {
      return std::tie(state_.lots[a].release, state_.lots[a].product, state_.lots[a].lot) <
             std::tie(state_.lots[b].release, state_.lots[b].product, state_.lots[b].lot);
    });
    enqueue(arrivals, 0);

    // Breakdown triggers: exponential inter-failure gaps, uniform repair.
    triggers_.assign(c.num_machines(), {});
    next_trigger_.assign(c.num_machines(), 0);
    pending_sm_.assign(c.num_machines(), {});
    pending_repair_.assign(c.num_machines(), std::nullopt);
    for (int l = 0; l < c.num_machines(); ++l) {
      const auto& ms = c.machines[l];
      if (ms.mtbf <= 0) continue;
      Rng rng = make_rng(episode.breakdown_seed, {static_cast<std::uint64_t>(l)});
      double t = 0.0;
      for (;;) {
        t += std::max(1.0, std::ceil(-ms.mtbf * std::log(1.0 - uniform01(rng))));
        if (t >= static_cast<double>(state_.horizon)) break;
        const Tick repair = ms.repair_min + static_cast<Tick>(uniform01(rng) * (ms.repair_max - ms.repair_min + 1));
        triggers_[l].push_back({static_cast<Tick>(t), std::min(repair, ms.repair_max)});
      }
    }
    return state_;
  }

  // Starts scheduled windows and sampled breakdowns. A machine that is
  // processing finishes its current lot first.
  const FactoryState& realize_maintenance() {
    const auto& c = *config_;
    const Tick t = state_.tick;
    for (const auto& w : c.scheduled_maintenance)
      if (w.start == t) pending_sm_[w.machine].push_back(w.end - w.start);
    for (int l = 0; l < c.num_machines(); ++l) {
      auto& trig = triggers_[l];
      auto& next = next_trigger_[l];
      while (next < trig.size() && trig[next].first <= t) {
        auto& m = state_.machines[l];
        if (!pending_repair_[l] && !m.in_unscheduled_maintenance) pending_repair_[l] = trig[next].second;
        ++next;
      }
      auto& m = state_.machines[l];
      if (m.busy_until <= t) {
        if (!pending_sm_[l].empty()) {
          const Tick len = pending_sm_[l].front();
          pending_sm_[l].pop_front();
          m.in_scheduled_maintenance = true;
          m.busy_until = t + len;
          state_.maintenance.push_back({l, t, t + len, MaintenanceKind::Scheduled});
        } else if (pending_repair_[l]) {
          const Tick len = *pending_repair_[l];
          pending_repair_[l].reset();
          m.in_unscheduled_maintenance = true;
          m.busy_until = t + len;
          state_.maintenance.push_back({l, t, t + len, MaintenanceKind::Unscheduled});
        }
      }
      m.busy = m.busy_until > t;
    }
    return state_;
  }

  bool is_available(int machine) const {
    const auto& m = state_.machines[machine];
    return state_.tick < state_.horizon && m.busy_until <= state_.tick;
  }

  std::vector<int> available_machines(int op) const {
    std::vector<int> out;
    for (int l : config_->machines_of(op))
      if (is_available(l)) out.push_back(l);
    return out;
  }

  bool has_available(int op) const {
    for (int l : config_->machines_of(op))
      if (is_available(l)) return true;
    return false;
  }

  // Applies per-machine decisions for the current tick. Machines are served
  // in ascending id order; a decision that cannot start (empty queue,
  // incompatible machine, exhausted budget) leaves the machine idle.
  StepOutcome apply_actions(const OperationCommands& commands) {
    const auto& c = *config_;
    const Tick t = state_.tick;
    if (t >= state_.horizon) throw ContractError("apply_actions after the horizon");
    std::vector<std::pair<int, MachineCommand>> flat;
    for (const auto& [op, cmds] : commands) {
      if (op < 0 || op >= c.num_operations) throw ContractError("action for unknown operation");
      if (!has_available(op))
        throw ContractError("action for operation " + std::to_string(op) + " which has no available machine");
      for (const auto& cmd : cmds) {
        if (cmd.machine < 0 || cmd.machine >= c.num_machines() || c.machines[cmd.machine].home_operation != op)
          throw ContractError("command names a machine outside operation " + std::to_string(op));
        if (!is_available(cmd.machine))
          throw ContractError("command for unavailable machine " + std::to_string(cmd.machine));
        flat.push_back({op, cmd});
      }
    }
    std::sort(flat.begin(), flat.end(), [](const auto& a, const auto& b) { return a.second.machine < b.second.machine; });
    for (std::size_t i = 1; i < flat.size(); ++i)
      if (flat[i].second.machine == flat[i - 1].second.machine)
        throw ContractError("two commands for machine " + std::to_string(flat[i].second.machine));

    StepOutcome out;
    for (const auto& [op, cmd] : flat) {
      auto& m = state_.machines[cmd.machine];
      Setup target;
      if (cmd.convert) {
        target = {cmd.product, op};
      } else {
        if (!m.setup || m.setup->operation != op) continue;
        target = *m.setup;
      }
      if (target.product < 0 || target.product >= c.num_products()) continue;
      const int j = c.products[target.product].stage_of(op);
      if (j < 0 || !c.compatible(target.product, j, cmd.machine)) continue;
      auto& q = state_.queue(op, target.product);
      if (q.empty()) continue;
      const Tick conv = c.conversion_ticks(m.setup, target);
      if (conv > 0 && m.shift_conversion_used + conv > c.conversion_threshold) continue;

      const int idx = q.front();
      q.pop_front();
      auto& lot = state_.lots[idx];
      AssignmentEvent ev{target.product, j, lot.lot, cmd.machine, t, conv,
                         c.products[target.product].unit_time[j] * lot.units};
      m.setup = target;
      m.shift_conversion_used += conv;
      m.busy_until = ev.completion();
      m.busy = true;
      m.current_lot = idx;
      state_.trace.push_back(ev);
      out.events.push_back(ev);
    }
    return out;
  }

  // Moves to the next tick: completes lots, releases demand, and emits the
  // shift rewards when a shift ends.
  StepOutcome advance() {
    const auto& c = *config_;
    if (state_.tick >= state_.horizon) throw ContractError("advance past the end of the episode");
    const Tick t = state_.tick + 1;
    std::vector<int> arrivals;
    for (auto& m : state_.machines) {
      if (m.current_lot >= 0 && m.busy_until == t) {
        auto& lot = state_.lots[m.current_lot];
        lot.completion_times[lot.stage] = t;
        ++lot.stage;
        lot.arrival_tick_at_stage = t;
        if (lot.finished()) state_.finished.push_back(m.current_lot);
        else arrivals.push_back(m.current_lot);
        m.current_lot = -1;
      }
      if ((m.in_scheduled_maintenance || m.in_unscheduled_maintenance) && m.busy_until <= t)
        m.in_scheduled_maintenance = m.in_unscheduled_maintenance = false;
    }
    while (!state_.pending.empty() && state_.lots[state_.pending.front()].release <= t) {
      arrivals.push_back(state_.pending.front());
      state_.pending.erase(state_.pending.begin());
    }
    enqueue(arrivals, t);
    state_.tick = t;

    StepOutcome out;
    if (t % c.shift_length == 0) {
      out.rewards = shift_rewards(static_cast<int>(t / c.shift_length) - 1, t);
      for (auto& m : state_.machines) m.shift_conversion_used = 0;
      state_.shift = static_cast<int>(t / c.shift_length);
    }
    for (auto& m : state_.machines) m.busy = m.busy_until > t;
    out.done = t >= state_.horizon;
    return out;
  }

  bool done() const { return state_.tick >= state_.horizon; }

  // Lots in queues + on machines + finished + not yet released.
  std::size_t accounted_lots() const {
    std::size_t n = state_.finished.size() + state_.pending.size();
    for (const auto& q : state_.queues) n += q.size();
    for (const auto& m : state_.machines) n += m.current_lot >= 0 ? 1 : 0;
    return n;
  }

 private:
  void enqueue(std::vector<int>& arrivals, Tick t) {
    std::sort(arrivals.begin(), arrivals.end(), [&](int a, int b) {
      return std::tie(state_.lots[a].product, state_.lots[a].lot) < std::tie(state_.lots[b].product, state_.lots[b].lot);
    });
    for (int idx : arrivals) {
      auto& lot = state_.lots[idx];
      lot.arrival_tick_at_stage = t;
      const int op = config_->products[lot.product].route[lot.stage];
      state_.queue(op, lot.product).push_back(idx);
    }
  }

  // Each lot is charged once, in the shift whose end is its due time.
  ShiftRewards shift_rewards(int shift, Tick shift_end) const {
    const auto& c = *config_;
    ShiftRewards r;
    r.shift = shift;
    r.follower.assign(c.num_operations, 0.0);
    for (const auto& lot : state_.lots) {
      if (lot.due != shift_end) continue;
      const auto& route = c.products[lot.product].route;
      const auto fc = lot.final_completion();
      if (!fc || *fc > lot.due) r.leader -= 1.0;
      for (int j = lot.first_stage; j < static_cast<int>(route.size()); ++j) {
        const auto& cj = lot.completion_times[j];
        if (!cj || *cj > lot.due) r.follower[route[j]] -= 1.0;
      }
    }
    return r;
  }

  const ScenarioConfig* config_;
  EpisodeInstance episode_;
  FactoryState state_;
  std::vector<std::vector<std::pair<Tick, Tick>>> triggers_;  // (tick, repair length)
  std::vector<std::size_t> next_trigger_;
  std::vector<std::deque<Tick>> pending_sm_;
  std::vector<std::optional<Tick>> pending_repair_;
};

}  // namespace lfsched
