#pragma once

// Factory domain state and an independent schedule-trace validator.
//
// The validator shares no scheduling logic with the simulator: it rebuilds
// machine setups, busy intervals and lot progress from the trace alone and
// checks them against the scheduling constraints.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lfsched/scenario.hpp"

namespace lfsched {

struct MachineState {
  int machine_id = 0;
  std::optional<Setup> setup;           // PT_{l,t}, OP_{l,t}
  bool busy = false;                    // Q_{l,t}
  Tick busy_until = 0;                  // next available tick
  Tick shift_conversion_used = 0;
  bool in_unscheduled_maintenance = false;
  bool in_scheduled_maintenance = false;
  int current_lot = -1;                 // index into FactoryState::lots while processing
  friend bool operator==(const MachineState&, const MachineState&) = default;
};

struct LotState {
  int product = 0;
  int lot = 0;
  int units = 1;
  int stage = 0;        // next stage to run; == J_p once finished
  int first_stage = 0;  // stages before this were complete at episode start
  std::vector<std::optional<Tick>> completion_times;  // C_{p,j,k}
  Tick due = 0;
  Tick release = 0;
  Tick arrival_tick_at_stage = 0;

  bool finished() const { return stage >= static_cast<int>(completion_times.size()); }
  std::optional<Tick> final_completion() const {
    return completion_times.empty() ? std::nullopt : completion_times.back();
  }
  friend bool operator==(const LotState&, const LotState&) = default;
};

struct AssignmentEvent {
  int product = 0;
  int stage = 0;  // j
  int lot = 0;    // k
  int machine = 0;
  Tick start = 0;
  Tick conversion = 0;
  Tick processing = 0;

  Tick completion() const { return start + conversion + processing; }
  friend bool operator==(const AssignmentEvent&, const AssignmentEvent&) = default;
};

enum class MaintenanceKind { Scheduled, Unscheduled };

struct MaintenanceInterval {
  int machine = 0;
  Tick start = 0;  // [start, end)
  Tick end = 0;
  MaintenanceKind kind = MaintenanceKind::Scheduled;
  friend bool operator==(const MaintenanceInterval&, const MaintenanceInterval&) = default;
};

enum class ConstraintFamily {
  NoOverlap,
  SetupPersistence,
  CompletionTime,
  Precedence,
  Fifo,
  SingleAssignment,
  ConversionBudget,
  Availability,
};

inline constexpr ConstraintFamily kAllFamilies[] = {
    ConstraintFamily::NoOverlap,        ConstraintFamily::SetupPersistence, ConstraintFamily::CompletionTime,
    ConstraintFamily::Precedence,       ConstraintFamily::Fifo,             ConstraintFamily::SingleAssignment,
    ConstraintFamily::ConversionBudget, ConstraintFamily::Availability,
};

inline std::string to_string(ConstraintFamily f) {
  switch (f) {
    case ConstraintFamily::NoOverlap: return "no-overlap";
    case ConstraintFamily::SetupPersistence: return "setup-persistence";
    case ConstraintFamily::CompletionTime: return "completion-time";
    case ConstraintFamily::Precedence: return "precedence";
    case ConstraintFamily::Fifo: return "fifo";
    case ConstraintFamily::SingleAssignment: return "single-assignment";
    case ConstraintFamily::ConversionBudget: return "conversion-budget";
    case ConstraintFamily::Availability: return "availability";
  }
  return "?";
}

struct Violation {
  ConstraintFamily family;
  int machine = -1;
  Tick tick = -1;
  std::string detail;
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool passed(ConstraintFamily f) const {
    return std::none_of(violations.begin(), violations.end(), [f](const Violation& v) { return v.family == f; });
  }
  std::string summary() const {
    std::ostringstream os;
    for (auto f : kAllFamilies) os << to_string(f) << '=' << (passed(f) ? "pass" : "FAIL") << ' ';
    for (const auto& v : violations) os << "\n  [" << to_string(v.family) << "] " << v.detail;
    return os.str();
  }
  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct LotInfo {
  int units = 1;
  Tick due = 0;
  Tick release = 0;
  int first_stage = 0;
};

inline std::map<std::pair<int, int>, LotInfo> lot_table(const EpisodeInstance& e) {
  std::map<std::pair<int, int>, LotInfo> lots;
  for (const auto& d : e.demand) lots[{d.product, d.lot}] = {d.units, d.due, d.release, 0};
  for (const auto& w : e.initial_wip) lots[{w.product, w.lot}] = {w.units, w.due, 0, w.stage};
  return lots;
}

inline bool covers(Tick start, Tick end, Tick t) { return start <= t && t < end; }

}  // namespace detail

// Pure check of an assignment trace against the scheduling constraints.
// Throws TraceError when the trace is malformed (unsorted or unknown ids).
inline ValidationReport validate_trace(const ScenarioConfig& config, const EpisodeInstance& episode,
                                       std::span<const AssignmentEvent> trace,
                                       std::span<const MaintenanceInterval> maintenance) {
  ValidationReport report;
  auto fail = [&](ConstraintFamily f, int l, Tick t, std::string msg) {
    report.violations.push_back({f, l, t, std::move(msg)});
  };
  const Tick S = config.shift_length;
  const Tick horizon = static_cast<Tick>(episode.horizon_shifts) * S;
  const auto lots = detail::lot_table(episode);

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& ev = trace[i];
    if (i > 0 && ev.start < trace[i - 1].start) throw TraceError("trace is not sorted by start tick");
    if (ev.product < 0 || ev.product >= config.num_products()) throw TraceError("trace names unknown product");
    if (ev.stage < 0 || ev.stage >= config.products[ev.product].stages()) throw TraceError("trace names unknown stage");
    if (ev.machine < 0 || ev.machine >= config.num_machines()) throw TraceError("trace names unknown machine");
    if (!lots.count({ev.product, ev.lot})) throw TraceError("trace names a lot not in the episode");
  }
  for (const auto& m : maintenance)
    if (m.machine < 0 || m.machine >= config.num_machines() || m.end <= m.start)
      throw TraceError("malformed maintenance interval");

  std::vector<std::vector<MaintenanceInterval>> maint(config.num_machines());
  for (const auto& m : maintenance) maint[m.machine].push_back(m);
  for (auto& v : maint) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i].start < v[i - 1].end)
        fail(ConstraintFamily::NoOverlap, v[i].machine, v[i].start,
             "maintenance intervals overlap on machine " + std::to_string(v[i].machine));
  }

  std::vector<std::optional<Setup>> setup(config.num_machines());
  std::vector<Tick> free_at(config.num_machines(), 0);
  for (int l = 0; l < config.num_machines(); ++l) {
    setup[l] = episode.initial_machines.at(l).setup;
    free_at[l] = episode.initial_machines.at(l).busy_until;
  }
  std::vector<std::vector<std::pair<Tick, Tick>>> busy(config.num_machines());
  for (int l = 0; l < config.num_machines(); ++l)
    if (free_at[l] > 0) busy[l].push_back({0, free_at[l]});
  std::map<std::pair<int, Tick>, Tick> budget;  // (machine, shift) -> conversion ticks
  std::map<std::tuple<int, int, int>, const AssignmentEvent*> done;  // (p, j, k)

  for (const auto& ev : trace) {
    const int p = ev.product, j = ev.stage, k = ev.lot, l = ev.machine;
    const int op = config.products[p].route[j];
    const auto& info = lots.at({p, k});
    const std::string who = "lot (p=" + std::to_string(p) + ", k=" + std::to_string(k) + ", j=" + std::to_string(j) +
                            ") on machine " + std::to_string(l) + " at t=" + std::to_string(ev.start);

    if (!done.emplace(std::tuple{p, j, k}, &ev).second)
      fail(ConstraintFamily::SingleAssignment, l, ev.start, who + " assigned more than once");

    if (!config.compatible(p, j, l)) fail(ConstraintFamily::Availability, l, ev.start, who + ": machine not in M_{p,j}");
    if (ev.start < 0 || ev.start >= horizon)
      fail(ConstraintFamily::Availability, l, ev.start, who + ": start outside the horizon");
    for (const auto& m : maint[l])
      if (detail::covers(m.start, m.end, ev.start))
        fail(ConstraintFamily::Availability, l, ev.start, who + ": machine under maintenance");

    if (ev.start < free_at[l])
      fail(ConstraintFamily::NoOverlap, l, ev.start, who + ": machine " + std::to_string(l) + " still busy until t=" +
                                                         std::to_string(free_at[l]));
    for (const auto& m : maint[l])
      if (ev.start < m.end && m.start < ev.completion() && !detail::covers(m.start, m.end, ev.start))
        fail(ConstraintFamily::NoOverlap, l, m.start, who + ": overlaps maintenance on machine " + std::to_string(l));

    // Setup persistence and completion-time arithmetic.
    const Setup target{p, op};
    const bool changes = !setup[l] || *setup[l] != target;
    const Tick expected_conv = config.conversion_ticks(setup[l], target);
    if (!changes && ev.conversion != 0)
      fail(ConstraintFamily::SetupPersistence, l, ev.start, who + ": conversion charged without a setup change");
    else if (changes && expected_conv > 0 && ev.conversion == 0)
      fail(ConstraintFamily::SetupPersistence, l, ev.start, who + ": setup changed without conversion");
    else if (ev.conversion != expected_conv)
      fail(ConstraintFamily::CompletionTime, l, ev.start,
           who + ": conversion " + std::to_string(ev.conversion) + " != CO " + std::to_string(expected_conv));
    const Tick expected_proc = config.products[p].unit_time[j] * info.units;
    if (ev.processing != expected_proc)
      fail(ConstraintFamily::CompletionTime, l, ev.start,
           who + ": processing " + std::to_string(ev.processing) + " != PR*U " + std::to_string(expected_proc));

    // Precedence.
    if (j < info.first_stage) {
      fail(ConstraintFamily::Precedence, l, ev.start, who + ": stage was already complete at episode start");
    } else if (j == info.first_stage) {
      if (ev.start < info.release) fail(ConstraintFamily::Precedence, l, ev.start, who + ": started before release");
    } else {
      auto prev = done.find({p, j - 1, k});
      if (prev == done.end())
        fail(ConstraintFamily::Precedence, l, ev.start, who + ": previous stage never assigned");
      else if (ev.start < prev->second->completion())
        fail(ConstraintFamily::Precedence, l, ev.start,
             who + ": starts before previous stage completes at t=" + std::to_string(prev->second->completion()));
    }

    // Conversion budget per machine per shift.
    if (ev.conversion > 0) {
      Tick& used = budget[{l, ev.start / S}];
      used += ev.conversion;
      if (used > config.conversion_threshold)
        fail(ConstraintFamily::ConversionBudget, l, ev.start,
             "machine " + std::to_string(l) + " uses " + std::to_string(used) + " conversion ticks in shift " +
                 std::to_string(ev.start / S) + " (TH=" + std::to_string(config.conversion_threshold) + ")");
    }

    setup[l] = target;
    free_at[l] = std::max(free_at[l], ev.completion());
    busy[l].push_back({ev.start, ev.completion()});
  }

  // FIFO within each (product, stage) queue, ordered by (arrival, k).
  std::map<std::pair<int, int>, std::vector<std::tuple<Tick, int>>> queues;
  for (const auto& [key, info] : lots) {
    const auto [p, k] = key;
    for (int j = info.first_stage; j < config.products[p].stages(); ++j) {
      Tick arrival;
      if (j == info.first_stage) {
        arrival = info.release;
      } else {
        auto prev = done.find({p, j - 1, k});
        if (prev == done.end()) break;
        arrival = prev->second->completion();
      }
      queues[{p, j}].push_back({arrival, k});
    }
  }
  for (auto& [key, q] : queues) {
    std::sort(q.begin(), q.end());
    const auto [p, j] = key;
    bool gap = false;
    Tick last_start = -1;
    int gap_lot = -1;
    for (const auto& [arrival, k] : q) {
      auto it = done.find({p, j, k});
      if (it == done.end()) {
        if (!gap) gap_lot = k;
        gap = true;
        continue;
      }
      const auto* ev = it->second;
      if (gap)
        fail(ConstraintFamily::Fifo, ev->machine, ev->start,
             "lot k=" + std::to_string(k) + " of product " + std::to_string(p) + " at stage " + std::to_string(j) +
                 " overtook waiting lot k=" + std::to_string(gap_lot));
      else if (ev->start < last_start)
        fail(ConstraintFamily::Fifo, ev->machine, ev->start,
             "lot k=" + std::to_string(k) + " of product " + std::to_string(p) + " at stage " + std::to_string(j) +
                 " started before an earlier arrival");
      last_start = std::max(last_start, ev->start);
    }
  }

  // Scheduled windows are honored, or deferred only while the machine is busy.
  auto machine_busy_at = [&](int l, Tick t) {
    for (auto [s, e] : busy[l])
      if (detail::covers(s, e, t)) return true;
    for (const auto& m : maint[l])
      if (detail::covers(m.start, m.end, t)) return true;
    return false;
  };
  std::vector<MaintenanceWindow> windows = config.scheduled_maintenance;
  std::sort(windows.begin(), windows.end(),
            [](const auto& a, const auto& b) { return std::tie(a.machine, a.start) < std::tie(b.machine, b.start); });
  std::set<const MaintenanceInterval*> used;
  for (const auto& w : windows) {
    if (w.start >= horizon) continue;
    const MaintenanceInterval* match = nullptr;
    for (const auto& m : maint[w.machine])
      if (m.kind == MaintenanceKind::Scheduled && !used.count(&m) && m.start >= w.start &&
          m.end - m.start == w.end - w.start) {
        match = &m;
        break;
      }
    if (match) used.insert(match);
    if (!match || match->start > w.start) {
      if (!machine_busy_at(w.machine, w.start))
        fail(ConstraintFamily::Availability, w.machine, w.start,
             "scheduled maintenance on machine " + std::to_string(w.machine) + " at t=" + std::to_string(w.start) +
                 " was not honored");
    }
  }
  for (const auto& m : maintenance)
    if (m.kind == MaintenanceKind::Scheduled) {
      bool found = false;
      for (const auto& v : maint[m.machine])
        if (v == m && used.count(&v)) found = true;
      if (!found)
        fail(ConstraintFamily::Availability, m.machine, m.start,
             "scheduled maintenance interval on machine " + std::to_string(m.machine) + " has no configured window");
    }

  return report;
}

// Lot progress reconstructed from a trace (independent of the simulator).
inline std::vector<LotState> lots_from_trace(const ScenarioConfig& config, const EpisodeInstance& episode,
                                             std::span<const AssignmentEvent> trace) {
  std::vector<LotState> out;
  std::map<std::pair<int, int>, std::size_t> index;
  auto add = [&](int p, int k, int units, Tick due, Tick release, int first_stage) {
    LotState s;
    s.product = p;
    s.lot = k;
    s.units = units;
    s.due = due;
    s.release = release;
    s.first_stage = s.stage = first_stage;
    s.arrival_tick_at_stage = release;
    s.completion_times.assign(config.products[p].stages(), std::nullopt);
    index[{p, k}] = out.size();
    out.push_back(std::move(s));
  };
  for (const auto& w : episode.initial_wip) add(w.product, w.lot, w.units, w.due, 0, w.stage);
  for (const auto& d : episode.demand) add(d.product, d.lot, d.units, d.due, d.release, 0);
  for (const auto& ev : trace) {
    auto it = index.find({ev.product, ev.lot});
    if (it == index.end()) throw TraceError("trace names a lot not in the episode");
    auto& s = out[it->second];
    s.completion_times.at(ev.stage) = ev.completion();
    s.stage = std::max(s.stage, ev.stage + 1);
    s.arrival_tick_at_stage = ev.completion();
  }
  return out;
}

// Number of delayed lots (H = 1 iff D < C for the final stage), counting
// lots due within the horizon. Unfinished lots due within the horizon count
// as delayed.
inline int objective_value(const ScenarioConfig& config, const EpisodeInstance& episode,
                           std::span<const LotState> lots) {
  const Tick horizon = static_cast<Tick>(episode.horizon_shifts) * config.shift_length;
  int delayed = 0;
  for (const auto& lot : lots) {
    const int J = static_cast<int>(lot.completion_times.size());
    if (J == 0) throw TraceError("lot has no stages");
    std::optional<Tick> prev;
    for (int j = lot.first_stage; j < J; ++j) {
      const auto& c = lot.completion_times[j];
      if (!c) continue;
      if (prev && *c <= *prev) throw TraceError("lot completion times are not increasing");
      prev = c;
    }
    if (lot.finished() && !lot.final_completion())
      throw TraceError("lot marked finished without a final completion time");
    if (lot.due > horizon) continue;
    const auto c = lot.final_completion();
    if (!c || *c > lot.due) ++delayed;
  }
  return delayed;
}

inline int lots_due_within(const ScenarioConfig& config, const EpisodeInstance& episode,
                           std::span<const LotState> lots) {
  const Tick horizon = static_cast<Tick>(episode.horizon_shifts) * config.shift_length;
  return static_cast<int>(std::count_if(lots.begin(), lots.end(), [&](const auto& l) { return l.due <= horizon; }));
}

// ---------------------------------------------------------------------------
// Line-oriented trace format:
//   # key=value        header lines
//   A p j k l start conversion processing
//   M l start end S|U

struct TraceBundle {
  std::map<std::string, std::string> header;
  std::vector<AssignmentEvent> events;
  std::vector<MaintenanceInterval> maintenance;
  friend bool operator==(const TraceBundle&, const TraceBundle&) = default;
};

inline void write_trace(std::ostream& os, const TraceBundle& t) {
  os << "# lfsched-trace v1\n";
  for (const auto& [k, v] : t.header) os << "# " << k << '=' << v << '\n';
  for (const auto& e : t.events)
    os << "A " << e.product << ' ' << e.stage << ' ' << e.lot << ' ' << e.machine << ' ' << e.start << ' '
       << e.conversion << ' ' << e.processing << '\n';
  for (const auto& m : t.maintenance)
    os << "M " << m.machine << ' ' << m.start << ' ' << m.end << ' '
       << (m.kind == MaintenanceKind::Scheduled ? 'S' : 'U') << '\n';
}

inline TraceBundle read_trace(std::istream& is) {
  TraceBundle t;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos && line.size() > 2) t.header[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    std::istringstream ls(line);
    char tag = 0;
    ls >> tag;
    if (tag == 'A') {
      AssignmentEvent e;
      if (!(ls >> e.product >> e.stage >> e.lot >> e.machine >> e.start >> e.conversion >> e.processing))
        throw TraceError("malformed assignment record at line " + std::to_string(lineno));
      t.events.push_back(e);
    } else if (tag == 'M') {
      MaintenanceInterval m;
      char kind = 0;
      if (!(ls >> m.machine >> m.start >> m.end >> kind) || (kind != 'S' && kind != 'U'))
        throw TraceError("malformed maintenance record at line " + std::to_string(lineno));
      m.kind = kind == 'S' ? MaintenanceKind::Scheduled : MaintenanceKind::Unscheduled;
      t.maintenance.push_back(m);
    } else {
      throw TraceError("unknown record at line " + std::to_string(lineno));
    }
  }
  return t;
}

}  // namespace lfsched
