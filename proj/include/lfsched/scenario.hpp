#pragma once

// Scenario description (static world) and per-episode instances.
//
// Products, operations and machines are identified by dense indices
// 0..n-1. A product's route is a sequence of distinct operation ids; a
// re-entrant visit is modelled as its own operation id, so the union of all
// routes forms a DAG over operations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lfsched/random.hpp"

namespace lfsched {

using Tick = std::int64_t;
using Json = nlohmann::json;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DemandTier { Low, Medium, High };

inline double tier_multiplier(DemandTier tier) {
  switch (tier) {
    case DemandTier::Low: return 1.0;
    case DemandTier::Medium: return 3.0;
    case DemandTier::High: return 5.0;
  }
  return 1.0;
}

inline std::string to_string(DemandTier tier) {
  switch (tier) {
    case DemandTier::Low: return "low";
    case DemandTier::Medium: return "medium";
    case DemandTier::High: return "high";
  }
  return "low";
}

inline DemandTier parse_tier(const std::string& s) {
  if (s == "low") return DemandTier::Low;
  if (s == "medium") return DemandTier::Medium;
  if (s == "high") return DemandTier::High;
  throw ConfigError("unknown demand tier '" + s + "' (expected low|medium|high)");
}

// A (product, operation) machine setup.
struct Setup {
  int product = -1;
  int operation = -1;
  friend bool operator==(const Setup&, const Setup&) = default;
  friend auto operator<=>(const Setup&, const Setup&) = default;
};

struct ProductSpec {
  int family = 0;
  std::vector<int> route;                     // O_{p,1..J_p}
  std::vector<std::vector<int>> compatible;   // M_{p,j}
  std::vector<Tick> unit_time;                // PR_{p,j}, ticks per unit
  int units_min = 1;                          // U_{p,k} range
  int units_max = 1;
  double demand_rate = 0.0;                   // mean lots per shift, low tier

  int stages() const { return static_cast<int>(route.size()); }
  // Stage index of operation `op` in the route, or -1.
  int stage_of(int op) const {
    for (std::size_t j = 0; j < route.size(); ++j)
      if (route[j] == op) return static_cast<int>(j);
    return -1;
  }
};

struct MachineSpec {
  int home_operation = 0;
  double mtbf = 0.0;  // mean ticks between failures; <= 0 disables breakdowns
  Tick repair_min = 1;
  Tick repair_max = 1;
};

struct MaintenanceWindow {
  int machine = 0;
  Tick start = 0;  // [start, end)
  Tick end = 0;
  friend bool operator==(const MaintenanceWindow&, const MaintenanceWindow&) = default;
};

struct DemandModel {
  double product_dropout = 0.2;  // per-episode probability a product is not demanded
  double initial_wip_mean = 0.0; // mean pre-positioned lots per product
  int release_lead_shifts = 1;   // lots due at the end of shift n are released at shift n - lead
};

// Conversion times over the valid (product, operation) setups.
class ConversionTable {
 public:
  ConversionTable() = default;
  ConversionTable(std::vector<Setup> setups, std::vector<std::vector<Tick>> ticks)
      : setups_(std::move(setups)), ticks_(std::move(ticks)) {
    for (std::size_t i = 0; i < setups_.size(); ++i) index_[setups_[i]] = static_cast<int>(i);
  }

  const std::vector<Setup>& setups() const { return setups_; }
  const std::vector<std::vector<Tick>>& ticks() const { return ticks_; }

  int index_of(const Setup& s) const {
    auto it = index_.find(s);
    return it == index_.end() ? -1 : it->second;
  }

  Tick at(const Setup& from, const Setup& to) const {
    const int a = index_of(from), b = index_of(to);
    if (a < 0 || b < 0) throw ConfigError("conversion lookup for unknown setup");
    return ticks_[a][b];
  }

 private:
  std::vector<Setup> setups_;
  std::vector<std::vector<Tick>> ticks_;
  std::map<Setup, int> index_;
};

struct ScenarioConfig {
  std::string name = "scenario";
  int num_operations = 0;
  std::vector<MachineSpec> machines;
  std::vector<ProductSpec> products;
  ConversionTable conversion;
  Tick initial_setup_time = 0;  // conversion time from an unset machine
  Tick conversion_threshold = 0;  // TH, ticks per machine per shift
  int shift_length = 12;          // S decision points (ticks) per shift
  int horizon_shifts = 1;         // N
  std::vector<MaintenanceWindow> scheduled_maintenance;
  DemandModel demand;

  int num_products() const { return static_cast<int>(products.size()); }
  int num_machines() const { return static_cast<int>(machines.size()); }
  Tick horizon_ticks() const { return static_cast<Tick>(horizon_shifts) * shift_length; }

  Tick conversion_ticks(const std::optional<Setup>& from, const Setup& to) const {
    if (!from) return initial_setup_time;
    if (*from == to) return 0;
    return conversion.at(*from, to);
  }

  // Products whose route visits `op`, ascending.
  std::vector<int> products_at(int op) const {
    std::vector<int> out;
    for (int p = 0; p < num_products(); ++p)
      if (products[p].stage_of(op) >= 0) out.push_back(p);
    return out;
  }

  // Machines owned by operation `op`, ascending.
  std::vector<int> machines_of(int op) const {
    std::vector<int> out;
    for (int l = 0; l < num_machines(); ++l)
      if (machines[l].home_operation == op) out.push_back(l);
    return out;
  }

  bool compatible(int p, int j, int machine) const {
    const auto& set = products[p].compatible[j];
    return std::find(set.begin(), set.end(), machine) != set.end();
  }

  // Edges of the operation precedence graph induced by the routes.
  std::set<std::pair<int, int>> precedence_edges() const {
    std::set<std::pair<int, int>> edges;
    for (const auto& prod : products)
      for (std::size_t j = 1; j < prod.route.size(); ++j) edges.emplace(prod.route[j - 1], prod.route[j]);
    return edges;
  }

  double mean_out_degree() const {
    return num_operations == 0 ? 0.0
                               : static_cast<double>(precedence_edges().size()) / num_operations;
  }
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline bool has_cycle(int n, const std::set<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(n);
  std::vector<int> indeg(n, 0);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    ++indeg[b];
  }
  std::vector<int> stack;
  for (int v = 0; v < n; ++v)
    if (indeg[v] == 0) stack.push_back(v);
  int seen = 0;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    ++seen;
    for (int w : adj[v])
      if (--indeg[w] == 0) stack.push_back(w);
  }
  return seen != n;
}

inline std::string pj(int p, int j) {
  return "(p=" + std::to_string(p) + ", j=" + std::to_string(j) + ")";
}

}  // namespace detail

// Throws ConfigError naming the first violated invariant.
inline void validate(const ScenarioConfig& c) {
  if (c.num_operations <= 0) throw ConfigError("scenario needs at least one operation");
  if (c.machines.empty()) throw ConfigError("scenario needs at least one machine");
  if (c.products.empty()) throw ConfigError("scenario needs at least one product");
  if (c.shift_length <= 0) throw ConfigError("shift_length must be positive");
  if (c.horizon_shifts <= 0) throw ConfigError("horizon_shifts must be positive");
  if (c.conversion_threshold < 0 || c.conversion_threshold >= c.shift_length)
    throw ConfigError("conversion_threshold TH must satisfy 0 <= TH < shift duration (" +
                      std::to_string(c.shift_length) + " ticks)");
  if (c.initial_setup_time < 0) throw ConfigError("initial_setup_time must be non-negative");

  for (int l = 0; l < c.num_machines(); ++l) {
    const auto& m = c.machines[l];
    if (m.home_operation < 0 || m.home_operation >= c.num_operations)
      throw ConfigError("machine " + std::to_string(l) + " has unknown home operation");
    if (m.repair_min < 1 || m.repair_max < m.repair_min)
      throw ConfigError("machine " + std::to_string(l) + " has an invalid repair range");
  }

  std::vector<bool> op_used(c.num_operations, false);
  for (int p = 0; p < c.num_products(); ++p) {
    const auto& prod = c.products[p];
    const std::string tag = "product " + std::to_string(p);
    if (prod.route.empty()) throw ConfigError(tag + " has an empty operation sequence");
    if (prod.compatible.size() != prod.route.size() || prod.unit_time.size() != prod.route.size())
      throw ConfigError(tag + ": compatible/unit_time must have one entry per route stage");
    std::set<int> seen_ops;
    for (int j = 0; j < prod.stages(); ++j) {
      const int op = prod.route[j];
      if (op < 0 || op >= c.num_operations) throw ConfigError(tag + " routes through unknown operation");
      if (!seen_ops.insert(op).second)
        throw ConfigError(tag + " visits operation " + std::to_string(op) +
                          " twice; encode re-entry as a distinct operation");
      op_used[op] = true;
      const auto& set = prod.compatible[j];
      if (set.empty()) throw ConfigError("empty compatible machine set M" + detail::pj(p, j));
      std::set<int> uniq(set.begin(), set.end());
      if (uniq.size() != set.size()) throw ConfigError("duplicate machine in M" + detail::pj(p, j));
      for (int l : set) {
        if (l < 0 || l >= c.num_machines())
          throw ConfigError("M" + detail::pj(p, j) + " is not a subset of the machine set");
        if (c.machines[l].home_operation != op)
          throw ConfigError("machine " + std::to_string(l) + " in M" + detail::pj(p, j) +
                            " belongs to operation " + std::to_string(c.machines[l].home_operation));
      }
      if (prod.unit_time[j] < 1) throw ConfigError("unit processing time must be >= 1 at " + detail::pj(p, j));
    }
    if (prod.units_min < 1 || prod.units_max < prod.units_min)
      throw ConfigError(tag + " has an invalid unit range");
    if (!(prod.demand_rate >= 0.0)) throw ConfigError(tag + " has a negative demand rate");
  }
  for (int o = 0; o < c.num_operations; ++o)
    if (!op_used[o]) throw ConfigError("operation " + std::to_string(o) + " is not used by any product");

  if (detail::has_cycle(c.num_operations, c.precedence_edges()))
    throw ConfigError("operation precedence graph is not a DAG");

  // Conversion table covers exactly the valid setups.
  std::set<Setup> expected;
  for (int p = 0; p < c.num_products(); ++p)
    for (int op : c.products[p].route) expected.insert({p, op});
  const auto& setups = c.conversion.setups();
  if (std::set<Setup>(setups.begin(), setups.end()) != expected || setups.size() != expected.size())
    throw ConfigError("conversion table must list every (product, operation) setup exactly once");
  const auto& t = c.conversion.ticks();
  if (t.size() != setups.size()) throw ConfigError("conversion matrix has wrong row count");
  for (std::size_t a = 0; a < t.size(); ++a) {
    if (t[a].size() != setups.size()) throw ConfigError("conversion matrix has wrong column count");
    for (std::size_t b = 0; b < t.size(); ++b) {
      if (t[a][b] < 0) throw ConfigError("conversion times must be non-negative");
      if (a == b && t[a][b] != 0) throw ConfigError("conversion time for an identical setup must be 0");
    }
  }

  for (const auto& w : c.scheduled_maintenance) {
    if (w.machine < 0 || w.machine >= c.num_machines())
      throw ConfigError("scheduled maintenance names unknown machine");
    if (w.start < 0 || w.end <= w.start) throw ConfigError("scheduled maintenance window is empty or negative");
  }
  if (c.demand.product_dropout < 0.0 || c.demand.product_dropout >= 1.0)
    throw ConfigError("product_dropout must lie in [0, 1)");
  if (c.demand.initial_wip_mean < 0.0) throw ConfigError("initial_wip_mean must be non-negative");
  if (c.demand.release_lead_shifts < 0) throw ConfigError("release_lead_shifts must be non-negative");
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const ScenarioConfig& c) {
  Json j;
  j["name"] = c.name;
  j["num_operations"] = c.num_operations;
  j["shift_length"] = c.shift_length;
  j["horizon_shifts"] = c.horizon_shifts;
  j["conversion_threshold"] = c.conversion_threshold;
  j["initial_setup_time"] = c.initial_setup_time;
  Json ms = Json::array();
  for (const auto& m : c.machines)
    ms.push_back({{"home_operation", m.home_operation},
                  {"mtbf", m.mtbf},
                  {"repair_min", m.repair_min},
                  {"repair_max", m.repair_max}});
  j["machines"] = ms;
  Json ps = Json::array();
  for (const auto& p : c.products)
    ps.push_back({{"family", p.family},
                  {"route", p.route},
                  {"compatible", p.compatible},
                  {"unit_time", p.unit_time},
                  {"units", {p.units_min, p.units_max}},
                  {"demand_rate", p.demand_rate}});
  j["products"] = ps;
  Json setups = Json::array();
  for (const auto& s : c.conversion.setups()) setups.push_back({s.product, s.operation});
  j["conversion"] = {{"setups", setups}, {"ticks", c.conversion.ticks()}};
  Json sm = Json::array();
  for (const auto& w : c.scheduled_maintenance)
    sm.push_back({{"machine", w.machine}, {"start", w.start}, {"end", w.end}});
  j["scheduled_maintenance"] = sm;
  j["demand"] = {{"product_dropout", c.demand.product_dropout},
                 {"initial_wip_mean", c.demand.initial_wip_mean},
                 {"release_lead_shifts", c.demand.release_lead_shifts}};
  return j;
}

inline ScenarioConfig scenario_from_json(const Json& j) {
  ScenarioConfig c;
  try {
    c.name = j.value("name", std::string("scenario"));
    c.num_operations = j.at("num_operations").get<int>();
    c.shift_length = j.at("shift_length").get<int>();
    c.horizon_shifts = j.at("horizon_shifts").get<int>();
    c.conversion_threshold = j.at("conversion_threshold").get<Tick>();
    c.initial_setup_time = j.value("initial_setup_time", Tick{0});
    for (const auto& m : j.at("machines")) {
      MachineSpec ms;
      ms.home_operation = m.at("home_operation").get<int>();
      ms.mtbf = m.value("mtbf", 0.0);
      ms.repair_min = m.value("repair_min", Tick{1});
      ms.repair_max = m.value("repair_max", ms.repair_min);
      c.machines.push_back(ms);
    }
    for (const auto& p : j.at("products")) {
      ProductSpec ps;
      ps.family = p.value("family", 0);
      ps.route = p.at("route").get<std::vector<int>>();
      ps.compatible = p.at("compatible").get<std::vector<std::vector<int>>>();
      ps.unit_time = p.at("unit_time").get<std::vector<Tick>>();
      const auto units = p.at("units").get<std::vector<int>>();
      if (units.size() != 2) throw ParseError("product 'units' must be [min, max]");
      ps.units_min = units[0];
      ps.units_max = units[1];
      ps.demand_rate = p.value("demand_rate", 0.0);
      c.products.push_back(std::move(ps));
    }
    std::vector<Setup> setups;
    for (const auto& s : j.at("conversion").at("setups")) {
      const auto v = s.get<std::vector<int>>();
      if (v.size() != 2) throw ParseError("conversion setup must be [product, operation]");
      setups.push_back({v[0], v[1]});
    }
    c.conversion = ConversionTable(std::move(setups),
                                   j.at("conversion").at("ticks").get<std::vector<std::vector<Tick>>>());
    if (j.contains("scheduled_maintenance"))
      for (const auto& w : j.at("scheduled_maintenance"))
        c.scheduled_maintenance.push_back(
            {w.at("machine").get<int>(), w.at("start").get<Tick>(), w.at("end").get<Tick>()});
    if (j.contains("demand")) {
      const auto& d = j.at("demand");
      c.demand.product_dropout = d.value("product_dropout", 0.2);
      c.demand.initial_wip_mean = d.value("initial_wip_mean", 0.0);
      c.demand.release_lead_shifts = d.value("release_lead_shifts", 1);
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("scenario schema: ") + e.what());
  }
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ParseError("malformed scenario file '" + path + "': " + e.what());
  }
  ScenarioConfig c = scenario_from_json(j);
  validate(c);
  return c;
}

inline void save_scenario(const ScenarioConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scenario file '" + path + "'");
  out << to_json(c).dump(1) << '\n';
}

inline std::uint64_t fingerprint(const ScenarioConfig& c) {
  const std::string s = to_json(c).dump();
  return fnv1a(s.data(), s.size());
}

// ---------------------------------------------------------------------------
// Synthetic scenario generation

struct ScenarioShape {
  int products = 2;
  int operations = 2;
  int machines = 3;
  double out_degree = 0.5;  // target mean out-degree of the operation DAG
  int horizon_shifts = 4;
  int shift_length = 12;
  int families = 2;
  Tick unit_time_min = 1;
  Tick unit_time_max = 2;
  int units_min = 2;        // per-product base unit count is drawn from [units_min, units_max]
  int units_max = 3;
  int units_spread = 1;     // lots of a product carry base..base+spread units
  Tick conversion_min = 3;
  Tick conversion_max = 5;
  Tick cross_family_extra = 2;
  Tick conversion_threshold = -1;  // < 0 selects shift_length / 2
  Tick initial_setup_time = 4;
  double low_tier_utilization = 0.15;
  double compat_probability = 0.7;
  double mtbf_shifts = 10.0;       // <= 0 disables breakdowns
  Tick repair_min = 2;
  Tick repair_max = 6;
  double maintenance_probability = 0.25;  // per machine per 4-shift block
  Tick maintenance_length = 3;
  DemandModel demand{};
};

namespace detail {

// Covers every edge of a DAG (nodes in topological index order) with paths.
inline std::vector<std::vector<int>> path_cover(int n, std::set<std::pair<int, int>> edges, Rng& rng) {
  std::vector<std::vector<int>> paths;
  std::vector<bool> touched(n, false);
  for (auto [a, b] : edges) touched[a] = touched[b] = true;
  while (!edges.empty()) {
    // Start from the lowest node with outgoing edges and no remaining incoming edge.
    int start = -1;
    for (auto [a, b] : edges) {
      bool has_in = false;
      for (auto [x, y] : edges)
        if (y == a) { has_in = true; break; }
      if (!has_in) { start = a; break; }
    }
    std::vector<int> path{start};
    int v = start;
    for (;;) {
      std::vector<std::pair<int, int>> outs;
      for (auto e : edges)
        if (e.first == v) outs.push_back(e);
      if (outs.empty()) break;
      auto e = outs[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(outs.size()) - 1))];
      edges.erase(e);
      v = e.second;
      path.push_back(v);
    }
    paths.push_back(std::move(path));
  }
  for (int v = 0; v < n; ++v)
    if (!touched[v]) paths.push_back({v});
  return paths;
}

}  // namespace detail

// Deterministic in (shape, seed). Throws ConfigError for infeasible shapes.
inline ScenarioConfig generate_scenario(const ScenarioShape& shape, std::uint64_t seed) {
  const int P = shape.products, O = shape.operations, M = shape.machines;
  if (P < 1 || O < 1 || M < 1) throw ConfigError("shape counts must be positive");
  if (M < O) throw ConfigError("infeasible shape: every operation needs a machine but only " +
                               std::to_string(M) + " machines for " + std::to_string(O) + " operations");
  const int edges_target = static_cast<int>(std::lround(shape.out_degree * O));
  if (edges_target < 0 || edges_target > O * (O - 1) / 2)
    throw ConfigError("infeasible shape: out-degree target cannot be realized on " + std::to_string(O) +
                      " operations");
  if (std::abs(static_cast<double>(edges_target) / O - shape.out_degree) > 0.15)
    throw ConfigError("infeasible shape: out-degree target is not reachable within 0.15");
  if (shape.units_min < 1 || shape.units_max < shape.units_min || shape.unit_time_min < 1 ||
      shape.unit_time_max < shape.unit_time_min || shape.conversion_min < 0 ||
      shape.conversion_max < shape.conversion_min)
    throw ConfigError("invalid shape ranges");

  Rng rng = make_rng(seed, {0x5ce7a710});
  ScenarioConfig c;
  c.name = "generated-" + std::to_string(P) + "p" + std::to_string(O) + "o" + std::to_string(M) + "m";
  c.num_operations = O;
  c.shift_length = shape.shift_length;
  c.horizon_shifts = shape.horizon_shifts;
  c.conversion_threshold = shape.conversion_threshold >= 0 ? shape.conversion_threshold : shape.shift_length / 2;
  c.initial_setup_time = shape.initial_setup_time;
  c.demand = shape.demand;

  // Routes: random DAG over operations in index order, then a path cover.
  std::vector<std::vector<int>> routes;
  bool ok = false;
  for (int attempt = 0; attempt < 5000 && !ok; ++attempt) {
    std::vector<std::pair<double, std::pair<int, int>>> keyed;
    for (int a = 0; a < O; ++a)
      for (int b = a + 1; b < O; ++b) {
        const double w = 1.0 / (b - a);
        keyed.push_back({std::pow(uniform01(rng), 1.0 / w), {a, b}});
      }
    std::sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    std::set<std::pair<int, int>> edges;
    for (int e = 0; e < edges_target; ++e) edges.insert(keyed[e].second);
    routes = detail::path_cover(O, edges, rng);
    if (static_cast<int>(routes.size()) > P) continue;
    while (static_cast<int>(routes.size()) < P) {
      const auto& src = routes[uniform_int(rng, 0, static_cast<std::int64_t>(routes.size()) - 1)];
      const auto len = uniform_int(rng, 1, static_cast<std::int64_t>(src.size()));
      const auto off = uniform_int(rng, 0, static_cast<std::int64_t>(src.size()) - len);
      routes.emplace_back(src.begin() + off, src.begin() + off + len);
    }
    ok = true;
  }
  if (!ok) throw ConfigError("infeasible shape: cannot cover the operation DAG with " + std::to_string(P) +
                             " product routes");
  std::shuffle(routes.begin(), routes.end(), rng);

  // Machines: one per operation, the rest weighted by how many products visit it.
  std::vector<int> load(O, 0);
  for (const auto& r : routes)
    for (int op : r) ++load[op];
  std::vector<int> per_op(O, 1);
  const int total_load = std::accumulate(load.begin(), load.end(), 0);
  for (int extra = 0; extra < M - O; ++extra) {
    auto pick = uniform_int(rng, 0, total_load - 1);
    int op = 0;
    while (pick >= load[op]) pick -= load[op++];
    ++per_op[op];
  }
  for (int op = 0; op < O; ++op)
    for (int i = 0; i < per_op[op]; ++i) {
      MachineSpec ms;
      ms.home_operation = op;
      ms.mtbf = shape.mtbf_shifts > 0 ? shape.mtbf_shifts * shape.shift_length : 0.0;
      ms.repair_min = shape.repair_min;
      ms.repair_max = shape.repair_max;
      c.machines.push_back(ms);
    }

  for (int p = 0; p < P; ++p) {
    ProductSpec ps;
    ps.family = p % std::max(1, shape.families);
    ps.route = routes[p];
    const int base = static_cast<int>(uniform_int(rng, shape.units_min, shape.units_max));
    ps.units_min = base;
    ps.units_max = base + std::max(0, shape.units_spread);
    for (int op : ps.route) {
      const auto pool = c.machines_of(op);
      std::vector<int> set;
      for (int l : pool)
        if (uniform01(rng) < shape.compat_probability) set.push_back(l);
      if (set.empty()) set.push_back(pool[uniform_int(rng, 0, static_cast<std::int64_t>(pool.size()) - 1)]);
      ps.compatible.push_back(std::move(set));
      ps.unit_time.push_back(uniform_int(rng, shape.unit_time_min, shape.unit_time_max));
    }
    c.products.push_back(std::move(ps));
  }

  // Demand rates: each product gets an equal share of every operation it visits.
  for (int p = 0; p < P; ++p) {
    auto& ps = c.products[p];
    const double mean_units = 0.5 * (ps.units_min + ps.units_max);
    double rate = std::numeric_limits<double>::infinity();
    for (int j = 0; j < ps.stages(); ++j) {
      const int op = ps.route[j];
      const double capacity = static_cast<double>(ps.compatible[j].size()) * shape.shift_length;
      const double share = capacity / load[op];
      rate = std::min(rate, share / (static_cast<double>(ps.unit_time[j]) * mean_units));
    }
    const double jitter = 0.75 + 0.5 * uniform01(rng);
    ps.demand_rate = shape.low_tier_utilization * rate * jitter;
  }

  // Conversion matrix over valid setups, ordered by (operation, product).
  std::vector<Setup> setups;
  for (int op = 0; op < O; ++op)
    for (int p = 0; p < P; ++p)
      if (c.products[p].stage_of(op) >= 0) setups.push_back({p, op});
  std::vector<std::vector<Tick>> ticks(setups.size(), std::vector<Tick>(setups.size(), 0));
  for (std::size_t a = 0; a < setups.size(); ++a)
    for (std::size_t b = 0; b < setups.size(); ++b) {
      if (a == b) continue;
      Tick t = uniform_int(rng, shape.conversion_min, shape.conversion_max);
      if (c.products[setups[a].product].family != c.products[setups[b].product].family)
        t += shape.cross_family_extra;
      if (setups[a].operation != setups[b].operation) t += shape.cross_family_extra;
      ticks[a][b] = t;
    }
  c.conversion = ConversionTable(std::move(setups), std::move(ticks));

  // Scheduled maintenance: at most one window per machine per 4-shift block.
  const Tick block = 4 * static_cast<Tick>(shape.shift_length);
  for (int l = 0; l < M; ++l)
    for (Tick b0 = 0; b0 < c.horizon_ticks(); b0 += block) {
      if (uniform01(rng) >= shape.maintenance_probability) continue;
      const Tick len = std::max<Tick>(1, shape.maintenance_length);
      const Tick span = std::min(block, c.horizon_ticks() - b0);
      if (span <= len) continue;
      const Tick start = b0 + uniform_int(rng, 0, span - len);
      c.scheduled_maintenance.push_back({l, start, start + len});
    }

  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Episode instances

struct DemandLot {
  int product = 0;
  int lot = 0;  // k, unique per product
  int units = 1;
  Tick due = 0;
  Tick release = 0;
  friend bool operator==(const DemandLot&, const DemandLot&) = default;
};

struct WipLot {
  int product = 0;
  int lot = 0;
  int units = 1;
  int stage = 0;  // next stage to run; earlier stages are already done
  Tick due = 0;
  friend bool operator==(const WipLot&, const WipLot&) = default;
};

struct InitialMachine {
  std::optional<Setup> setup;  // PT_{l,0}, OP_{l,0}
  Tick busy_until = 0;         // Q_{l,0} = 1 while tick < busy_until
  friend bool operator==(const InitialMachine&, const InitialMachine&) = default;
};

struct EpisodeInstance {
  DemandTier tier = DemandTier::Low;
  std::uint64_t seed = 0;
  int horizon_shifts = 1;
  std::vector<DemandLot> demand;
  std::vector<WipLot> initial_wip;
  std::vector<InitialMachine> initial_machines;
  std::uint64_t breakdown_seed = 0;
  friend bool operator==(const EpisodeInstance&, const EpisodeInstance&) = default;

  std::size_t total_lots() const { return demand.size() + initial_wip.size(); }
};

// Cross-checks an episode against its scenario; throws ConfigError.
inline void validate(const EpisodeInstance& e, const ScenarioConfig& c) {
  if (e.horizon_shifts < 1) throw ConfigError("episode horizon must be at least one shift");
  if (static_cast<int>(e.initial_machines.size()) != c.num_machines())
    throw ConfigError("episode must give an initial state for every machine");
  const Tick S = c.shift_length;
  std::map<int, std::set<int>> lots;
  auto check_lot = [&](int p, int k, int units, Tick due) {
    if (p < 0 || p >= c.num_products()) throw ConfigError("episode lot names unknown product");
    if (!lots[p].insert(k).second)
      throw ConfigError("lot index " + std::to_string(k) + " of product " + std::to_string(p) + " is duplicated");
    if (units < 1) throw ConfigError("lot must carry at least one unit");
    if (due <= 0 || due % S != 0) throw ConfigError("due time " + std::to_string(due) + " is not on a shift boundary");
  };
  for (const auto& d : e.demand) {
    check_lot(d.product, d.lot, d.units, d.due);
    if (d.release < 0 || d.release >= d.due) throw ConfigError("lot release must precede its due time");
  }
  for (const auto& w : e.initial_wip) {
    check_lot(w.product, w.lot, w.units, w.due);
    if (w.stage < 0 || w.stage >= c.products[w.product].stages())
      throw ConfigError("initial WIP stage out of range");
  }
  for (int l = 0; l < c.num_machines(); ++l) {
    const auto& im = e.initial_machines[l];
    if (im.busy_until < 0) throw ConfigError("initial busy_until must be non-negative");
    if (im.setup) {
      const auto& s = *im.setup;
      if (s.product < 0 || s.product >= c.num_products() || c.products[s.product].stage_of(s.operation) < 0)
        throw ConfigError("machine " + std::to_string(l) + " has an initial setup that is not a valid setup");
    }
  }
}

// Demand lots per shift ~ Poisson(rate * tier multiplier); each product is
// dropped from the demanded set with probability `product_dropout` (at least
// one product is kept). Deterministic in (config, tier, seed, horizon).
inline EpisodeInstance sample_episode(const ScenarioConfig& c, DemandTier tier, std::uint64_t seed,
                                      int horizon_shifts = 0) {
  EpisodeInstance e;
  e.tier = tier;
  e.seed = seed;
  e.horizon_shifts = horizon_shifts > 0 ? horizon_shifts : c.horizon_shifts;
  e.breakdown_seed = derive_seed(seed, {0xb4eaccULL});
  Rng rng = make_rng(seed, {0xde3a2dULL});
  const int P = c.num_products();
  const Tick S = c.shift_length;
  const double mult = tier_multiplier(tier);

  std::vector<bool> demanded(P, true);
  for (int p = 0; p < P; ++p) demanded[p] = uniform01(rng) >= c.demand.product_dropout;
  if (std::none_of(demanded.begin(), demanded.end(), [](bool b) { return b; }))
    demanded[uniform_int(rng, 0, P - 1)] = true;

  std::vector<int> next_k(P, 0);
  auto draw_units = [&](int p) {
    return static_cast<int>(uniform_int(rng, c.products[p].units_min, c.products[p].units_max));
  };

  for (int p = 0; p < P; ++p) {
    std::poisson_distribution<int> wip(c.demand.initial_wip_mean > 0 ? c.demand.initial_wip_mean : 1.0);
    const int count = c.demand.initial_wip_mean > 0 ? wip(rng) : 0;
    if (!demanded[p]) continue;
    for (int i = 0; i < count; ++i) {
      WipLot w;
      w.product = p;
      w.lot = next_k[p]++;
      w.units = draw_units(p);
      w.stage = static_cast<int>(uniform_int(rng, 0, c.products[p].stages() - 1));
      w.due = std::min(e.horizon_shifts, 2) * S;
      e.initial_wip.push_back(w);
    }
  }
  for (int n = 0; n < e.horizon_shifts; ++n)
    for (int p = 0; p < P; ++p) {
      const double rate = c.products[p].demand_rate * mult;
      const int count = rate > 0 ? std::poisson_distribution<int>(rate)(rng) : 0;
      if (!demanded[p]) continue;
      for (int i = 0; i < count; ++i) {
        DemandLot d;
        d.product = p;
        d.lot = next_k[p]++;
        d.units = draw_units(p);
        d.due = static_cast<Tick>(n + 1) * S;
        d.release = static_cast<Tick>(std::max(0, n - c.demand.release_lead_shifts)) * S;
        e.demand.push_back(d);
      }
    }

  e.initial_machines.resize(c.num_machines());
  for (int l = 0; l < c.num_machines(); ++l) {
    const int op = c.machines[l].home_operation;
    std::vector<int> candidates;
    for (int p = 0; p < P; ++p) {
      const int j = c.products[p].stage_of(op);
      if (j >= 0 && c.compatible(p, j, l)) candidates.push_back(p);
    }
    if (!candidates.empty()) {
      const int p = candidates[uniform_int(rng, 0, static_cast<std::int64_t>(candidates.size()) - 1)];
      e.initial_machines[l].setup = Setup{p, op};
    }
  }
  return e;
}

inline Json to_json(const EpisodeInstance& e) {
  Json j;
  j["tier"] = to_string(e.tier);
  j["seed"] = e.seed;
  j["horizon_shifts"] = e.horizon_shifts;
  j["breakdown_seed"] = e.breakdown_seed;
  Json d = Json::array();
  for (const auto& x : e.demand) d.push_back({x.product, x.lot, x.units, x.due, x.release});
  j["demand"] = d;
  Json w = Json::array();
  for (const auto& x : e.initial_wip) w.push_back({x.product, x.lot, x.units, x.stage, x.due});
  j["initial_wip"] = w;
  Json m = Json::array();
  for (const auto& x : e.initial_machines) {
    Json s = x.setup ? Json{x.setup->product, x.setup->operation} : Json(nullptr);
    m.push_back({{"setup", s}, {"busy_until", x.busy_until}});
  }
  j["initial_machines"] = m;
  return j;
}

inline EpisodeInstance episode_from_json(const Json& j) {
  EpisodeInstance e;
  try {
    e.tier = parse_tier(j.at("tier").get<std::string>());
    e.seed = j.at("seed").get<std::uint64_t>();
    e.horizon_shifts = j.at("horizon_shifts").get<int>();
    e.breakdown_seed = j.at("breakdown_seed").get<std::uint64_t>();
    for (const auto& x : j.at("demand")) {
      const auto v = x.get<std::vector<Tick>>();
      if (v.size() != 5) throw ParseError("demand record must be [product, lot, units, due, release]");
      e.demand.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]), v[3], v[4]});
    }
    for (const auto& x : j.at("initial_wip")) {
      const auto v = x.get<std::vector<Tick>>();
      if (v.size() != 5) throw ParseError("WIP record must be [product, lot, units, stage, due]");
      e.initial_wip.push_back(
          {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]), static_cast<int>(v[3]), v[4]});
    }
    for (const auto& x : j.at("initial_machines")) {
      InitialMachine im;
      if (!x.at("setup").is_null()) {
        const auto v = x.at("setup").get<std::vector<int>>();
        im.setup = Setup{v.at(0), v.at(1)};
      }
      im.busy_until = x.value("busy_until", Tick{0});
      e.initial_machines.push_back(im);
    }
  } catch (const Json::exception& ex) {
    throw ParseError(std::string("episode schema: ") + ex.what());
  }
  return e;
}

}  // namespace lfsched
