#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "lfsched/lfsched.hpp"

namespace lfsched::oracle {

// Brute-force GAE: A_t = sum_l (gamma*lambda)^l delta_{t+l} inside the segment.
inline std::vector<double> gae(const std::vector<double>& r, const std::vector<double>& v, const std::vector<bool>& ends,
                               const std::vector<double>& nv, double g, double lam) {
  const std::size_t T = r.size();
  std::vector<double> out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double weight = 1.0;
    for (std::size_t u = t; u < T; ++u) {
      const double next = ends[u] ? nv[u] : v[u + 1];
      out[t] += weight * (r[u] + g * next - v[u]);
      if (ends[u]) break;
      weight *= g * lam;
    }
  }
  return out;
}

struct RandomSeq {
  std::vector<double> r, v, nv;
  std::vector<bool> ends;
};

inline RandomSeq random_seq(Rng& rng, int T) {
  RandomSeq s;
  for (int t = 0; t < T; ++t) {
    s.r.push_back(uniform01(rng) * 4 - 2);
    s.v.push_back(uniform01(rng) * 4 - 2);
    s.ends.push_back(t + 1 == T || uniform01(rng) < 0.2);
    s.nv.push_back(uniform01(rng) < 0.5 ? 0.0 : uniform01(rng) * 2 - 1);
  }
  return s;
}

inline Advantages library_gae(const RandomSeq& s, double g, double lam) {
  std::unique_ptr<bool[]> e(new bool[s.ends.size()]);
  for (std::size_t i = 0; i < s.ends.size(); ++i) e[i] = s.ends[i];
  return compute_gae(s.r, s.v, std::span<const bool>(e.get(), s.ends.size()), s.nv, g, lam);
}

// Largest absolute GAE deviation over `trials` random sequences of length T.
inline double gae_max_error(std::uint64_t seed, int trials, int T) {
  Rng rng = make_rng(seed, {});
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto s = random_seq(rng, T);
    const double g = 0.9 + 0.1 * uniform01(rng), lam = uniform01(rng);
    const auto got = library_gae(s, g, lam);
    const auto want = gae(s.r, s.v, s.ends, s.nv, g, lam);
    for (int t = 0; t < T; ++t) {
      worst = std::max(worst, std::abs(got.advantages[t] - want[t]));
      worst = std::max(worst, std::abs(got.returns[t] - (want[t] + s.v[t])));
    }
  }
  return worst;
}

// Toy transitions around the current policy: most ratios lie inside the clip
// range, every fifth one far outside it.
inline std::vector<Transition> toy_batch(const ActorCritic& pol, Rng& rng, int n) {
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.obs = Vec::Zero(pol.obs_dim());
    for (Eigen::Index k = 0; k < t.obs.size(); ++k) t.obs(k) = uniform01(rng) * 2 - 1;
    const std::size_t groups = static_cast<std::size_t>(pol.groups());
    std::unique_ptr<bool[]> active(new bool[groups]);
    for (std::size_t g = 0; g < groups; ++g) active[g] = g != 1 || uniform01(rng) < 0.7;
    auto a = pol.act(t.obs, std::span<const bool>(active.get(), pol.kind() == HeadKind::Categorical ? groups : 0),
                     ActMode::Sample, rng);
    t.action = a.action;
    t.log_prob = a.log_prob + (i % 5 == 0 ? (uniform01(rng) < 0.5 ? 0.8 : -0.8) : (uniform01(rng) - 0.5) * 0.2);
    out.push_back(t);
  }
  return out;
}

// Relative L2 error between analytic and central-difference gradients of the
// PPO loss with respect to every actor (or critic) weight.
inline double ppo_fd_relative_error(ActorCritic& pol, const std::vector<Transition>& batch,
                                    const std::vector<double>& adv, const std::vector<double>& ret, bool actor) {
  TrainConfig cfg;
  std::vector<const Transition*> ptr;
  for (const auto& t : batch) ptr.push_back(&t);
  Parameters ga = zeros_like(pol.actor().params()), gc = zeros_like(pol.critic().params());
  ppo_loss(pol, ptr, adv, ret, cfg, &ga, &gc);
  auto& params = actor ? pol.actor().params() : pol.critic().params();
  const auto& grads = actor ? ga : gc;
  double num = 0.0, den_a = 0.0, den_b = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k].weight;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double x0 = w.data()[i];
      w.data()[i] = x0 + h;
      const double up = ppo_loss(pol, ptr, adv, ret, cfg).total;
      w.data()[i] = x0 - h;
      const double dn = ppo_loss(pol, ptr, adv, ret, cfg).total;
      w.data()[i] = x0;
      const double fd = (up - dn) / (2 * h);
      const double an = grads[k].weight.data()[i];
      num += (fd - an) * (fd - an);
      den_a += an * an;
      den_b += fd * fd;
    }
  }
  return std::sqrt(num) / std::max(1e-12, std::sqrt(std::max(den_a, den_b)));
}

// Worst finite-difference error over categorical and Beta heads.
inline double ppo_fd_worst(std::uint64_t seed) {
  double worst = 0.0;
  for (int kind = 0; kind < 2; ++kind) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(kind)});
    ActorCritic pol = kind == 0 ? ActorCritic(5, HeadKind::Categorical, 3, 4, rng, 8, 2)
                                : ActorCritic(4, HeadKind::Beta, 3, 2, rng, 8, 2);
    pol.actor().params().back().weight *= 100.0;  // move away from the uniform policy
    const auto batch = toy_batch(pol, rng, 40);
    std::vector<double> adv, ret;
    for (int i = 0; i < 40; ++i) {
      adv.push_back(uniform01(rng) * 2 - 1);
      ret.push_back(uniform01(rng) * 2 - 1);
    }
    worst = std::max(worst, ppo_fd_relative_error(pol, batch, adv, ret, true));
    worst = std::max(worst, ppo_fd_relative_error(pol, batch, adv, ret, false));
  }
  return worst;
}

// Guard rule restated for one operation with two machines, two products and
// unit processing time per unit. Machine 0 is the deciding machine.
struct GuardCase {
  std::array<std::optional<int>, 2> setup;
  std::array<Tick, 2> busy_until{0, 0};
  std::array<Tick, 2> rc{0, 0};
  Tick horizon_end = 0;
  Tick bn = 1;
  bool convert = false;
  int candidate = -1;
};

struct GuardOutcome {
  bool convert = false;
  int product = -1;
};

inline GuardOutcome guard(const GuardCase& g) {
  if (!g.convert) return {};
  if (g.rc[g.candidate] > 0) return {true, g.candidate};
  std::array<Tick, 2> erc{0, 0}, ercm{0, 0};
  for (int l = 0; l < 2; ++l)
    if (g.setup[l]) {
      ercm[l] = std::max<Tick>(0, g.horizon_end - g.busy_until[l]);
      erc[*g.setup[l]] += ercm[l];
    }
  std::array<Tick, 2> us{0, 0};
  for (int p = 0; p < 2; ++p) {
    if (g.rc[p] <= erc[p]) continue;
    const bool covered = g.setup[0] == p || g.setup[1] == p;
    us[p] = covered ? g.rc[p] : g.rc[p] + g.bn;
  }
  bool current_ok = true;
  if (g.setup[0]) current_ok = g.rc[*g.setup[0]] < erc[*g.setup[0]] - ercm[0];
  if (current_ok && us[0] + us[1] > 0) return {true, us[1] > us[0] ? 1 : 0};
  return {};
}

struct GuardTableResult {
  int cases = 0;
  int mismatches = 0;
  int overrides = 0;
};

// Enumerates setups, the other machine's busy time, queue contents, window
// ends and intents on a 2-product / 2-machine / 1-operation instance.
inline GuardTableResult guard_table() {
  ScenarioConfig c;
  c.num_operations = 1;
  c.shift_length = 12;
  c.horizon_shifts = 2;
  c.conversion_threshold = 6;
  c.initial_setup_time = 3;
  c.machines = {{0, 0.0, 1, 1}, {0, 0.0, 1, 1}};
  for (int p = 0; p < 2; ++p) {
    ProductSpec ps;
    ps.route = {0};
    ps.compatible = {{0, 1}};
    ps.unit_time = {1};
    c.products.push_back(ps);
  }
  c.conversion = ConversionTable({{0, 0}, {1, 0}}, {{0, 3}, {3, 0}});
  validate(c);

  const std::vector<std::optional<int>> setups{std::nullopt, 0, 1};
  const std::vector<std::vector<int>> queue_units{{}, {1}, {2}, {1, 2}, {2, 2}};
  GuardTableResult res;
  for (const auto& s0 : setups)
    for (const auto& s1 : setups)
      for (Tick b1 : {0, 2, 4})
        for (const auto& q0 : queue_units)
          for (const auto& q1 : queue_units)
            for (Tick h : {1, 3, 5, 24})
              for (int intent = 0; intent < 3; ++intent) {
                EpisodeInstance e;
                e.horizon_shifts = 2;
                e.initial_machines.resize(2);
                if (s0) e.initial_machines[0].setup = Setup{*s0, 0};
                if (s1) e.initial_machines[1].setup = Setup{*s1, 0};
                e.initial_machines[1].busy_until = b1;
                for (std::size_t k = 0; k < q0.size(); ++k) e.demand.push_back({0, static_cast<int>(k), q0[k], 24, 0});
                for (std::size_t k = 0; k < q1.size(); ++k) e.demand.push_back({1, static_cast<int>(k), q1[k], 24, 0});
                Simulator sim(c);
                const auto& st = sim.reset(e);
                GuardCase g;
                g.setup = {s0, s1};
                g.busy_until = {0, b1};
                for (int u : q0) g.rc[0] += u;
                for (int u : q1) g.rc[1] += u;
                g.horizon_end = h;
                g.bn = 1 + g.rc[0] + g.rc[1];
                g.convert = intent > 0;
                g.candidate = intent - 1;

                const auto view = capacity_view(c, st, 0, h, big_number(c, e));
                const auto urgency = score_urgency(c, st, view);
                const bool has[2] = {!q0.empty(), !q1.empty()};
                const ConversionIntent in{g.convert, g.candidate};
                const auto got = decide_conversion(in, st.machines[0], has, view, urgency);
                const auto want = guard(g);
                if (got.convert != want.convert || (want.convert && got.product != want.product)) ++res.mismatches;
                res.overrides += got.overrides(in);
                ++res.cases;
              }
  return res;
}

struct DominanceResult {
  int tables = 0;
  int with_uncovered = 0;
  int violations = 0;
};

// Random urgency tables: whenever an uncovered product is short of capacity,
// its score exceeds every covered product's score and it is the argmax.
inline DominanceResult bn_dominance(std::uint64_t seed, int tables) {
  Rng rng = make_rng(seed, {});
  DominanceResult res;
  for (int trial = 0; trial < tables; ++trial) {
    const int np = 2 + static_cast<int>(uniform01(rng) * 5);
    std::vector<Tick> work(np);
    Tick total = 0;
    for (auto& w : work) total += (w = static_cast<Tick>(uniform01(rng) * 40));
    CapacityView v;
    v.big_number = total + 1;
    v.required.assign(np, 0);
    v.expected_remaining.assign(np, 0);
    std::vector<std::optional<Setup>> setups;
    for (int p = 0; p < np; ++p) {
      v.eligible.push_back(p);
      v.required[p] = static_cast<Tick>(uniform01(rng) * (work[p] + 1));
      if (uniform01(rng) < 0.5) {
        setups.push_back(Setup{p, 0});
        v.expected_remaining[p] = static_cast<Tick>(uniform01(rng) * 30);
      }
    }
    const auto u = score_urgency(v, setups);
    auto covered = [&](int p) {
      return std::any_of(setups.begin(), setups.end(), [&](const auto& s) { return s->product == p; });
    };
    Tick max_covered = 0, min_uncovered = std::numeric_limits<Tick>::max();
    bool any_uncovered = false;
    for (int p = 0; p < np; ++p) {
      if (v.required[p] >= v.big_number) ++res.violations;
      if (u.score[p] == 0) continue;
      if (covered(p)) {
        max_covered = std::max(max_covered, u.score[p]);
      } else {
        any_uncovered = true;
        min_uncovered = std::min(min_uncovered, u.score[p]);
      }
    }
    ++res.tables;
    if (any_uncovered) {
      ++res.with_uncovered;
      if (min_uncovered <= max_covered || covered(u.most_urgent())) ++res.violations;
    }
  }
  return res;
}

// Conversion ticks per (machine, shift) recomputed from a trace.
inline std::map<std::pair<int, Tick>, Tick> conversion_per_shift(const ScenarioConfig& c,
                                                                 std::span<const AssignmentEvent> trace) {
  std::map<std::pair<int, Tick>, Tick> used;
  for (const auto& ev : trace)
    if (ev.conversion > 0) used[{ev.machine, ev.start / c.shift_length}] += ev.conversion;
  return used;
}

}  // namespace lfsched::oracle
