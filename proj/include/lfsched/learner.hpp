#pragma once

// Episode driver, GAE, PPO updates, the training loop, checkpoints, and
// rolling-horizon inference.

#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <thread>

#include "lfsched/baselines.hpp"
#include "lfsched/guard.hpp"

namespace lfsched {

struct Transition {
  Vec obs;
  PolicyAction action;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool episode_end = false;  // last step of this agent in the episode
  bool terminal = false;     // true end of the scenario (no bootstrap)
  double bootstrap = 0.0;    // critic value after a truncated episode
  int shift = 0;
  Tick tick = 0;
};

using Rollout = std::vector<Transition>;

struct GoalEmission {
  int shift = 0;
  Tick tick = 0;
  std::vector<GoalVector> goals;
};

struct EpisodeOptions {
  ActMode mode = ActMode::Sample;
  int window_shifts = 0;  // demand view and guard horizon; 0 = whole episode
  bool collect = false;   // keep transitions for learning
  std::uint64_t policy_seed = 0;
};

struct EpisodeResult {
  std::vector<AssignmentEvent> trace;
  std::vector<MaintenanceInterval> maintenance;
  std::vector<LotState> lots;
  std::vector<GuardLogEntry> guard_log;
  std::vector<GoalEmission> goals;
  std::vector<ShiftRewards> rewards;
  std::vector<double> agent_reward;  // routed shift rewards summed per agent
  double team_reward = 0.0;          // sum of leader-level shift rewards
  std::vector<Rollout> rollouts;     // per agent, when collecting
};

namespace detail {

inline Vec agent_observation(const Model& m, int agent, int op, const FactoryState& s, const DemandView& d,
                             const std::vector<GoalVector>& goals) {
  if (agent == m.leader || m.spec.global_agent) return leader_observation(m.encoders, s, d);
  if (m.spec.actions == ActionSpace::RuleSelection) return m.encoders[op].encode_state(s, d);
  return m.encoders[op].encode(s, d, goals[op]);
}

}  // namespace detail

// Runs one episode under `model`. Per tick: maintenance, leader goals at a
// shift start, follower (or rule) decisions, guard, apply, advance.
inline EpisodeResult run_episode(const Model& model, const ScenarioConfig& c, const EpisodeInstance& episode,
                                 const EpisodeOptions& opts) {
  if (model.fingerprint != fingerprint(c)) throw ConfigError("model was built for a different scenario");
  Simulator sim(c);
  sim.reset(episode);
  Rng rng = make_rng(opts.policy_seed, {0x9011c7ULL});
  const Tick S = c.shift_length;
  const Tick horizon = sim.state().horizon;
  const Tick bn = big_number(c, episode);
  const int O = c.num_operations;
  std::vector<GoalVector> goals(O, GoalVector{0.0, 0.0, 0.0});

  EpisodeResult res;
  res.agent_reward.assign(model.num_agents(), 0.0);
  res.rollouts.assign(opts.collect ? model.num_agents() : 0, {});
  auto record = [&](int agent, Vec obs, PolicyAction act, double lp, double v, Tick t) {
    if (!opts.collect) return;
    Transition tr;
    tr.obs = std::move(obs);
    tr.action = std::move(act);
    tr.log_prob = lp;
    tr.value = v;
    tr.tick = t;
    tr.shift = static_cast<int>(t / S);
    res.rollouts[agent].push_back(std::move(tr));
  };

  while (!sim.done()) {
    sim.realize_maintenance();
    const FactoryState& st = sim.state();
    const Tick t = st.tick;
    const int n = static_cast<int>(t / S);
    const Tick window_end = opts.window_shifts > 0 ? std::min(horizon, (n + opts.window_shifts) * S) : horizon;
    const DemandView dv = demand_view(c, st, window_end);

    if (model.leader >= 0 && t % S == 0) {
      Vec obs = leader_observation(model.encoders, st, dv);
      auto d = leader_act(obs, model.agents[model.leader], opts.mode, rng, t, static_cast<int>(S));
      goals = d.goals;
      res.goals.push_back({n, t, goals});
      record(model.leader, std::move(obs), std::move(d.action), d.log_prob, d.value, t);
    }

    OperationCommands commands;
    if (model.spec.actions == ActionSpace::Direct) {
      for (int o = 0; o < O; ++o) {
        const int a = model.agent_of_op[o];
        if (a < 0 || !sim.has_available(o)) continue;
        const auto& enc = model.encoders[o];
        const std::size_t nm = enc.machines().size();
        std::unique_ptr<bool[]> avail(new bool[nm]);
        for (std::size_t i = 0; i < nm; ++i) avail[i] = sim.is_available(enc.machines()[i]);
        Vec obs = enc.encode(st, dv, goals[o]);
        auto fd = follower_act(obs, model.agents[a], std::span<const bool>(avail.get(), nm), opts.mode, rng);

        CapacityView view;
        UrgencyTable urgency;
        const std::size_t np = c.num_products();
        std::unique_ptr<bool[]> has_wip(new bool[np]());
        if (model.spec.guard) {
          view = capacity_view(c, st, o, window_end, bn);
          urgency = score_urgency(c, st, view);
          for (int p : enc.products()) has_wip[p] = !st.queue(o, p).empty();
        }
        auto& cmds = commands[o];
        for (std::size_t i = 0; i < enc.machines().size(); ++i) {
          const int choice = fd.action.choices[i];
          if (choice < 0) continue;
          const int l = enc.machines()[i];
          const ConversionIntent intent = enc.decode(choice);
          if (model.spec.guard) {
            const auto g = decide_conversion(intent, st.machines[l], std::span<const bool>(has_wip.get(), np),
                                             view, urgency);
            res.guard_log.push_back({t, l, o, intent, g, g.overrides(intent)});
            cmds.push_back({l, g.convert, g.product});
          } else {
            cmds.push_back({l, intent.convert, intent.candidate});
          }
        }
        PolicyAction act;
        act.choices = std::move(fd.action.choices);
        record(a, std::move(obs), std::move(act), fd.log_prob, fd.value, t);
      }
    } else if (model.spec.global_agent) {
      std::vector<int> ops;
      for (int o = 0; o < O; ++o)
        if (model.agent_of_op[o] >= 0 && sim.has_available(o)) ops.push_back(o);
      if (!ops.empty()) {
        Vec obs = leader_observation(model.encoders, st, dv);
        auto rd = rule_select_act(obs, model.agents[0], model.spec.rules, c, sim, ops, opts.mode, rng);
        commands = std::move(rd.commands);
        record(0, std::move(obs), PolicyAction{{rd.choice}, {}}, rd.log_prob, rd.value, t);
      }
    } else {
      for (int o = 0; o < O; ++o) {
        const int a = model.agent_of_op[o];
        if (a < 0 || !sim.has_available(o)) continue;
        Vec obs = model.encoders[o].encode_state(st, dv);
        auto rd = rule_select_act(obs, model.agents[a], model.spec.rules, c, sim, {o}, opts.mode, rng);
        for (auto& [op, cmds] : rd.commands) commands[op] = std::move(cmds);
        record(a, std::move(obs), PolicyAction{{rd.choice}, {}}, rd.log_prob, rd.value, t);
      }
    }

    sim.apply_actions(commands);
    const auto out = sim.advance();
    if (out.rewards) {
      res.rewards.push_back(*out.rewards);
      res.team_reward += out.rewards->leader;
      const auto routed = route_rewards(model, *out.rewards);
      for (int a = 0; a < model.num_agents(); ++a) {
        res.agent_reward[a] += routed[a];
        if (opts.collect && !res.rollouts[a].empty()) res.rollouts[a].back().reward += routed[a];
      }
    }
  }

  if (opts.collect) {
    const FactoryState& st = sim.state();
    const bool terminal = episode.horizon_shifts >= c.horizon_shifts;
    const DemandView dv = demand_view(c, st, horizon);
    for (int a = 0; a < model.num_agents(); ++a) {
      auto& r = res.rollouts[a];
      if (r.empty()) continue;
      r.back().episode_end = true;
      r.back().terminal = terminal;
      if (!terminal) {
        int op = 0;
        for (int o = 0; o < O; ++o)
          if (model.agent_of_op[o] == a) op = o;
        r.back().bootstrap = model.agents[a].value(detail::agent_observation(model, a, op, st, dv, goals));
      }
    }
  }
  const FactoryState& st = sim.state();
  res.trace = st.trace;
  res.maintenance = st.maintenance;
  res.lots = st.lots;
  return res;
}

// ---- GAE -------------------------------------------------------------------

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// `next_value[t]` is used only where `ends[t]` holds (0 for a true terminal,
// the critic's estimate after a truncation).
inline Advantages compute_gae(std::span<const double> rewards, std::span<const double> values,
                              std::span<const bool> ends, std::span<const double> next_value, double gamma,
                              double lambda) {
  const std::size_t T = rewards.size();
  if (T == 0) throw std::invalid_argument("compute_gae on an empty buffer");
  if (values.size() != T || ends.size() != T || next_value.size() != T)
    throw std::invalid_argument("compute_gae buffer size mismatch");
  Advantages out;
  out.advantages.assign(T, 0.0);
  out.returns.assign(T, 0.0);
  double carry = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double nv = ends[i] ? next_value[i] : values[i + 1];
    if (ends[i]) carry = 0.0;
    const double delta = rewards[i] + gamma * nv - values[i];
    carry = delta + gamma * lambda * carry;
    out.advantages[i] = carry;
    out.returns[i] = carry + values[i];
  }
  return out;
}

inline Advantages compute_gae(std::span<const Transition> steps, double gamma, double lambda) {
  std::vector<double> r, v, nv;
  std::unique_ptr<bool[]> ends(new bool[steps.size()]);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    r.push_back(steps[i].reward);
    v.push_back(steps[i].value);
    nv.push_back(steps[i].terminal ? 0.0 : steps[i].bootstrap);
    ends[i] = steps[i].episode_end || i + 1 == steps.size();
  }
  return compute_gae(r, v, std::span<const bool>(ends.get(), steps.size()), nv, gamma, lambda);
}

inline void normalize_advantages(std::vector<double>& a) {
  if (a.empty()) return;
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : a) x = sd > 1e-12 ? (x - mean) / sd : x - mean;
}

// ---- PPO -------------------------------------------------------------------

struct TrainConfig {
  int batch_size = 256;
  double learning_rate = 1e-4;
  double discount = 0.99;
  double clip = 0.2;
  double gae_lambda = 0.95;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int epochs_per_update = 4;
  int rollout_episodes = 8;
  int training_shift_horizon = 4;
  int workers = 1;
  int selection_window = 100;

  void validate() const {
    if (batch_size <= 0 || learning_rate <= 0 || discount <= 0 || epochs_per_update <= 0 || rollout_episodes <= 0 ||
        training_shift_horizon <= 0 || workers <= 0 || selection_window <= 0 || entropy_coef < 0 || value_coef < 0)
      throw ConfigError("training parameters must be positive");
    if (!(clip > 0 && clip < 1)) throw ConfigError("clip must lie in (0, 1)");
    if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw ConfigError("gae_lambda must lie in [0, 1]");
  }
};

struct LossStats {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Clipped surrogate + value_coef * MSE(value, return) - entropy_coef * entropy,
// averaged over the batch. Gradients are accumulated into the optional
// parameter sets.
inline LossStats ppo_loss(const ActorCritic& pol, std::span<const Transition* const> batch,
                          std::span<const double> adv, std::span<const double> ret, const TrainConfig& cfg,
                          Parameters* actor_grads = nullptr, Parameters* critic_grads = nullptr) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) return {};
  Mat obs(pol.obs_dim(), B);
  for (int i = 0; i < B; ++i) obs.col(i) = batch[i]->obs;
  Mlp::Cache acache, ccache;
  const Mat logits = pol.actor().forward(obs, actor_grads ? &acache : nullptr);
  const Mat values = pol.critic().forward(obs, critic_grads ? &ccache : nullptr);
  Mat d_logits = Mat::Zero(logits.rows(), B);
  Mat d_values = Mat::Zero(1, B);
  LossStats s;
  const double inv = 1.0 / B;
  Vec glp, gh;
  for (int i = 0; i < B; ++i) {
    const Vec z = logits.col(i);
    const auto& a = batch[i]->action;
    double lp, h;
    if (pol.kind() == HeadKind::Categorical) {
      lp = categorical_log_prob(z, pol.groups(), pol.choices(), a.choices, &glp);
      h = categorical_entropy(z, pol.groups(), pol.choices(), a.choices, &gh);
    } else {
      lp = beta_log_prob(z, pol.groups(), a.values, &glp);
      h = beta_entropy(z, pol.groups(), &gh);
    }
    const double lr = lp - batch[i]->log_prob;
    const double ratio = std::exp(lr);
    const double A = adv[i];
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const bool clip_active = (A > 0 && ratio > 1.0 + cfg.clip) || (A < 0 && ratio < 1.0 - cfg.clip);
    s.policy -= std::min(ratio * A, clipped * A) * inv;
    s.entropy += h * inv;
    s.approx_kl += ((ratio - 1.0) - lr) * inv;
    s.clip_fraction += (std::abs(ratio - 1.0) > cfg.clip ? 1.0 : 0.0) * inv;
    Vec g = -cfg.entropy_coef * inv * gh;
    if (!clip_active) g -= A * ratio * inv * glp;
    d_logits.col(i) = g;
    const double err = values(0, i) - ret[i];
    s.value += err * err * inv;
    d_values(0, i) = 2.0 * cfg.value_coef * err * inv;
  }
  s.total = s.policy + cfg.value_coef * s.value - cfg.entropy_coef * s.entropy;
  if (actor_grads) pol.actor().backward(acache, d_logits, *actor_grads);
  if (critic_grads) pol.critic().backward(ccache, d_values, *critic_grads);
  return s;
}

struct UpdateStats {
  int agent = 0;
  std::vector<LossStats> epochs;  // mean over minibatches
  bool aborted = false;
  std::string message;
};

inline bool all_finite(const Parameters& p) {
  for (const auto& l : p)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

// Minibatch PPO on one agent's buffer with pre-computed, normalized
// advantages. On a non-finite loss or gradient the agent is restored to its
// state before the update and the update is reported as aborted.
inline UpdateStats ppo_update(ActorCritic& pol, const Rollout& buffer, const std::vector<double>& adv,
                              const std::vector<double>& ret, const TrainConfig& cfg, Rng& rng) {
  UpdateStats out;
  if (buffer.empty()) return out;
  const ActorCritic snapshot = pol;
  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < cfg.epochs_per_update; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    LossStats mean;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      std::vector<const Transition*> mb;
      std::vector<double> a, r;
      for (std::size_t i = b; i < end; ++i) {
        mb.push_back(&buffer[order[i]]);
        a.push_back(adv[order[i]]);
        r.push_back(ret[order[i]]);
      }
      Parameters ga = zeros_like(pol.actor().params()), gc = zeros_like(pol.critic().params());
      const auto s = ppo_loss(pol, mb, a, r, cfg, &ga, &gc);
      if (!std::isfinite(s.total) || !all_finite(ga) || !all_finite(gc)) {
        pol = snapshot;
        out.aborted = true;
        out.message = "non-finite loss or gradient; update aborted";
        return out;
      }
      pol.actor_optimizer().step(pol.actor().params(), ga, cfg.learning_rate);
      pol.critic_optimizer().step(pol.critic().params(), gc, cfg.learning_rate);
      mean.total += s.total;
      mean.policy += s.policy;
      mean.value += s.value;
      mean.entropy += s.entropy;
      mean.approx_kl += s.approx_kl;
      mean.clip_fraction += s.clip_fraction;
      ++batches;
    }
    for (double* f : {&mean.total, &mean.policy, &mean.value, &mean.entropy, &mean.approx_kl, &mean.clip_fraction})
      *f /= batches;
    out.epochs.push_back(mean);
  }
  return out;
}

// ---- rollouts and training ---------------------------------------------------

struct RolloutBatch {
  std::vector<Rollout> buffers;         // per agent, episodes in index order
  std::vector<EpisodeResult> episodes;  // with rollouts moved out
};

inline std::uint64_t training_episode_seed(std::uint64_t seed, int episode) {
  return derive_seed(seed, {0x7a1aULL, static_cast<std::uint64_t>(episode)});
}
inline std::uint64_t training_policy_seed(std::uint64_t seed, int episode) {
  return derive_seed(seed, {0x90b1ULL, static_cast<std::uint64_t>(episode)});
}

// Collects episodes [first, first + count) with fixed parameters. Workers
// own disjoint episode indices; buffers are merged in episode order, so the
// result does not depend on the worker count.
inline RolloutBatch collect_rollouts(const Model& model, const ScenarioConfig& c, DemandTier tier,
                                     const TrainConfig& cfg, int first, int count, std::uint64_t seed) {
  std::vector<EpisodeResult> eps(count);
  const int horizon = std::min(cfg.training_shift_horizon, c.horizon_shifts);
  auto work = [&](int w) {
    for (int i = w; i < count; i += cfg.workers) {
      const auto ep = sample_episode(c, tier, training_episode_seed(seed, first + i), horizon);
      EpisodeOptions o;
      o.mode = ActMode::Sample;
      o.collect = true;
      o.window_shifts = cfg.training_shift_horizon;
      o.policy_seed = training_policy_seed(seed, first + i);
      eps[i] = run_episode(model, c, ep, o);
    }
  };
  if (cfg.workers <= 1 || count <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(cfg.workers, count); ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  RolloutBatch out;
  out.buffers.assign(model.num_agents(), {});
  for (auto& e : eps) {
    for (int a = 0; a < model.num_agents(); ++a)
      for (auto& tr : e.rollouts[a]) out.buffers[a].push_back(std::move(tr));
    e.rollouts.clear();
  }
  out.episodes = std::move(eps);
  return out;
}

struct CurvePoint {
  int episode = 0;
  double team_reward = 0.0;
  std::vector<double> agent_reward;
};

struct TrainResult {
  Model final_model;
  Model best_model;
  double best_window_mean = 0.0;
  int best_window_end = -1;  // episode index closing the best window
  std::vector<CurvePoint> curve;
  std::vector<UpdateStats> updates;
};

using TrainProgress = std::function<void(int episodes_done, double window_mean)>;

// Alternates collection of `rollout_episodes` episodes and one PPO update per
// agent. The best model is the one whose episodes closed the highest
// moving-window mean team reward.
inline TrainResult train(const Model& initial, const ScenarioConfig& c, DemandTier tier, const TrainConfig& cfg,
                         int total_episodes, std::uint64_t seed, const TrainProgress& progress = {}) {
  cfg.validate();
  if (total_episodes < 0) throw ConfigError("episode count must be non-negative");
  TrainResult res;
  Model model = initial;
  for (auto& a : model.agents) a.reset_optimizers();
  res.best_model = model;
  bool have_best = false;
  const int window = std::min(cfg.selection_window, std::max(total_episodes, 1));
  double running = 0.0;
  int update = 0;
  for (int done = 0; done < total_episodes; ++update) {
    const int count = std::min(cfg.rollout_episodes, total_episodes - done);
    auto batch = collect_rollouts(model, c, tier, cfg, done, count, seed);
    for (int i = 0; i < count; ++i) {
      const auto& e = batch.episodes[i];
      res.curve.push_back({done + i, e.team_reward, e.agent_reward});
      running += e.team_reward;
      const int idx = done + i;
      if (idx >= window) running -= res.curve[idx - window].team_reward;
      if (idx + 1 >= window) {
        const double mean = running / window;
        if (!have_best || mean > res.best_window_mean) {
          have_best = true;
          res.best_window_mean = mean;
          res.best_window_end = idx;
          res.best_model = model;
        }
      }
    }
    Rng urng = make_rng(seed, {0x0bdaULL, static_cast<std::uint64_t>(update)});
    for (int a = 0; a < model.num_agents(); ++a) {
      const auto& buf = batch.buffers[a];
      if (buf.empty()) continue;
      auto g = compute_gae(buf, cfg.discount, cfg.gae_lambda);
      normalize_advantages(g.advantages);
      auto st = ppo_update(model.agents[a], buf, g.advantages, g.returns, cfg, urng);
      st.agent = a;
      res.updates.push_back(std::move(st));
    }
    done += count;
    if (progress) progress(done, have_best ? res.best_window_mean : 0.0);
  }
  res.final_model = std::move(model);
  if (!have_best) res.best_model = res.final_model;
  return res;
}

// ---- checkpoints -------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'L', 'F', 'S', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline Json layer_shapes(const Parameters& p) {
  Json j = Json::array();
  for (const auto& l : p) j.push_back({l.weight.rows(), l.weight.cols()});
  return j;
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("truncated checkpoint");
  return v;
}

}  // namespace detail

// Layout: magic, version (u32), scenario fingerprint (u64), metadata length
// (u64), metadata JSON, then every agent's actor and critic parameters as
// raw doubles (weights column-major, then biases, layer by layer).
inline void save_checkpoint(const Model& m, const std::string& path, const Json& extra = Json::object()) {
  Json meta;
  meta["variant"] = to_string(m.spec.variant);
  meta["hidden"] = m.shape.hidden;
  meta["hidden_layers"] = m.shape.hidden_layers;
  meta["count_cap"] = m.shape.encoder.count_cap;
  meta["leader"] = m.leader;
  meta["agent_of_op"] = m.agent_of_op;
  Json agents = Json::array();
  for (const auto& a : m.agents)
    agents.push_back({{"head", a.kind() == HeadKind::Beta ? "beta" : "categorical"},
                      {"groups", a.groups()},
                      {"choices", a.choices()},
                      {"actor", detail::layer_shapes(a.actor().params())},
                      {"critic", detail::layer_shapes(a.critic().params())}});
  meta["agents"] = agents;
  meta["extra"] = extra;
  const std::string text = meta.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod(os, kCheckpointVersion);
  detail::write_pod(os, m.fingerprint);
  detail::write_pod(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : m.agents)
    for (const Mlp* net : {&a.actor(), &a.critic()})
      for_each_scalar(net->params(), [&](const double& x) { detail::write_pod(os, x); });
  if (!os) throw std::runtime_error("failed writing checkpoint " + path);
}

struct LoadedCheckpoint {
  Model model;
  Json extra;
};

// Refuses to load when the scenario fingerprint or the layer shapes differ.
inline LoadedCheckpoint load_checkpoint(const std::string& path, const ScenarioConfig& c) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw ParseError("not a checkpoint: " + path);
  if (detail::read_pod<std::uint32_t>(is) != kCheckpointVersion) throw ParseError("unsupported checkpoint version");
  const auto fp = detail::read_pod<std::uint64_t>(is);
  if (fp != fingerprint(c)) throw ConfigError("checkpoint fingerprint does not match the scenario");
  const auto len = detail::read_pod<std::uint64_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw ParseError("truncated checkpoint metadata");
  const Json meta = Json::parse(text);
  ModelShape shape;
  shape.hidden = meta.at("hidden");
  shape.hidden_layers = meta.at("hidden_layers");
  shape.encoder.count_cap = meta.at("count_cap");
  LoadedCheckpoint out;
  out.model = build_variant(variant_spec(parse_variant(meta.at("variant"))), c, 0, shape);
  out.extra = meta.value("extra", Json::object());
  const auto& agents = meta.at("agents");
  if (agents.size() != out.model.agents.size()) throw ConfigError("checkpoint agent layout differs from the scenario");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    auto& a = out.model.agents[i];
    if (agents[i].at("actor") != detail::layer_shapes(a.actor().params()) ||
        agents[i].at("critic") != detail::layer_shapes(a.critic().params()))
      throw ConfigError("checkpoint layer shapes differ from the scenario");
    for (Mlp* net : {&a.actor(), &a.critic()})
      for_each_scalar(net->params(), [&](double& x) { x = detail::read_pod<double>(is); });
    a.reset_optimizers();
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes in checkpoint");
  return out;
}

// ---- inference ---------------------------------------------------------------

// Applies policies trained on short windows across the whole episode: the
// leader re-emits goals every shift and encoders/guard see only the active
// window of demand.
inline EpisodeResult infer_rolling(const Model& model, const ScenarioConfig& c, const EpisodeInstance& episode,
                                   int window_shifts = 4, ActMode mode = ActMode::Greedy,
                                   std::uint64_t policy_seed = 0) {
  if (model.fingerprint != fingerprint(c)) throw ConfigError("checkpoint fingerprint does not match the scenario");
  EpisodeOptions o;
  o.mode = mode;
  o.window_shifts = window_shifts >= episode.horizon_shifts ? 0 : window_shifts;
  o.policy_seed = policy_seed;
  return run_episode(model, c, episode, o);
}

}  // namespace lfsched
