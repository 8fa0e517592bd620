#pragma once

// Episode metrics, paired benchmark and ablation runs, comparison tables.

#include <boost/math/distributions/binomial.hpp>
#include <iomanip>
#include <sstream>

#include "lfsched/learner.hpp"

namespace lfsched {

class ValidationFailure : public std::runtime_error {
 public:
  explicit ValidationFailure(const ValidationReport& r)
      : std::runtime_error("trace failed validation: " + r.summary()), report(r) {}
  ValidationReport report;
};

struct MetricsReport {
  double tardiness = 0.0;        // sum of max(0, C - D) in ticks; unfinished lots use C = NS
  double n_conversions = 0.0;    // setup changes
  double cumulative_idle = 0.0;  // machine-ticks with Q = 0
  double completion_rate = 1.0;  // 1 - delayed / lots due within the horizon
  int delayed = 0;
  int total_lots = 0;
};

inline constexpr const char* kMetricNames[] = {"tardiness", "n_conversions", "cumulative_idle", "completion_rate"};

inline double metric(const MetricsReport& m, int i) {
  switch (i) {
    case 0: return m.tardiness;
    case 1: return m.n_conversions;
    case 2: return m.cumulative_idle;
    default: return m.completion_rate;
  }
}

// Validates the trace first and throws ValidationFailure when it does not
// satisfy every constraint family.
inline MetricsReport compute_metrics(const ScenarioConfig& c, const EpisodeInstance& e,
                                     std::span<const AssignmentEvent> trace,
                                     std::span<const MaintenanceInterval> maintenance) {
  const auto report = validate_trace(c, e, trace, maintenance);
  if (!report.ok()) throw ValidationFailure(report);
  const Tick horizon = static_cast<Tick>(e.horizon_shifts) * c.shift_length;
  const auto lots = lots_from_trace(c, e, trace);
  MetricsReport m;
  m.delayed = objective_value(c, e, lots);
  m.total_lots = lots_due_within(c, e, lots);
  m.completion_rate = m.total_lots == 0 ? 1.0 : 1.0 - static_cast<double>(m.delayed) / m.total_lots;
  for (const auto& lot : lots) {
    if (lot.due > horizon) continue;
    const Tick done = lot.final_completion().value_or(horizon);
    m.tardiness += static_cast<double>(std::max<Tick>(0, done - lot.due));
  }
  std::vector<std::optional<Setup>> setup(c.num_machines());
  std::vector<std::vector<char>> busy(c.num_machines(), std::vector<char>(horizon, 0));
  auto mark = [&](int l, Tick a, Tick b) {
    for (Tick t = std::max<Tick>(a, 0); t < std::min(b, horizon); ++t) busy[l][t] = 1;
  };
  for (int l = 0; l < c.num_machines(); ++l) {
    setup[l] = e.initial_machines[l].setup;
    mark(l, 0, e.initial_machines[l].busy_until);
  }
  for (const auto& ev : trace) {
    const Setup s{ev.product, c.products[ev.product].route[ev.stage]};
    if (setup[ev.machine] != s) ++m.n_conversions;
    setup[ev.machine] = s;
    mark(ev.machine, ev.start, ev.completion());
  }
  for (const auto& w : maintenance) mark(w.machine, w.start, w.end);
  for (const auto& b : busy) m.cumulative_idle += static_cast<double>(std::count(b.begin(), b.end(), 0));
  return m;
}

inline MetricsReport compute_metrics(const ScenarioConfig& c, const EpisodeInstance& e, const EpisodeResult& r) {
  return compute_metrics(c, e, r.trace, r.maintenance);
}

// Improvement of `v` over `base`, in percent, positive when better. Lower is
// better for the first three metrics; the floors avoid division by zero.
inline double improvement(int metric_index, double v, double base) {
  if (metric_index == 3) return (v - base) / std::max(base, 0.01) * 100.0;
  return (base - v) / std::max(base, 1.0) * 100.0;
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
inline double sign_test(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0 || wins == 0) return 1.0;
  boost::math::binomial_distribution<double> b(n, 0.5);
  return boost::math::cdf(boost::math::complement(b, wins - 1));
}

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double v = 0.0;
  for (double x : xs) v += (x - s.mean) * (x - s.mean);
  s.stddev = xs.size() > 1 ? std::sqrt(v / (xs.size() - 1)) : 0.0;
  return s;
}

struct ComparisonRow {
  std::string variant;
  std::string tier;
  std::string metric;
  double raw_mean = 0.0;            // mean metric value of the variant
  double improvement_mean = 0.0;    // mean paired improvement over the baseline, percent
  double improvement_std = 0.0;
  int wins = 0;                     // episodes strictly better than the baseline
  int losses = 0;
  double sign_p = 1.0;
  friend bool operator==(const ComparisonRow&, const ComparisonRow&) = default;
};

struct ComparisonTable {
  std::string baseline;
  std::uint64_t seed = 0;
  int episodes = 0;
  std::vector<double> histogram_edges;
  std::map<std::string, std::vector<int>> histograms;  // "variant/tier" -> completion-rate counts
  std::vector<ComparisonRow> rows;
  friend bool operator==(const ComparisonTable&, const ComparisonTable&) = default;

  const ComparisonRow& row(const std::string& variant, const std::string& tier, const std::string& metric) const {
    for (const auto& r : rows)
      if (r.variant == variant && r.tier == tier && r.metric == metric) return r;
    throw std::out_of_range("no row " + variant + "/" + tier + "/" + metric);
  }
};

inline Json to_json(const ComparisonTable& t) {
  Json j;
  j["convention"] = "improvement in percent, positive = better than baseline";
  j["baseline"] = t.baseline;
  j["seed"] = t.seed;
  j["episodes"] = t.episodes;
  j["histogram_edges"] = t.histogram_edges;
  j["histograms"] = t.histograms;
  Json rows = Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"variant", r.variant},
                    {"tier", r.tier},
                    {"metric", r.metric},
                    {"raw_mean", r.raw_mean},
                    {"improvement_mean", r.improvement_mean},
                    {"improvement_std", r.improvement_std},
                    {"wins", r.wins},
                    {"losses", r.losses},
                    {"sign_p", r.sign_p}});
  j["rows"] = rows;
  return j;
}

inline ComparisonTable comparison_from_json(const Json& j) {
  ComparisonTable t;
  t.baseline = j.at("baseline");
  t.seed = j.at("seed");
  t.episodes = j.at("episodes");
  t.histogram_edges = j.at("histogram_edges").get<std::vector<double>>();
  t.histograms = j.at("histograms").get<std::map<std::string, std::vector<int>>>();
  for (const auto& r : j.at("rows"))
    t.rows.push_back({r.at("variant"), r.at("tier"), r.at("metric"), r.at("raw_mean"), r.at("improvement_mean"),
                      r.at("improvement_std"), r.at("wins"), r.at("losses"), r.at("sign_p")});
  return t;
}

// ---- paired evaluation -------------------------------------------------------

inline std::uint64_t evaluation_episode_seed(std::uint64_t seed, DemandTier tier, int episode) {
  return derive_seed(seed, {0xe7a1ULL, static_cast<std::uint64_t>(tier), static_cast<std::uint64_t>(episode)});
}

struct EvalConfig {
  int episodes = 30;
  int window_shifts = 4;
  ActMode mode = ActMode::Sample;
  int workers = 1;
};

struct EpisodeRecord {
  std::uint64_t episode_seed = 0;
  MetricsReport metrics;
  EpisodeResult result;
};

// Every variant evaluated with the same seed sees byte-identical episode
// instances (demand, initial state, breakdown stream) per episode index.
inline std::vector<EpisodeRecord> evaluate_model(const Model& m, const ScenarioConfig& c, DemandTier tier,
                                                 std::uint64_t seed, const EvalConfig& cfg) {
  std::vector<EpisodeRecord> out(cfg.episodes);
  auto work = [&](int w) {
    for (int i = w; i < cfg.episodes; i += cfg.workers) {
      auto& rec = out[i];
      rec.episode_seed = evaluation_episode_seed(seed, tier, i);
      const auto ep = sample_episode(c, tier, rec.episode_seed);
      rec.result = infer_rolling(m, c, ep, cfg.window_shifts, cfg.mode, derive_seed(rec.episode_seed, {0x5e1ULL}));
      rec.metrics = compute_metrics(c, ep, rec.result);
    }
  };
  if (cfg.workers <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(cfg.workers, cfg.episodes); ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  return out;
}

inline std::vector<double> histogram_edges() {
  std::vector<double> e;
  for (int i = 0; i <= 10; ++i) e.push_back(i / 10.0);
  return e;
}

inline std::vector<int> completion_histogram(std::span<const EpisodeRecord> recs) {
  std::vector<int> h(10, 0);
  for (const auto& r : recs) h[std::min(9, static_cast<int>(r.metrics.completion_rate * 10.0))]++;
  return h;
}

using VariantResults = std::map<std::string, std::map<std::string, std::vector<EpisodeRecord>>>;  // variant -> tier

// Paired comparison of every variant against `baseline` per tier.
inline ComparisonTable compare(const VariantResults& results, const std::string& baseline, std::uint64_t seed) {
  ComparisonTable t;
  t.baseline = baseline;
  t.seed = seed;
  t.histogram_edges = histogram_edges();
  const auto& base = results.at(baseline);
  for (const auto& [variant, tiers] : results)
    for (const auto& [tier, recs] : tiers) {
      const auto& brecs = base.at(tier);
      if (brecs.size() != recs.size()) throw ConfigError("unpaired evaluation: episode counts differ");
      t.episodes = static_cast<int>(recs.size());
      t.histograms[variant + "/" + tier] = completion_histogram(recs);
      for (int mi = 0; mi < 4; ++mi) {
        ComparisonRow r;
        r.variant = variant;
        r.tier = tier;
        r.metric = kMetricNames[mi];
        std::vector<double> imp, raw;
        for (std::size_t i = 0; i < recs.size(); ++i) {
          if (recs[i].episode_seed != brecs[i].episode_seed) throw ConfigError("unpaired evaluation: seeds differ");
          const double v = metric(recs[i].metrics, mi), b = metric(brecs[i].metrics, mi);
          raw.push_back(v);
          imp.push_back(improvement(mi, v, b));
          const double better = mi == 3 ? v - b : b - v;
          if (better > 0) ++r.wins;
          else if (better < 0) ++r.losses;
        }
        const auto si = summarize(imp);
        r.raw_mean = summarize(raw).mean;
        r.improvement_mean = si.mean;
        r.improvement_std = si.stddev;
        r.sign_p = sign_test(r.wins, r.losses);
        t.rows.push_back(r);
      }
    }
  return t;
}

inline std::string metrics_csv(const VariantResults& results, std::uint64_t seed) {
  std::ostringstream os;
  os << "# seed=" << seed << "\n";
  os << "variant,tier,episode,episode_seed,tardiness,n_conversions,cumulative_idle,completion_rate,delayed,total_lots\n";
  os << std::setprecision(17);
  for (const auto& [variant, tiers] : results)
    for (const auto& [tier, recs] : tiers)
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& m = recs[i].metrics;
        os << variant << ',' << tier << ',' << i << ',' << recs[i].episode_seed << ',' << m.tardiness << ','
           << m.n_conversions << ',' << m.cumulative_idle << ',' << m.completion_rate << ',' << m.delayed << ','
           << m.total_lots << '\n';
      }
  return os.str();
}

inline std::string histogram_csv(const ComparisonTable& t) {
  std::ostringstream os;
  os << "# seed=" << t.seed << "\n# edges=";
  for (std::size_t i = 0; i < t.histogram_edges.size(); ++i) os << (i ? ";" : "") << t.histogram_edges[i];
  os << "\nvariant_tier";
  for (std::size_t b = 0; b + 1 < t.histogram_edges.size(); ++b) os << ",bin" << b;
  os << '\n';
  for (const auto& [k, h] : t.histograms) {
    os << k;
    for (int x : h) os << ',' << x;
    os << '\n';
  }
  return os.str();
}

// ---- experiment orchestration --------------------------------------------------

struct ExperimentConfig {
  std::vector<Variant> variants;
  std::vector<DemandTier> tiers{DemandTier::High};
  Variant baseline = Variant::SRM;
  int train_episodes = 2000;
  TrainConfig train;
  EvalConfig eval;
  ModelShape shape;
  std::uint64_t seed = 1;
};

// Supplies a trained model per (variant, tier); the default trains one with
// the experiment's budget so every variant gets the same budget.
using ModelProvider = std::function<Model(Variant, DemandTier)>;

struct ExperimentResult {
  VariantResults results;
  ComparisonTable table;
};

inline ModelProvider training_provider(const ScenarioConfig& c, const ExperimentConfig& cfg) {
  return [&c, cfg](Variant v, DemandTier tier) {
    const auto seed = derive_seed(cfg.seed, {0x7e41ULL, static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(tier)});
    const Model init = build_variant(variant_spec(v), c, seed, cfg.shape);
    return train(init, c, tier, cfg.train, cfg.train_episodes, seed).best_model;
  };
}

inline ExperimentResult run_benchmark(const ScenarioConfig& c, const ExperimentConfig& cfg,
                                      const ModelProvider& provider) {
  if (cfg.variants.empty() || cfg.tiers.empty()) throw ConfigError("benchmark needs at least one variant and tier");
  ExperimentResult out;
  std::vector<Variant> vs = cfg.variants;
  if (std::find(vs.begin(), vs.end(), cfg.baseline) == vs.end()) vs.insert(vs.begin(), cfg.baseline);
  for (Variant v : vs)
    for (DemandTier tier : cfg.tiers) {
      const Model m = provider(v, tier);
      out.results[to_string(v)][to_string(tier)] = evaluate_model(m, c, tier, cfg.seed, cfg.eval);
    }
  out.table = compare(out.results, to_string(cfg.baseline), cfg.seed);
  return out;
}

inline ExperimentResult run_ablation(const ScenarioConfig& c, ExperimentConfig cfg, const ModelProvider& provider) {
  cfg.variants = {Variant::SRM, Variant::ORM, Variant::LFSRM, Variant::LFORM, Variant::LFORM_RC};
  cfg.baseline = Variant::SRM;
  return run_benchmark(c, cfg, provider);
}

}  // namespace lfsched
