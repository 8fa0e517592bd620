// Command-line front end. Exit codes: 0 success, 1 validation failure,
// 2 configuration error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lfsched/lfsched.hpp"

namespace fs = std::filesystem;
using namespace lfsched;

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kConfigError = 2;

struct Globals {
  std::uint64_t seed = 1;
  std::string scenario;
  std::string tier = "high";
  std::string out = ".";
  int workers = 1;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

ScenarioConfig require_scenario(const Globals& g) {
  if (g.scenario.empty()) throw ConfigError("--scenario is required");
  return load_scenario(g.scenario);
}

ActMode parse_mode(const std::string& s) {
  if (s == "greedy") return ActMode::Greedy;
  if (s == "sample") return ActMode::Sample;
  throw ConfigError("unknown mode '" + s + "' (expected greedy|sample)");
}

std::string curve_csv(const TrainResult& r, std::uint64_t seed, const std::string& variant, const std::string& tier) {
  std::ostringstream os;
  os << "# seed=" << seed << " variant=" << variant << " tier=" << tier << " best_window_end=" << r.best_window_end
     << "\n";
  os << "episode,team_reward";
  const std::size_t agents = r.curve.empty() ? 0 : r.curve.front().agent_reward.size();
  for (std::size_t a = 0; a < agents; ++a) os << ",agent" << a;
  os << '\n' << std::setprecision(17);
  for (const auto& p : r.curve) {
    os << p.episode << ',' << p.team_reward;
    for (double x : p.agent_reward) os << ',' << x;
    os << '\n';
  }
  return os.str();
}

std::string trace_text(const ScenarioConfig& c, const EpisodeInstance& ep, const EpisodeResult& r,
                       const std::map<std::string, std::string>& extra) {
  TraceBundle b;
  b.header = extra;
  b.header["fingerprint"] = std::to_string(fingerprint(c));
  b.header["tier"] = to_string(ep.tier);
  b.header["episode_seed"] = std::to_string(ep.seed);
  b.header["horizon_shifts"] = std::to_string(ep.horizon_shifts);
  b.events = r.trace;
  b.maintenance = r.maintenance;
  std::ostringstream os;
  write_trace(os, b);
  return os.str();
}

ExperimentConfig experiment_config(const Globals& g, int episodes, int train_episodes, const std::string& mode,
                                   int window, const std::vector<std::string>& tiers) {
  ExperimentConfig cfg;
  cfg.seed = g.seed;
  cfg.train_episodes = train_episodes;
  cfg.train.workers = g.workers;
  cfg.eval.episodes = episodes;
  cfg.eval.workers = g.workers;
  cfg.eval.mode = parse_mode(mode);
  cfg.eval.window_shifts = window;
  cfg.tiers.clear();
  for (const auto& t : tiers) cfg.tiers.push_back(parse_tier(t));
  if (cfg.tiers.empty()) cfg.tiers.push_back(parse_tier(g.tier));
  return cfg;
}

ModelProvider checkpoint_provider(const ScenarioConfig& c, const std::string& dir) {
  return [&c, dir](Variant v, DemandTier tier) {
    const fs::path p = fs::path(dir) / (to_string(v) + "_" + to_string(tier) + ".ckpt");
    if (!fs::exists(p)) throw ConfigError("missing checkpoint " + p.string());
    return load_checkpoint(p.string(), c).model;
  };
}

void write_experiment(const Globals& g, const ExperimentResult& r, const std::string& prefix) {
  const fs::path out(g.out);
  write_file(out / (prefix + "_table.json"), to_json(r.table).dump(1) + "\n");
  write_file(out / (prefix + "_metrics.csv"), metrics_csv(r.results, g.seed));
  write_file(out / (prefix + "_histogram.csv"), histogram_csv(r.table));
  std::cout << "variant,tier,metric,raw_mean,improvement_mean,improvement_std,wins,losses,sign_p\n";
  for (const auto& row : r.table.rows)
    std::cout << row.variant << ',' << row.tier << ',' << row.metric << ',' << row.raw_mean << ','
              << row.improvement_mean << ',' << row.improvement_std << ',' << row.wins << ',' << row.losses << ','
              << row.sign_p << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leader-follower multi-agent scheduler for factory-wide dynamic flexible job shops"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Root random seed")->capture_default_str();
  app.add_option("--scenario", g.scenario, "Scenario JSON file");
  app.add_option("--tier", g.tier, "Demand tier: low|medium|high")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "Synthesize a scenario, or sample an episode from --scenario");
  ScenarioShape shape;
  std::string gen_output;
  bool gen_episode = false;
  gen->add_option("--products", shape.products)->capture_default_str();
  gen->add_option("--operations", shape.operations)->capture_default_str();
  gen->add_option("--machines", shape.machines)->capture_default_str();
  gen->add_option("--out-degree", shape.out_degree)->capture_default_str();
  gen->add_option("--shifts", shape.horizon_shifts)->capture_default_str();
  gen->add_option("--shift-length", shape.shift_length)->capture_default_str();
  gen->add_option("--utilization", shape.low_tier_utilization, "Low-tier target utilization")->capture_default_str();
  gen->add_flag("--episode", gen_episode, "Sample an episode instance from --scenario instead");
  gen->add_option("-o,--output", gen_output, "Output file")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train one variant");
  std::string variant = "LFORM-RC", checkpoint;
  int episodes = 2000;
  tr->add_option("--variant", variant)->capture_default_str();
  tr->add_option("--episodes", episodes)->capture_default_str();
  tr->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/<variant>_<tier>.ckpt)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint with rolling-horizon inference");
  int eval_episodes = 30, window = 4;
  std::string mode = "sample";
  bool write_traces = false;
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--episodes", eval_episodes)->capture_default_str();
  ev->add_option("--window", window)->capture_default_str();
  ev->add_option("--mode", mode, "greedy|sample")->capture_default_str();
  ev->add_flag("--traces", write_traces, "Write one trace file per episode");

  // benchmark / ablate
  std::vector<std::string> variants, tiers;
  std::string baseline = "SRM", ckpt_dir;
  int train_episodes = 2000;
  auto add_experiment_opts = [&](CLI::App* sc) {
    sc->add_option("--episodes", eval_episodes)->capture_default_str();
    sc->add_option("--train-episodes", train_episodes, "Training budget per variant")->capture_default_str();
    sc->add_option("--checkpoint-dir", ckpt_dir, "Load <variant>_<tier>.ckpt files instead of training");
    sc->add_option("--tiers", tiers, "Demand tiers (default: --tier)");
    sc->add_option("--window", window)->capture_default_str();
    sc->add_option("--mode", mode, "greedy|sample")->capture_default_str();
  };
  auto* bench = app.add_subcommand("benchmark", "Paired comparison of variants against a baseline");
  add_experiment_opts(bench);
  bench->add_option("--variants", variants, "Variants (default: all)");
  bench->add_option("--baseline", baseline)->capture_default_str();
  auto* abl = app.add_subcommand("ablate", "Ablation over SRM, ORM, LFSRM, LFORM, LFORM-RC with SRM as baseline");
  add_experiment_opts(abl);

  // validate
  auto* val = app.add_subcommand("validate", "Validate a scenario, or a trace against its episode");
  std::string episode_path, trace_path;
  val->add_option("--episode", episode_path, "Episode JSON (default: regenerate from the trace header)");
  val->add_option("--trace", trace_path, "Trace file");

  // replay
  auto* rep = app.add_subcommand("replay", "Re-run an episode from a trace header and compare");
  rep->add_option("--trace", trace_path)->required();
  rep->add_option("--checkpoint", checkpoint, "Re-run this policy and require an identical trace");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) {
      if (gen_episode) {
        const auto c = require_scenario(g);
        const auto ep = sample_episode(c, parse_tier(g.tier), g.seed);
        write_file(gen_output, to_json(ep).dump(1) + "\n");
      } else {
        const auto c = generate_scenario(shape, g.seed);
        write_file(gen_output, to_json(c).dump(1) + "\n");
        std::cout << c.name << ": " << c.num_products() << " products, " << c.num_operations << " operations, "
                  << c.num_machines() << " machines, mean out-degree " << c.mean_out_degree() << "\n";
      }
      return kOk;
    }
    if (*tr) {
      const auto c = require_scenario(g);
      const auto tier = parse_tier(g.tier);
      const Variant v = parse_variant(variant);
      TrainConfig tc;
      tc.workers = g.workers;
      const Model init = build_variant(variant_spec(v), c, g.seed);
      const auto res = train(init, c, tier, tc, episodes, g.seed, [](int done, double best) {
        if (done % 200 == 0) std::cerr << "episodes " << done << " best window mean " << best << "\n";
      });
      const std::string stem = to_string(v) + "_" + to_string(tier);
      const fs::path ck = checkpoint.empty() ? fs::path(g.out) / (stem + ".ckpt") : fs::path(checkpoint);
      if (ck.has_parent_path()) fs::create_directories(ck.parent_path());
      save_checkpoint(res.best_model, ck.string(),
                      {{"seed", g.seed}, {"tier", to_string(tier)}, {"episodes", episodes},
                       {"best_window_end", res.best_window_end}});
      write_file(fs::path(g.out) / ("curve_" + stem + ".csv"), curve_csv(res, g.seed, to_string(v), to_string(tier)));
      std::cout << "checkpoint " << ck.string() << " best window mean " << res.best_window_mean << "\n";
      return kOk;
    }
    if (*ev) {
      const auto c = require_scenario(g);
      const auto tier = parse_tier(g.tier);
      const auto loaded = load_checkpoint(checkpoint, c);
      EvalConfig ec;
      ec.episodes = eval_episodes;
      ec.window_shifts = window;
      ec.mode = parse_mode(mode);
      ec.workers = g.workers;
      VariantResults vr;
      const std::string name = to_string(loaded.model.spec.variant);
      auto& recs = vr[name][to_string(tier)] = evaluate_model(loaded.model, c, tier, g.seed, ec);
      write_file(fs::path(g.out) / "metrics.csv", metrics_csv(vr, g.seed));
      if (write_traces)
        for (std::size_t i = 0; i < recs.size(); ++i) {
          const auto ep = sample_episode(c, tier, recs[i].episode_seed);
          const std::map<std::string, std::string> extra{
              {"seed", std::to_string(g.seed)},
              {"variant", name},
              {"mode", mode},
              {"window", std::to_string(window)},
              {"policy_seed", std::to_string(derive_seed(recs[i].episode_seed, {0x5e1ULL}))}};
          write_file(fs::path(g.out) / "traces" / ("episode_" + std::to_string(i) + ".trace"),
                     trace_text(c, ep, recs[i].result, extra));
        }
      double cr = 0.0;
      for (const auto& r : recs) cr += r.metrics.completion_rate;
      std::cout << name << " mean completion rate " << (recs.empty() ? 0.0 : cr / recs.size()) << " over "
                << recs.size() << " episodes\n";
      return kOk;
    }
    if (*bench || *abl) {
      const auto c = require_scenario(g);
      auto cfg = experiment_config(g, eval_episodes, train_episodes, mode, window, tiers);
      const ModelProvider provider = ckpt_dir.empty() ? training_provider(c, cfg) : checkpoint_provider(c, ckpt_dir);
      if (*abl) {
        write_experiment(g, run_ablation(c, cfg, provider), "ablation");
      } else {
        cfg.baseline = parse_variant(baseline);
        if (variants.empty()) cfg.variants.assign(std::begin(kAllVariants), std::end(kAllVariants));
        for (const auto& v : variants) cfg.variants.push_back(parse_variant(v));
        write_experiment(g, run_benchmark(c, cfg, provider), "benchmark");
      }
      return kOk;
    }
    if (*val) {
      const auto c = require_scenario(g);
      if (trace_path.empty()) {
        std::cout << "scenario ok: " << c.name << "\n";
        return kOk;
      }
      std::istringstream is(read_file(trace_path));
      const auto bundle = read_trace(is);
      EpisodeInstance ep;
      if (!episode_path.empty()) {
        ep = episode_from_json(Json::parse(read_file(episode_path)));
      } else {
        if (!bundle.header.count("episode_seed") || !bundle.header.count("tier"))
          throw ConfigError("trace header lacks episode_seed/tier; pass --episode");
        ep = sample_episode(c, parse_tier(bundle.header.at("tier")), std::stoull(bundle.header.at("episode_seed")),
                            bundle.header.count("horizon_shifts") ? std::stoi(bundle.header.at("horizon_shifts")) : 0);
      }
      const auto report = validate_trace(c, ep, bundle.events, bundle.maintenance);
      std::cout << report.summary() << "\n";
      return report.ok() ? kOk : kValidationFailure;
    }
    if (*rep) {
      const auto c = require_scenario(g);
      const std::string original = read_file(trace_path);
      std::istringstream is(original);
      const auto bundle = read_trace(is);
      auto need = [&](const std::string& k) {
        if (!bundle.header.count(k)) throw ConfigError("trace header lacks '" + k + "'");
        return bundle.header.at(k);
      };
      if (std::stoull(need("fingerprint")) != fingerprint(c)) throw ConfigError("trace was produced on another scenario");
      const auto ep = sample_episode(c, parse_tier(need("tier")), std::stoull(need("episode_seed")),
                                     std::stoi(need("horizon_shifts")));
      const auto report = validate_trace(c, ep, bundle.events, bundle.maintenance);
      if (!report.ok()) {
        std::cout << report.summary() << "\n";
        return kValidationFailure;
      }
      const auto m = compute_metrics(c, ep, bundle.events, bundle.maintenance);
      std::cout << "tardiness " << m.tardiness << " conversions " << m.n_conversions << " idle " << m.cumulative_idle
                << " completion_rate " << m.completion_rate << "\n";
      if (checkpoint.empty()) return kOk;
      const auto loaded = load_checkpoint(checkpoint, c);
      const auto r = infer_rolling(loaded.model, c, ep, std::stoi(need("window")), parse_mode(need("mode")),
                                   std::stoull(need("policy_seed")));
      std::map<std::string, std::string> extra = bundle.header;
      for (const char* k : {"fingerprint", "tier", "episode_seed", "horizon_shifts"}) extra.erase(k);
      const bool same = trace_text(c, ep, r, extra) == original;
      std::cout << (same ? "replay identical" : "replay differs") << "\n";
      return same ? kOk : kValidationFailure;
    }
  } catch (const ValidationFailure& e) {
    std::cerr << "validation failure: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const TraceError& e) {
    std::cerr << "validation failure: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParseError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Json::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
