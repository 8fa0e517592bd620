#include <gtest/gtest.h>

#include <cstdio>

#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace lfsched;
using namespace lfsched::testing;

using oracle::library_gae;
using oracle::random_seq;

TEST(Gae, MatchesBruteForce) { EXPECT_LT(oracle::gae_max_error(11, 1000, 10), 1e-10); }

TEST(Gae, LambdaZeroIsTdErrorAndLambdaOneIsMonteCarlo) {
  Rng rng = make_rng(12, {});
  const auto s = random_seq(rng, 12);
  const double g = 0.97;
  const auto td = library_gae(s, g, 0.0);
  const auto mc = library_gae(s, g, 1.0);
  for (std::size_t t = 0; t < 12; ++t) {
    const double next = s.ends[t] ? s.nv[t] : s.v[t + 1];
    EXPECT_NEAR(td.advantages[t], s.r[t] + g * next - s.v[t], 1e-12);
    double ret = 0.0, w = 1.0;
    for (std::size_t u = t;; ++u) {
      ret += w * s.r[u];
      w *= g;
      if (s.ends[u]) {
        ret += w * s.nv[u];
        break;
      }
    }
    EXPECT_NEAR(mc.returns[t], ret, 1e-10);
  }
}

TEST(Gae, TransitionOverloadBootstrapsOnlyOnTruncation) {
  std::vector<Transition> steps(3);
  for (auto& s : steps) s.reward = 1.0;
  steps[2].episode_end = true;
  steps[2].bootstrap = 5.0;
  steps[2].terminal = true;
  EXPECT_NEAR(compute_gae(steps, 0.5, 1.0).returns[0], 1.75, 1e-12);
  steps[2].terminal = false;
  EXPECT_NEAR(compute_gae(steps, 0.5, 1.0).returns[0], 1.75 + 0.125 * 5.0, 1e-12);
  EXPECT_THROW(compute_gae(std::span<const Transition>{}, 0.9, 0.9), std::invalid_argument);
}

TEST(Gae, NormalizationGivesZeroMeanUnitStd) {
  std::vector<double> a{1, 2, 3, 4, 10};
  normalize_advantages(a);
  double m = 0, v = 0;
  for (double x : a) m += x;
  m /= 5;
  for (double x : a) v += (x - m) * (x - m);
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(v / 5, 1.0, 1e-12);
  std::vector<double> flat{2, 2, 2};
  normalize_advantages(flat);
  for (double x : flat) EXPECT_EQ(x, 0.0);
}

TEST(PpoLoss, GradientsMatchFiniteDifferences) { EXPECT_LT(oracle::ppo_fd_worst(13), 1e-4); }

TEST(PpoLoss, ClippedSamplesCarryNoPolicyGradient) {
  Rng rng = make_rng(15, {});
  ActorCritic pol(3, HeadKind::Categorical, 1, 3, rng, 8, 1);
  Transition t;
  t.obs = Vec::Ones(3);
  t.action.choices = {1};
  const Vec logits = pol.actor().forward(t.obs);
  t.log_prob = pol.log_prob(logits, t.action) - 1.0;  // ratio e > 1.2
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  const Transition* p[1] = {&t};
  const double adv[1] = {1.0}, ret[1] = {0.0};
  Parameters ga = zeros_like(pol.actor().params());
  const auto s = ppo_loss(pol, p, adv, ret, cfg, &ga, nullptr);
  EXPECT_NEAR(s.policy, -1.2, 1e-12);
  EXPECT_EQ(s.clip_fraction, 1.0);
  for (const auto& l : ga) {
    EXPECT_EQ(l.weight.norm(), 0.0);
    EXPECT_EQ(l.bias.norm(), 0.0);
  }
}

TEST(PpoUpdate, ZeroAdvantageAndNoEntropyLeavesActorUnchanged) {
  Rng rng = make_rng(16, {});
  ActorCritic pol(4, HeadKind::Categorical, 2, 3, rng, 8, 2);
  const auto batch = oracle::toy_batch(pol, rng, 30);
  const auto before = pol.actor().params();
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  std::vector<double> adv(30, 0.0), ret(30, 1.0);
  Rng urng = make_rng(1, {});
  const auto st = ppo_update(pol, batch, adv, ret, cfg, urng);
  EXPECT_FALSE(st.aborted);
  ASSERT_EQ(st.epochs.size(), 4u);
  for (std::size_t k = 0; k < before.size(); ++k) EXPECT_EQ(before[k].weight, pol.actor().params()[k].weight);
  EXPECT_LT(st.epochs.back().value, st.epochs.front().value);  // critic still fits the returns
}

TEST(PpoUpdate, NonFiniteLossRestoresParameters) {
  Rng rng = make_rng(17, {});
  ActorCritic pol(4, HeadKind::Categorical, 2, 3, rng, 8, 2);
  auto batch = oracle::toy_batch(pol, rng, 10);
  const auto before = pol.critic().params();
  std::vector<double> adv(10, 1.0), ret(10, std::numeric_limits<double>::quiet_NaN());
  Rng urng = make_rng(1, {});
  const auto st = ppo_update(pol, batch, adv, ret, TrainConfig{}, urng);
  EXPECT_TRUE(st.aborted);
  for (std::size_t k = 0; k < before.size(); ++k) EXPECT_EQ(before[k].weight, pol.critic().params()[k].weight);
}

TEST(TrainConfig, RejectsBadParameters) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.clip = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

class TrainingOnTiny : public ::testing::Test {
 protected:
  ScenarioConfig c = load_scenario(scenario_path("tiny.json"));
  ModelShape small() const {
    ModelShape s;
    s.hidden = 16;
    return s;
  }
};

TEST_F(TrainingOnTiny, ZeroEpisodesReturnsInitialModel) {
  const auto m = build_variant(variant_spec(Variant::LFORM_RC), c, 1, small());
  const auto r = train(m, c, DemandTier::High, TrainConfig{}, 0, 1);
  EXPECT_TRUE(r.curve.empty());
  for (int a = 0; a < m.num_agents(); ++a)
    EXPECT_EQ(r.final_model.agents[a].actor().params()[0].weight, m.agents[a].actor().params()[0].weight);
  EXPECT_THROW(train(m, c, DemandTier::High, TrainConfig{}, -1, 1), ConfigError);
}

TEST_F(TrainingOnTiny, LeaderActsOncePerShift) {
  const auto m = build_variant(variant_spec(Variant::LFORM_RC), c, 1, small());
  TrainConfig cfg;
  const auto b = collect_rollouts(m, c, DemandTier::High, cfg, 0, 3, 5);
  EXPECT_EQ(b.buffers[m.leader].size(), static_cast<std::size_t>(3 * c.horizon_shifts));
  int ends = 0;
  for (const auto& t : b.buffers[m.leader]) {
    EXPECT_EQ(t.tick % c.shift_length, 0);
    ends += t.episode_end;
  }
  EXPECT_EQ(ends, 3);
}

TEST_F(TrainingOnTiny, DeterministicAndWorkerIndependent) {
  const auto m = build_variant(variant_spec(Variant::LFORM_RC), c, 3, small());
  TrainConfig a, b;
  b.workers = 3;
  const auto ra = train(m, c, DemandTier::Medium, a, 24, 9);
  const auto rb = train(m, c, DemandTier::Medium, b, 24, 9);
  ASSERT_EQ(ra.curve.size(), 24u);
  for (std::size_t i = 0; i < ra.curve.size(); ++i) EXPECT_EQ(ra.curve[i].team_reward, rb.curve[i].team_reward);
  for (int k = 0; k < m.num_agents(); ++k)
    EXPECT_EQ(ra.final_model.agents[k].actor().params()[0].weight, rb.final_model.agents[k].actor().params()[0].weight);
}

TEST_F(TrainingOnTiny, CheckpointRoundTripAndFingerprintRefusal) {
  const auto m = build_variant(variant_spec(Variant::LFSRM), c, 4, small());
  const std::string path = ::testing::TempDir() + "tiny.ckpt";
  save_checkpoint(m, path, {{"note", "x"}});
  const auto back = load_checkpoint(path, c);
  EXPECT_EQ(back.extra.at("note"), "x");
  ASSERT_EQ(back.model.num_agents(), m.num_agents());
  for (int a = 0; a < m.num_agents(); ++a) {
    EXPECT_EQ(back.model.agents[a].actor().params().back().weight, m.agents[a].actor().params().back().weight);
    EXPECT_EQ(back.model.agents[a].critic().params()[0].bias, m.agents[a].critic().params()[0].bias);
  }
  const auto e = sample_episode(c, DemandTier::High, 3);
  EXPECT_EQ(infer_rolling(m, c, e, 4, ActMode::Sample, 7).trace, infer_rolling(back.model, c, e, 4, ActMode::Sample, 7).trace);

  auto other = c;
  other.conversion_threshold += 1;
  EXPECT_THROW(load_checkpoint(path, other), ConfigError);
  EXPECT_THROW(infer_rolling(m, other, e), ConfigError);
  std::ofstream(path, std::ios::binary) << "garbage";
  EXPECT_THROW(load_checkpoint(path, c), ParseError);
  std::remove(path.c_str());
}
