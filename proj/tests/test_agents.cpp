#include <gtest/gtest.h>

#include "test_helpers.hpp"

using namespace lfsched;
using namespace lfsched::testing;

TEST(DemandView, CountsByDueShift) {
  const auto c = two_stage();
  auto e = empty_episode(c);
  e.demand = {{0, 0, 1, 12, 0}, {0, 1, 1, 24, 0}, {1, 0, 1, 36, 0}, {1, 1, 1, 24, 0}};
  Simulator sim(c);
  sim.reset(e);
  auto d = demand_view(c, sim.state(), 48);
  EXPECT_EQ(d.due_now, (std::vector<int>{1, 0}));
  EXPECT_EQ(d.due_next, (std::vector<int>{1, 1}));
  EXPECT_EQ(d.past_due, (std::vector<int>{0, 0}));
  d = demand_view(c, sim.state(), 12);  // window hides the next shift
  EXPECT_EQ(d.due_next, (std::vector<int>{0, 0}));
  while (sim.state().tick < 12) sim.advance();
  d = demand_view(c, sim.state(), 48);
  EXPECT_EQ(d.past_due, (std::vector<int>{1, 0}));
  EXPECT_EQ(d.due_now, (std::vector<int>{1, 1}));
  EXPECT_EQ(d.due_next, (std::vector<int>{0, 1}));
}

TEST(FollowerEncoder, LayoutAndFeatures) {
  const auto c = two_stage();
  FollowerEncoder enc(c, 0);
  EXPECT_EQ(enc.machines(), (std::vector<int>{0, 1}));
  EXPECT_EQ(enc.choices_per_machine(), 4);
  EXPECT_EQ(enc.dim(), enc.state_dim() + 3);
  auto e = empty_episode(c);
  e.demand = {{1, 0, 1, 12, 0}, {1, 1, 1, 12, 0}};
  e.initial_machines[1].setup = lfsched::Setup{1, 0};
  Simulator sim(c);
  sim.reset(e);
  const auto d = demand_view(c, sim.state(), 48);
  const Vec x = enc.encode(sim.state(), d, {0.1, 0.2, 0.3});
  ASSERT_EQ(x.size(), enc.dim());
  EXPECT_TRUE((x.array() >= 0.0).all() && (x.array() <= 1.0).all());
  EXPECT_DOUBLE_EQ(x(enc.dim() - 1), 0.3);
  const int b = enc.machine_block();
  EXPECT_EQ(x(2), 1.0);      // machine 0 has no setup: "none" product slot
  EXPECT_EQ(x(b + 1), 1.0);  // machine 1 set to product 1
  EXPECT_EQ(x(b + b - 2), 1.0);  // its own queue holds lots
  EXPECT_DOUBLE_EQ(x(b + b - 1), 0.2);
  EXPECT_EQ(enc.decode(0).convert, true);
  EXPECT_EQ(enc.decode(3).convert, false);
  EXPECT_EQ(enc.decode(2).candidate, 1);
  EXPECT_THROW(enc.decode(4), ContractError);
}

TEST(FollowerPolicy, InitialPolicyIsNearUniformAndLogProbSums) {
  const auto c = two_stage();
  const auto m = build_variant(variant_spec(Variant::LFORM), c, 1);
  const auto& pol = m.agents[m.agent_of_op[0]];
  Rng rng = make_rng(1, {});
  const Vec obs = Vec::Random(pol.obs_dim()).cwiseAbs();
  const Vec logits = pol.actor().forward(obs);
  for (int g = 0; g < pol.groups(); ++g) {
    const Vec z = logits.segment(g * pol.choices(), pol.choices());
    const Vec p = z.array().exp() / z.array().exp().sum();
    for (int k = 0; k < p.size(); ++k) EXPECT_NEAR(p(k), 1.0 / p.size(), 0.02);
  }
  const bool avail[2] = {true, false};
  const auto d = follower_act(obs, pol, avail, ActMode::Sample, rng);
  EXPECT_EQ(d.action.choices[1], -1);
  const int k = d.action.choices[0];
  const Vec z = logits.segment(0, pol.choices());
  const double want = z(k) - std::log(z.array().exp().sum());
  EXPECT_NEAR(d.log_prob, want, 1e-12);
  const bool both[2] = {true, true};
  const auto d2 = follower_act(obs, pol, both, ActMode::Sample, rng);
  double sum = 0.0;
  for (int g = 0; g < 2; ++g) {
    const Vec zg = logits.segment(g * pol.choices(), pol.choices());
    sum += zg(d2.action.choices[g]) - std::log(zg.array().exp().sum());
  }
  EXPECT_NEAR(d2.log_prob, sum, 1e-12);
  const bool wrong[3] = {true, true, true};
  EXPECT_THROW(follower_act(obs, pol, wrong, ActMode::Sample, rng), std::invalid_argument);
}

TEST(LeaderPolicy, GoalsInUnitIntervalOncePerShift) {
  const auto c = two_stage();
  const auto m = build_variant(variant_spec(Variant::LFORM_RC), c, 2);
  const auto& pol = m.agents[m.leader];
  EXPECT_EQ(pol.groups(), 3 * c.num_operations);
  Rng rng = make_rng(3, {});
  for (int i = 0; i < 200; ++i) {
    const Vec obs = Vec::Random(pol.obs_dim());
    const auto d = leader_act(obs, pol, i % 2 ? ActMode::Greedy : ActMode::Sample, rng, 12 * i, 12);
    ASSERT_EQ(d.goals.size(), 2u);
    for (const auto& g : d.goals)
      for (double x : g) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
      }
    EXPECT_TRUE(std::isfinite(d.log_prob));
  }
  EXPECT_THROW(leader_act(Vec::Zero(pol.obs_dim()), pol, ActMode::Sample, rng, 5, 12), ContractError);
}

TEST(LeaderPolicy, BetaModeAndLogDensity) {
  Rng rng = make_rng(4, {});
  ActorCritic pol(3, HeadKind::Beta, 3, 2, rng, 8, 1);
  const Vec obs = Vec::Ones(3);
  const Vec z = pol.actor().forward(obs);
  const auto r = pol.act(obs, {}, ActMode::Greedy, rng);
  for (int g = 0; g < 3; ++g) {
    const double a = 1.0 + std::log1p(std::exp(z(2 * g))), b = 1.0 + std::log1p(std::exp(z(2 * g + 1)));
    EXPECT_NEAR(r.action.values[g], (a - 1) / (a + b - 2), 1e-12);
  }
  // Density of Beta(a, b) at the drawn point, from the closed form.
  const auto s = pol.act(obs, {}, ActMode::Sample, rng);
  double lp = 0.0;
  for (int g = 0; g < 3; ++g) {
    const double a = 1.0 + std::log1p(std::exp(z(2 * g))), b = 1.0 + std::log1p(std::exp(z(2 * g + 1)));
    const double x = s.action.values[g];
    lp += (a - 1) * std::log(x) + (b - 1) * std::log(1 - x) + std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  }
  EXPECT_NEAR(s.log_prob, lp, 1e-9);
}

TEST(Episode, GoalEmissionsAndGuardOnTiny) {
  const auto c = load_scenario(scenario_path("tiny.json"));
  ModelShape shape;
  shape.hidden = 16;
  const auto m = build_variant(variant_spec(Variant::LFORM_RC), c, 5, shape);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto e = sample_episode(c, DemandTier::High, s);
    const auto r = infer_rolling(m, c, e, 4, ActMode::Sample, s);
    ASSERT_EQ(r.goals.size(), static_cast<std::size_t>(e.horizon_shifts));
    for (int n = 0; n < e.horizon_shifts; ++n) {
      EXPECT_EQ(r.goals[n].shift, n);
      EXPECT_EQ(r.goals[n].tick, n * c.shift_length);
      ASSERT_EQ(r.goals[n].goals.size(), static_cast<std::size_t>(c.num_operations));
    }
    EXPECT_TRUE(validate_trace(c, e, r.trace, r.maintenance).ok());
    double team = 0.0;
    for (const auto& sr : r.rewards) team += sr.leader;
    EXPECT_EQ(team, r.team_reward);
    EXPECT_EQ(-team, objective_value(c, e, lots_from_trace(c, e, r.trace)));
  }
}
