#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "test_helpers.hpp"

using namespace lfsched;
using namespace lfsched::testing;

TEST(LoadScenario, LongTermShape) {
  const auto c = load_scenario(scenario_path("long_term.json"));
  EXPECT_EQ(c.num_products(), 20);
  EXPECT_EQ(c.num_operations, 21);
  EXPECT_EQ(c.num_machines(), 115);
  EXPECT_EQ(c.horizon_shifts, 42);
  EXPECT_NEAR(c.mean_out_degree(), 1.37, 0.15);
}

TEST(LoadScenario, ShortTermShape) {
  const auto c = load_scenario(scenario_path("short_term.json"));
  EXPECT_EQ(c.num_products(), 35);
  EXPECT_EQ(c.num_operations, 26);
  EXPECT_EQ(c.num_machines(), 159);
  EXPECT_EQ(c.horizon_shifts, 14);
  EXPECT_NEAR(c.mean_out_degree(), 1.33, 0.15);
}

TEST(LoadScenario, EmptyCompatibleSetNamesPair) {
  auto j = to_json(two_stage());
  j["products"][1]["compatible"][1] = Json::array();
  const std::string path = ::testing::TempDir() + "empty_set.json";
  std::ofstream(path) << j.dump();
  try {
    load_scenario(path);
    FAIL() << "expected a validation error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("(p=1, j=1)"), std::string::npos) << e.what();
  }
}

TEST(LoadScenario, MalformedFileIsParseError) {
  const std::string path = ::testing::TempDir() + "broken.json";
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_scenario(path), ParseError);
  EXPECT_THROW(load_scenario(::testing::TempDir() + "does_not_exist.json"), ParseError);
}

TEST(ValidateScenario, RejectsBrokenInvariants) {
  auto c = two_stage();
  c.conversion_threshold = c.shift_length;
  EXPECT_THROW(validate(c), ConfigError);

  c = two_stage();
  auto t = c.conversion.ticks();
  t[0][0] = 2;
  c.conversion = ConversionTable(c.conversion.setups(), t);
  EXPECT_THROW(validate(c), ConfigError);

  c = two_stage();
  t = c.conversion.ticks();
  t[0][1] = -1;
  c.conversion = ConversionTable(c.conversion.setups(), t);
  EXPECT_THROW(validate(c), ConfigError);

  c = two_stage();
  c.products[0].route = {1, 0};
  c.products[0].compatible = {{2}, {0}};
  EXPECT_THROW(validate(c), ConfigError);  // 0->1 and 1->0 form a cycle

  c = two_stage();
  c.products[0].compatible[0] = {2};  // machine 2 belongs to operation 1
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(ScenarioJson, RoundTrip) {
  const auto c = generate_scenario(desk_shape(4, 4, 7, 0.75), 3);
  const auto back = scenario_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(fingerprint(back), fingerprint(c));
}

TEST(GenerateScenario, LongTermShapeIsDeterministic) {
  auto shape = desk_shape(20, 21, 115, 1.37);
  shape.horizon_shifts = 42;
  const auto a = generate_scenario(shape, 7);
  const auto b = generate_scenario(shape, 7);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(a.num_products(), 20);
  EXPECT_EQ(a.num_operations, 21);
  EXPECT_EQ(a.num_machines(), 115);
  EXPECT_NEAR(a.mean_out_degree(), 1.37, 0.15);
}

TEST(GenerateScenario, MinimalChain) {
  const auto c = generate_scenario(desk_shape(1, 1, 1, 0.0), 5);
  EXPECT_EQ(c.num_products(), 1);
  EXPECT_EQ(c.num_operations, 1);
  EXPECT_EQ(c.num_machines(), 1);
  EXPECT_EQ(c.products[0].route, std::vector<int>{0});
  EXPECT_EQ(c.products[0].compatible[0], std::vector<int>{0});
}

TEST(GenerateScenario, SeedsDifferInCompatibility) {
  const auto a = generate_scenario(desk_shape(5, 4, 6, 0.75), 1);
  const auto b = generate_scenario(desk_shape(5, 4, 6, 0.75), 2);
  bool differ = false;
  for (int p = 0; p < 5; ++p) differ |= a.products[p].compatible != b.products[p].compatible;
  EXPECT_TRUE(differ);
}

TEST(GenerateScenario, CountsAndDegreeAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto c = generate_scenario(desk_shape(5, 5, 8, 1.0), seed);
    EXPECT_EQ(c.num_products(), 5);
    EXPECT_EQ(c.num_operations, 5);
    EXPECT_EQ(c.num_machines(), 8);
    EXPECT_NEAR(c.mean_out_degree(), 1.0, 0.15);
  }
}

TEST(GenerateScenario, InfeasibleShapes) {
  EXPECT_THROW(generate_scenario(desk_shape(2, 5, 3, 0.5), 1), ConfigError);   // fewer machines than operations
  EXPECT_THROW(generate_scenario(desk_shape(2, 3, 3, 5.0), 1), ConfigError);   // too many edges
  EXPECT_THROW(generate_scenario(desk_shape(1, 6, 6, 1.5), 1), ConfigError);   // one route cannot cover the DAG
}

TEST(SampleEpisode, TierRatios) {
  const auto c = two_stage();
  double sum[3] = {0, 0, 0};
  const int n = 10000;
  for (int t = 0; t < 3; ++t)
    for (int s = 0; s < n; ++s) sum[t] += sample_episode(c, static_cast<DemandTier>(t), s * 3 + t).total_lots();
  const double r_med = sum[1] / sum[0], r_high = sum[2] / sum[0];
  EXPECT_GE(r_med, 2.8);
  EXPECT_LE(r_med, 3.2);
  EXPECT_GE(r_high, 4.7);
  EXPECT_LE(r_high, 5.3);
}

TEST(SampleEpisode, ZeroRatesGiveEmptyDemand) {
  auto c = two_stage();
  for (auto& p : c.products) p.demand_rate = 0.0;
  const auto e = sample_episode(c, DemandTier::High, 4);
  EXPECT_TRUE(e.demand.empty());
  EXPECT_TRUE(e.initial_wip.empty());
}

TEST(SampleEpisode, DeterministicAndConsistent) {
  const auto c = generate_scenario(desk_shape(5, 4, 7, 0.75), 9);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = sample_episode(c, DemandTier::Medium, s);
    const auto b = sample_episode(c, DemandTier::Medium, s);
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_NO_THROW(validate(a, c));
    for (const auto& d : a.demand) {
      EXPECT_EQ(d.due % c.shift_length, 0);
      EXPECT_LE(d.release, d.due);
    }
    EXPECT_EQ(to_json(episode_from_json(to_json(a))), to_json(a));
  }
}

TEST(SampleEpisode, InitialWipIsValid) {
  auto c = two_stage();
  c.demand.initial_wip_mean = 2.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto e = sample_episode(c, DemandTier::Low, s);
    EXPECT_NO_THROW(validate(e, c));
    for (const auto& w : e.initial_wip) EXPECT_EQ(w.due % c.shift_length, 0);
  }
}

TEST(SampleEpisode, DropoutKeepsAtLeastOneProduct) {
  auto c = two_stage();
  c.demand.product_dropout = 0.9;
  for (auto& p : c.products) p.demand_rate = 20.0;  // every demanded product receives lots
  int single = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto e = sample_episode(c, DemandTier::Low, s, 1);
    std::set<int> products;
    for (const auto& d : e.demand) products.insert(d.product);
    EXPECT_GE(products.size(), 1u);
    single += products.size() == 1;
  }
  EXPECT_GT(single, 100);
}
