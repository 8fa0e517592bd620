#include <gtest/gtest.h>

#include <sstream>

#include "test_helpers.hpp"

using namespace lfsched;
using namespace lfsched::testing;

namespace {

// One machine, two products, CO 4, TH 6, S 12, N 2.
struct Fixture {
  ScenarioConfig c = single_op(2, 1, 4, 6);
  EpisodeInstance e = [this] {
    auto e = empty_episode(c);
    e.demand = {{0, 0, 1, 12, 0}, {0, 1, 1, 12, 0}, {1, 0, 2, 24, 0}};
    return e;
  }();
  std::vector<AssignmentEvent> good{
      {0, 0, 0, 0, 0, 4, 1},
      {0, 0, 1, 0, 5, 0, 1},
      {1, 0, 0, 0, 12, 4, 2},
  };

  ValidationReport check(const std::vector<AssignmentEvent>& t, const std::vector<MaintenanceInterval>& m = {}) const {
    return validate_trace(c, e, t, m);
  }
};

bool only(const ValidationReport& r, ConstraintFamily f) {
  if (r.ok()) return false;
  for (const auto& v : r.violations)
    if (v.family != f) return false;
  return true;
}

}  // namespace

TEST(Validator, AcceptsHandBuiltSchedule) {
  Fixture f;
  const auto r = f.check(f.good);
  EXPECT_TRUE(r.ok()) << r.summary();
  const auto lots = lots_from_trace(f.c, f.e, f.good);
  EXPECT_EQ(objective_value(f.c, f.e, lots), 0);
}

TEST(Validator, FlagsOverlap) {
  Fixture f;
  auto t = f.good;
  t[1].start = 4;
  EXPECT_TRUE(only(f.check(t), ConstraintFamily::NoOverlap)) << f.check(t).summary();
}

TEST(Validator, FlagsMissingConversion) {
  Fixture f;
  auto t = f.good;
  t[0].conversion = 0;
  EXPECT_TRUE(only(f.check(t), ConstraintFamily::SetupPersistence)) << f.check(t).summary();
  t = f.good;
  t[1].conversion = 4;
  t[1].start = 5;
  EXPECT_FALSE(f.check(t).passed(ConstraintFamily::SetupPersistence));
}

TEST(Validator, FlagsWrongProcessing) {
  Fixture f;
  auto t = f.good;
  t[2].processing = 1;
  EXPECT_TRUE(only(f.check(t), ConstraintFamily::CompletionTime)) << f.check(t).summary();
}

TEST(Validator, FlagsFifoOvertake) {
  Fixture f;
  std::vector<AssignmentEvent> t{{0, 0, 1, 0, 0, 4, 1}, {0, 0, 0, 0, 5, 0, 1}, {1, 0, 0, 0, 12, 4, 2}};
  EXPECT_TRUE(only(f.check(t), ConstraintFamily::Fifo)) << f.check(t).summary();
}

TEST(Validator, FlagsBudgetOverrun) {
  Fixture f;
  std::vector<AssignmentEvent> t{{0, 0, 0, 0, 0, 4, 1}, {1, 0, 0, 0, 5, 4, 2}, {0, 0, 1, 0, 11, 4, 1}};
  const auto r = f.check(t);
  EXPECT_FALSE(r.passed(ConstraintFamily::ConversionBudget)) << r.summary();
  EXPECT_TRUE(r.passed(ConstraintFamily::NoOverlap));
}

TEST(Validator, FlagsDoubleAssignment) {
  Fixture f;
  auto t = f.good;
  t.push_back({1, 0, 0, 0, 20, 0, 2});
  EXPECT_FALSE(f.check(t).passed(ConstraintFamily::SingleAssignment));
}

TEST(Validator, FlagsStartDuringMaintenance) {
  Fixture f;
  std::vector<MaintenanceInterval> m{{0, 0, 3, MaintenanceKind::Unscheduled}};
  auto t = f.good;
  EXPECT_FALSE(f.check(t, m).passed(ConstraintFamily::Availability));
  for (auto& ev : t) ev.start += 3;
  EXPECT_TRUE(f.check(t, m).ok()) << f.check(t, m).summary();
}

TEST(Validator, FlagsUnhonoredScheduledWindow) {
  Fixture f;
  f.c.scheduled_maintenance = {{0, 6, 8}};
  EXPECT_FALSE(f.check(f.good).passed(ConstraintFamily::Availability));
  EXPECT_TRUE(f.check(f.good, {{0, 6, 8, MaintenanceKind::Scheduled}}).ok());
}

TEST(Validator, FlagsPrecedence) {
  const auto c = two_stage();
  auto e = empty_episode(c);
  e.demand = {{0, 0, 1, 24, 0}};
  std::vector<AssignmentEvent> t{{0, 0, 0, 0, 0, 3, 1}, {0, 1, 0, 2, 3, 3, 1}};
  EXPECT_TRUE(only(validate_trace(c, e, t, {}), ConstraintFamily::Precedence));
  t[1].start = 4;
  EXPECT_TRUE(validate_trace(c, e, t, {}).ok());
}

TEST(Validator, MalformedTraceThrows) {
  Fixture f;
  auto t = f.good;
  std::swap(t[0], t[2]);
  EXPECT_THROW(f.check(t), TraceError);
  t = f.good;
  t[0].lot = 9;
  EXPECT_THROW(f.check(t), TraceError);
}

TEST(Objective, CountsLateAndUnfinishedLots) {
  Fixture f;
  auto t = f.good;
  t[2].start = 20;  // completes at 26 > 24
  EXPECT_EQ(objective_value(f.c, f.e, lots_from_trace(f.c, f.e, t)), 1);
  t.pop_back();  // never finishes
  EXPECT_EQ(objective_value(f.c, f.e, lots_from_trace(f.c, f.e, t)), 1);
  t[1].start = 12;  // lot (0,1) now late as well
  EXPECT_EQ(objective_value(f.c, f.e, lots_from_trace(f.c, f.e, t)), 2);
  EXPECT_EQ(lots_due_within(f.c, f.e, lots_from_trace(f.c, f.e, t)), 3);
}

TEST(TraceFormat, RoundTrip) {
  Fixture f;
  TraceBundle b{{{"seed", "7"}}, f.good, {{0, 13, 15, MaintenanceKind::Unscheduled}}};
  std::ostringstream os;
  write_trace(os, b);
  std::istringstream is(os.str());
  EXPECT_EQ(read_trace(is), b);
  std::istringstream bad("A 1 2\n");
  EXPECT_THROW(read_trace(bad), TraceError);
}
