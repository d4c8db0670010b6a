#include "realmsim/cost_model.hpp"

#include <gtest/gtest.h>

#include "realmsim/error.hpp"
#include "realmsim/rng.hpp"

namespace realmsim {
namespace {

TEST(CostModelTest, WorldSwitchRecordedAtProfileCost) {
  CostProfile p;
  p.world_switch_cost = 1e6;
  CostLedger ledger(p);
  ledger.record(EventType::kWorldSwitch, World::kNormal);
  ASSERT_EQ(ledger.entries().size(), 1u);
  EXPECT_EQ(ledger.entries()[0].instructions, 1'000'000u);
  EXPECT_EQ(ledger.entries()[0].actor, World::kNormal);
}

TEST(CostModelTest, PopulateChargedPerByte) {
  CostProfile p;
  p.populate_cost_per_byte = 1000;
  CostLedger ledger(p);
  ledger.record(EventType::kPopulate, World::kRoot, 4096);
  EXPECT_EQ(ledger.total(), 4'096'000u);
  EXPECT_EQ(ledger.entries()[0].size, 4096u);
}

TEST(CostModelTest, BaselineSubtract) {
  EXPECT_EQ(baseline_subtract(1000, 400), 600u);
  EXPECT_EQ(baseline_subtract(400, 400), 0u);
  try {
    baseline_subtract(400, 401);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMeasurement);
  }
}

TEST(CostModelTest, UnknownEventNameIsConfigError) {
  CostLedger ledger;
  try {
    ledger.record("cache_flush", World::kRoot);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  EXPECT_TRUE(ledger.entries().empty());
  for (size_t i = 0; i < kEventTypeCount; ++i) {
    auto t = static_cast<EventType>(i);
    EXPECT_EQ(event_from_name(event_name(t)), t);
  }
}

TEST(CostModelTest, AdvanceTickChargesIdle) {
  CostProfile p;
  p.idle_cost_per_tick = 7;
  CostLedger ledger(p);
  ledger.set_phase(Phase::kBoot);
  ledger.advance_tick();
  ledger.advance_tick();
  EXPECT_EQ(ledger.tick(), 2u);
  EXPECT_EQ(ledger.count(EventType::kIdle, Phase::kBoot), 2u);
  EXPECT_EQ(ledger.phase_total(Phase::kBoot), 14u);
  EXPECT_EQ(ledger.phase_ticks(Phase::kBoot), 2u);
  EXPECT_FALSE(ledger.entries()[0].actor.has_value());
}

// Phase totals, the grand total and the sum over entries always agree.
TEST(CostModelTest, LedgerConservation) {
  DeterministicRng rng(11);
  CostProfile p;
  for (size_t i = 0; i < kEventTypeCount; ++i) p.cost_of(static_cast<EventType>(i)) = rng.below(5000);
  CostLedger ledger(p);
  for (int i = 0; i < 3000; ++i) {
    ledger.set_phase(static_cast<Phase>(rng.below(kPhaseCount)));
    if (rng.below(4) == 0) {
      ledger.advance_tick();
    } else {
      ledger.record(static_cast<EventType>(rng.below(kEventTypeCount)), World::kRoot,
                    1 + rng.below(100));
    }
  }
  uint64_t sum = 0;
  std::array<uint64_t, kPhaseCount> by_phase{};
  for (const auto& e : ledger.entries()) {
    sum += e.instructions;
    by_phase[static_cast<size_t>(e.phase)] += e.instructions;
    EXPECT_EQ(e.instructions, static_cast<uint64_t>(p.cost_of(e.type)) * e.size);
  }
  EXPECT_EQ(sum, ledger.total());
  uint64_t phases = 0;
  for (size_t i = 0; i < kPhaseCount; ++i) {
    EXPECT_EQ(by_phase[i], ledger.phase_total(static_cast<Phase>(i)));
    phases += ledger.phase_total(static_cast<Phase>(i));
  }
  EXPECT_EQ(phases, sum);
}

TEST(CostModelTest, CountsSurviveWithoutEntries) {
  CostProfile p;
  p.vm_enter_cost = 2;
  CostLedger ledger(p);
  ledger.set_keep_entries(false);
  ledger.record(EventType::kVmEnter, World::kNormal);
  EXPECT_TRUE(ledger.entries().empty());
  EXPECT_EQ(ledger.count(EventType::kVmEnter), 1u);
  EXPECT_EQ(ledger.total(), 2u);
}

TEST(CostProfileTest, JsonRoundTrip) {
  CostProfile p;
  p.world_switch_cost = 34.85e6;
  p.populate_cost_per_byte = 202.5;
  p.idle_cost_per_tick = 1e5;
  EXPECT_EQ(CostProfile::from_json(p.to_json()), p);
}

TEST(CostProfileTest, RejectsUnknownKeysAndNegatives) {
  EXPECT_THROW(CostProfile::from_json({{"warp_cost", 1}}), Error);
  EXPECT_THROW(CostProfile::from_json({{"world_switch_cost", -1}}), Error);
  CostProfile partial = CostProfile::from_json({{"vm_enter_cost", 5}});
  EXPECT_EQ(partial.vm_enter_cost, 5);
  EXPECT_EQ(partial.world_switch_cost, 0);
}

}  // namespace
}  // namespace realmsim
