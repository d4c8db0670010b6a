#include "realmsim/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "realmsim/rng.hpp"

namespace realmsim {
namespace {

const std::filesystem::path kFixtures = REALMSIM_FIXTURE_DIR;

ExperimentConfig quick(CostProfile profile, size_t inferences = 10, size_t runs = 1) {
  ExperimentConfig c;
  c.profile = profile;
  c.inferences = inferences;
  c.runs = runs;
  c.seed = 1;
  return c;
}

CostProfile random_positive_profile(DeterministicRng& rng) {
  CostProfile p;
  for (size_t i = 0; i < kEventTypeCount; ++i) {
    p.cost_of(static_cast<EventType>(i)) = 1 + static_cast<double>(rng.below(1'000'000));
  }
  return p;
}

TEST(ExperimentTest, ZeroProfileGivesUndefinedRatios) {
  ExperimentReport r = run_experiment(quick(CostProfile{}));
  EXPECT_EQ(r.normal.inference.mean, 0);
  EXPECT_EQ(r.realm.boot.mean, 0);
  EXPECT_FALSE(r.inference_ratio.has_value());
  EXPECT_FALSE(r.boot_ratio.has_value());
  EXPECT_FALSE(r.termination_ratio.has_value());
  auto j = r.to_json();
  EXPECT_TRUE(j["ratios"]["inference"].is_null());
  EXPECT_NE(r.to_csv().find("undefined"), std::string::npos);
}

TEST(ExperimentTest, RealmDominatesPerInferenceUnderRandomProfiles) {
  DeterministicRng rng(31);
  for (int i = 0; i < 8; ++i) {
    CostProfile p = random_positive_profile(rng);
    ExperimentReport r = run_experiment(quick(p));
    EXPECT_GT(r.realm.inference.mean, r.normal.inference.mean);
    EXPECT_EQ(r.realm.world_switches_per_inference, 4);
    EXPECT_EQ(r.realm.vm_enters_per_inference, 2);
    EXPECT_EQ(r.normal.world_switches_per_inference, 0);
    EXPECT_EQ(r.normal.vm_enters_per_inference, 2);
  }
}

TEST(ExperimentTest, RealmBootIncreasesWithImageSize) {
  DeterministicRng rng(32);
  for (int i = 0; i < 4; ++i) {
    ExperimentConfig c = quick(random_positive_profile(rng), 1);
    double last = -1;
    for (const char* size : {"1mb", "50mb", "98mb", "139mb"}) {
      c.image_size_bytes = image_size_from_name(size);
      double boot = run_scenario(Scenario::kRealmVm, c).boot.mean;
      EXPECT_GT(boot, last) << size;
      last = boot;
    }
  }
}

TEST(ExperimentTest, DeterministicReport) {
  ExperimentConfig c = quick(CostProfile::load(kFixtures / "calibrated.json"), 10, 2);
  c.jitter = Jitter::reference();
  EXPECT_EQ(run_experiment(c).to_json().dump(), run_experiment(c).to_json().dump());
  ExperimentConfig other = c;
  other.seed = 2;
  EXPECT_NE(run_experiment(c).to_json().dump(), run_experiment(other).to_json().dump());
}

// With idle ticks subtracted, what remains of each phase is exactly the sum
// of the events some world was charged for.
TEST(ExperimentTest, BaselineSubtractionLeavesWorkloadEvents) {
  DeterministicRng rng(33);
  PipelineConfig c;
  c.inputs = fixtures::inputs(12);
  c.profile = random_positive_profile(rng);
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed);
  const CostLedger& ledger = r.ledger();
  auto idle = static_cast<uint64_t>(std::llround(c.profile.idle_cost_per_tick));
  for (size_t i = 0; i < kPhaseCount; ++i) {
    auto phase = static_cast<Phase>(i);
    uint64_t workload = 0;
    for (const auto& e : ledger.entries()) {
      if (e.phase == phase && e.actor.has_value()) workload += e.instructions;
    }
    EXPECT_EQ(baseline_subtract(ledger.phase_total(phase), ledger.count(EventType::kIdle, phase) * idle),
              workload)
        << phase_name(phase);
  }
}

TEST(ExperimentTest, ImageNames) {
  EXPECT_EQ(image_size_from_name("98mb"), 98'000'000u);
  EXPECT_EQ(image_size_from_name("139MB"), 139'000'000u);
  EXPECT_THROW(image_size_from_name("big"), Error);
  EXPECT_THROW(image_size_from_name("0mb"), Error);
}

TEST(CalibrationTest, ReproducesTargetsAndCommittedProfile) {
  CalibrationTargets t;
  Calibration cal = calibrate(t);
  EXPECT_EQ(cal.profile, CostProfile::load(kFixtures / "calibrated.json"));
  ASSERT_EQ(cal.clamped.size(), 1u);
  EXPECT_NE(cal.clamped[0].find("boot_base_realm"), std::string::npos);

  ExperimentConfig c = quick(cal.profile, 40, 1);
  ExperimentReport r = run_experiment(c);
  auto near = [](double got, double want) { return std::abs(got - want) <= 1e-6 * want; };
  EXPECT_TRUE(near(r.normal.inference.mean, t.inference_normal)) << r.normal.inference.mean;
  EXPECT_TRUE(near(r.realm.inference.mean, t.inference_realm)) << r.realm.inference.mean;
  EXPECT_TRUE(near(r.normal.boot.mean, t.boot_normal)) << r.normal.boot.mean;
  EXPECT_TRUE(near(r.normal.termination.mean, t.termination_normal));
  EXPECT_TRUE(near(r.realm.termination.mean, t.termination_realm));
  c.image_size_bytes = t.image_large;
  double large = run_scenario(Scenario::kRealmVm, c).boot.mean;
  EXPECT_NEAR(large - r.realm.boot.mean, t.boot_realm_large - t.boot_realm, 1e-4 * t.boot_realm);
}

TEST(CalibrationTest, TargetsJsonRoundTrip) {
  CalibrationTargets t;
  t.inference_realm = 400e6;
  EXPECT_EQ(CalibrationTargets::from_json(t.to_json()).to_json(), t.to_json());
}

TEST(ReportFormatTest, JsonAndCsvShape) {
  ExperimentReport r = run_experiment(quick(CostProfile::load(kFixtures / "calibrated.json"), 5, 2));
  auto j = r.to_json();
  for (const char* key : {"calibrated", "image_size_bytes", "inferences_per_run", "runs", "seed",
                          "jitter", "profile", "normal_vm", "realm_vm", "ratios"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  std::string csv = r.to_csv();
  EXPECT_EQ(csv.rfind("metric,normal_vm_mean_m,normal_vm_sd_m,realm_vm_mean_m,realm_vm_sd_m,ratio\n", 0),
            0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

}  // namespace
}  // namespace realmsim
