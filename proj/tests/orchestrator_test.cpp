#include "realmsim/orchestrator.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "oracle.hpp"
#include "realmsim/fixtures.hpp"

namespace realmsim {
namespace {

const std::filesystem::path kFixtures = REALMSIM_FIXTURE_DIR;

PipelineConfig base(size_t inputs = 40) {
  PipelineConfig c;
  c.inputs = fixtures::inputs(inputs);
  c.seed = 3;
  return c;
}

std::vector<std::string> steps(const PipelineResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.transcript) out.push_back(e.step);
  return out;
}

TEST(PipelineTest, FortyInputsEndToEnd) {
  PipelineConfig c = base();
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed) << r.error;
  EXPECT_EQ(validate_transcript(r.transcript), std::nullopt);
  ASSERT_EQ(r.outputs.size(), 40u);
  model::ModelPackage m = fixtures::model();
  for (size_t i = 0; i < 40; ++i) {
    EXPECT_EQ(r.outputs[i].request_id, i + 1);
    EXPECT_EQ(r.outputs[i].class_index, oracle::classify(m.weights, m.bias, c.inputs[i].values));
  }
  EXPECT_EQ(r.termination_reason, "end-of-batch");
  EXPECT_EQ(r.normal_granules_before, 64u);
  EXPECT_EQ(r.normal_granules_after, 64u);
  ASSERT_TRUE(r.realm.has_value());
  EXPECT_EQ(r.realm->rim, r.refs.expected_rim);
  EXPECT_EQ(r.realm->state, RealmState::kActive);
  EXPECT_EQ(r.machine->descriptor(r.realm->id).state, RealmState::kDestroyed);
}

TEST(PipelineTest, UpdateAppliedAtFortyInferences) {
  PipelineConfig c = base();
  c.publish_update = true;
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed) << r.error;
  EXPECT_EQ(r.diagnostics.updates_applied, 1u);
  auto s = steps(r);
  EXPECT_EQ(std::count(s.begin(), s.end(), "8"), 1);
  Digest chain = oracle::extend({}, oracle::raw(fixtures::model(1).digest));
  chain = oracle::extend(chain, oracle::raw(fixtures::model(2).digest));
  EXPECT_EQ(r.realm->rem[0], chain);
}

TEST(PipelineTest, CorruptSignatureAbortsBeforeDelegation) {
  Bytes bundle = fixtures::realm_image().encode();
  bundle.back() ^= 1;
  PipelineConfig c = base();
  c.image_bundle = bundle;
  PipelineResult r = run_pipeline(c);
  EXPECT_FALSE(r.completed);
  EXPECT_EQ(r.failed_step, "1");
  EXPECT_NE(r.error.find("SignatureMismatch"), std::string::npos) << r.error;
  EXPECT_TRUE(r.machine->realms().empty());
  EXPECT_EQ(r.machine->ledger().count(EventType::kWorldSwitch), 0u);
  EXPECT_EQ(r.normal_granules_after, 64u);
  EXPECT_EQ(steps(r), std::vector<std::string>{"abort"});
}

TEST(PipelineTest, ReorderedSegmentIsRimMismatch) {
  image::RealmImage img = fixtures::realm_image();
  std::swap(img.segments[1], img.segments[2]);
  PipelineConfig c = base();
  c.image_bundle = img.encode();
  PipelineResult r = run_pipeline(c);
  EXPECT_EQ(r.failed_step, "1");
  EXPECT_NE(r.error.find("RimMismatch"), std::string::npos) << r.error;
  EXPECT_TRUE(r.machine->realms().empty());
}

TEST(PipelineTest, TruncatedBundleIsDecodeError) {
  Bytes bundle = fixtures::realm_image().encode();
  bundle.resize(bundle.size() / 2);
  PipelineConfig c = base();
  c.image_bundle = bundle;
  PipelineResult r = run_pipeline(c);
  EXPECT_EQ(r.failed_step, "1");
  EXPECT_NE(r.error.find("DecodeError"), std::string::npos) << r.error;
}

TEST(PipelineTest, InferenceLimitTerminatesAfterFive) {
  PipelineConfig c = base();
  c.policy.max_inferences = 5;
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed) << r.error;
  EXPECT_EQ(r.outputs.size(), 5u);
  EXPECT_EQ(r.termination_reason, "InferenceLimit");
  EXPECT_EQ(r.realm->inference_count, 5u);
  EXPECT_EQ(validate_transcript(r.transcript), std::nullopt);
  EXPECT_EQ(r.normal_granules_after, 64u);
}

TEST(PipelineTest, ExpiryTerminatesMidBatch) {
  PipelineResult probe = run_pipeline(base());
  uint64_t ready = 0;
  for (const auto& e : probe.transcript) {
    if (e.step == "6") ready = e.tick;
  }
  PipelineConfig c = base();
  c.policy.valid_until = ready + 20;
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed) << r.error;
  EXPECT_EQ(r.termination_reason, "Expired");
  EXPECT_GT(r.outputs.size(), 0u);
  EXPECT_LT(r.outputs.size(), 40u);
  EXPECT_EQ(validate_transcript(r.transcript), std::nullopt);
}

TEST(PipelineTest, DebugPlatformIsRefusedAtStepFour) {
  PipelineConfig c = base();
  c.lifecycle = attestation::LifecycleState::kDebug;
  PipelineResult r = run_pipeline(c);
  EXPECT_EQ(r.failed_step, "4");
  EXPECT_NE(r.error.find("DebugPlatform"), std::string::npos) << r.error;
  EXPECT_TRUE(r.outputs.empty());
  EXPECT_EQ(r.normal_granules_after, 64u);
  EXPECT_EQ(r.machine->descriptor(r.machine->realms()[0]).state, RealmState::kDestroyed);
}

TEST(PipelineTest, HostileReadsAllFaultAndChangeNothing) {
  PipelineConfig c = base();
  c.hostile_host_reads = true;
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed) << r.error;
  EXPECT_GT(r.hostile.attempts, 0u);
  EXPECT_EQ(r.hostile.violations, r.hostile.attempts);
  EXPECT_TRUE(r.hostile.realm_state_unchanged);
  EXPECT_EQ(r.outputs.size(), 40u);
}

bool weights_visible(const PipelineResult& r) {
  const Bytes& w = r.model_weights;
  const GranuleSpace& mem = r.machine->memory();
  for (GranuleId g = 0; g < mem.size(); ++g) {
    if (mem.granule(g).state == GranuleState::kNormalWorld && contains(mem.granule(g).contents, w)) {
      return true;
    }
  }
  for (const auto& rec : r.link_log) {
    if (contains(rec.frame, w)) return true;
  }
  return false;
}

TEST(PipelineTest, WeightsNeverReachNormalWorld) {
  PipelineConfig c = base();
  c.publish_update = true;
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed);
  ASSERT_FALSE(r.model_weights.empty());
  EXPECT_FALSE(weights_visible(r));
  // The check itself finds weights when they are present.
  r.machine->memory().write(World::kNormal, 60, 8, r.model_weights);
  EXPECT_TRUE(weights_visible(r));
}

TEST(PipelineTest, NormalVmScenarioServesSameOutputs) {
  PipelineConfig c = base();
  c.scenario = Scenario::kNormalVm;
  PipelineResult normal = run_pipeline(c);
  ASSERT_TRUE(normal.completed) << normal.error;
  // No provider and no attestation: steps 3 to 5 do not occur.
  auto s = steps(normal);
  EXPECT_EQ(std::vector<std::string>(s.begin(), s.begin() + 3),
            (std::vector<std::string>{"1", "2", "6"}));
  EXPECT_EQ(s.back(), "terminate");
  PipelineResult realm = run_pipeline(base());
  EXPECT_EQ(normal.outputs, realm.outputs);
  EXPECT_EQ(normal.ledger().count(EventType::kWorldSwitch), 0u);
}

TEST(PipelineTest, DeterministicAcrossRunsAndTransports) {
  PipelineConfig c = base();
  c.publish_update = true;
  PipelineResult a = run_pipeline(c);
  PipelineResult b = run_pipeline(c);
  EXPECT_EQ(a.transcript_jsonl(), b.transcript_jsonl());
  EXPECT_EQ(a.ledger().total(), b.ledger().total());
  c.transport = ProviderTransport::kTcp;
  PipelineResult t = run_pipeline(c);
  ASSERT_TRUE(t.completed) << t.error;
  EXPECT_EQ(a.transcript_jsonl(), t.transcript_jsonl());
  ASSERT_EQ(a.provider_transcript.size(), t.provider_transcript.size());
  for (size_t i = 0; i < a.provider_transcript.size(); ++i) {
    EXPECT_EQ(a.provider_transcript[i].frame, t.provider_transcript[i].frame);
  }
}

TEST(PipelineTest, SeedChangesNonces) {
  PipelineConfig c = base();
  PipelineResult a = run_pipeline(c);
  c.seed = 4;
  PipelineResult b = run_pipeline(c);
  EXPECT_NE(a.provisioning_challenge, b.provisioning_challenge);
  EXPECT_EQ(a.outputs, b.outputs);
}

TEST(PipelineTest, ExchangeBackpressureWithBatches) {
  PipelineConfig c = base(100);
  c.inputs_per_entry = 40;
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed) << r.error;
  EXPECT_EQ(r.outputs.size(), 100u);
}

TEST(PipelineTest, LoadsDemoConfig) {
  PipelineConfig c = PipelineConfig::load(kFixtures / "demo.json");
  EXPECT_EQ(c.inputs.size(), 40u);
  EXPECT_TRUE(c.publish_update);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_GT(c.profile.world_switch_cost, 0);
  PipelineResult r = run_pipeline(c);
  ASSERT_TRUE(r.completed) << r.error;
  EXPECT_EQ(r.outputs.size(), 40u);
}

TEST(PipelineConfigTest, RejectsUnknownKeys) {
  EXPECT_THROW(PipelineConfig::from_json({{"warp", 1}}, kFixtures), Error);
  EXPECT_THROW(PipelineConfig::from_json({{"provider", "carrier-pigeon"}}, kFixtures), Error);
}

TranscriptEntry at(const char* step, uint64_t tick) { return {step, tick, "x", {}}; }

TEST(TranscriptValidatorTest, AcceptsCanonicalShape) {
  std::vector<TranscriptEntry> t = {at("1", 0), at("2", 1), at("3", 2), at("4", 3), at("5", 4),
                                    at("6", 4), at("7", 5), at("8", 6), at("7", 7),
                                    at("terminate", 9)};
  EXPECT_EQ(validate_transcript(t), std::nullopt);
}

TEST(TranscriptValidatorTest, RejectsViolations) {
  std::vector<TranscriptEntry> good = {at("1", 0), at("2", 1), at("3", 2), at("4", 3),
                                       at("5", 4), at("6", 5), at("7", 6), at("terminate", 7)};
  auto swapped = good;
  std::swap(swapped[2], swapped[3]);
  EXPECT_NE(validate_transcript(swapped), std::nullopt);
  auto early = good;
  early.insert(early.begin() + 3, at("7", 2));
  EXPECT_NE(validate_transcript(early), std::nullopt);
  auto unterminated = good;
  unterminated.pop_back();
  EXPECT_NE(validate_transcript(unterminated), std::nullopt);
  auto trailing = good;
  trailing.push_back(at("7", 8));
  EXPECT_NE(validate_transcript(trailing), std::nullopt);
  auto backwards = good;
  backwards[4].tick = 1;
  EXPECT_NE(validate_transcript(backwards), std::nullopt);
  EXPECT_NE(validate_transcript({at("abort", 0)}), std::nullopt);
}

}  // namespace
}  // namespace realmsim
