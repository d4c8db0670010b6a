#include "realmsim/realm_runtime.hpp"

#include <gtest/gtest.h>

#include <functional>

#include "oracle.hpp"
#include "realmsim/fixtures.hpp"
#include "realmsim/rng.hpp"

namespace realmsim {
namespace {

// Runs an arbitrary body inside one realm entry.
class Scripted : public Guest {
 public:
  std::function<void(GuestEnv&)> body;
  void step(GuestEnv& env) override {
    if (body) body(env);
  }
  std::unique_ptr<Guest> clone() const override { return std::make_unique<Scripted>(*this); }
};

class RuntimeTest : public ::testing::Test {
 protected:
  void SetUp() override {
    realm_ = rmm_.rmi_realm_create({fixtures::personalization(), {0, 52}});
    rmm_.rmi_granule_delegate(40);
    rmm_.rmi_data_create(realm_, 40, Bytes(kGranuleSize, 1), fixtures::kRealmBase);
    auto g = std::make_unique<Scripted>();
    guest_ = g.get();
    rmm_.attach_guest(realm_, std::move(g));
    rmm_.rmi_realm_activate(realm_);
  }

  void inside(std::function<void(GuestEnv&)> f) {
    guest_->body = std::move(f);
    rmm_.rmi_rec_enter(realm_);
  }

  ErrorCode code_inside(std::function<void(GuestEnv&)> f) {
    std::optional<ErrorCode> code;
    inside([&](GuestEnv& env) {
      try {
        f(env);
      } catch (const Error& e) {
        code = e.code();
      }
    });
    EXPECT_TRUE(code.has_value());
    return code.value_or(ErrorCode::kIo);
  }

  const Digest& rem0() const { return rmm_.descriptor(realm_).rem[0]; }

  exchange::Region region() const {
    std::vector<GranuleId> slots;
    for (GranuleId g = 0; g < 16; ++g) slots.push_back(g);
    return {slots, fixtures::kFeatures};
  }

  Rmm rmm_{fixtures::machine()};
  RealmId realm_;
  Scripted* guest_ = nullptr;
  RealmRuntime runtime_{nullptr, region(), 1};
};

TEST_F(RuntimeTest, LoadModelExtendsRemOnce) {
  model::ModelPackage m = fixtures::model();
  inside([&](GuestEnv& env) { runtime_.load_model(env, m); });
  EXPECT_EQ(rem0(), oracle::extend({}, oracle::raw(m.digest)));
  for (size_t i = 1; i < attestation::kRemSlots; ++i) {
    EXPECT_EQ(rmm_.descriptor(realm_).rem[i], kZeroDigest);
  }
}

TEST_F(RuntimeTest, CorruptPackageLeavesRemUnchanged) {
  model::ModelPackage m = fixtures::model();
  m.weights[2] ^= 0x10;
  EXPECT_EQ(code_inside([&](GuestEnv& env) { runtime_.load_model(env, m); }),
            ErrorCode::kIntegrity);
  EXPECT_EQ(rem0(), kZeroDigest);
  EXPECT_FALSE(runtime_.has_model());
}

TEST_F(RuntimeTest, SecondLoadChainsDigests) {
  model::ModelPackage v1 = fixtures::model(1), v2 = fixtures::model(2);
  inside([&](GuestEnv& env) {
    runtime_.load_model(env, v1);
    runtime_.load_model(env, v2);
  });
  EXPECT_EQ(rem0(), oracle::extend(oracle::extend({}, oracle::raw(v1.digest)),
                                   oracle::raw(v2.digest)));
  EXPECT_EQ(runtime_.model_version(), 2u);
}

TEST_F(RuntimeTest, InferWithoutModelIsStateError) {
  EXPECT_EQ(code_inside([&](GuestEnv& env) { runtime_.infer(env, {1, {0, 0, 0, 0}}); }),
            ErrorCode::kState);
}

TEST_F(RuntimeTest, InferMatchesOracleAndEchoesIds) {
  model::ModelPackage m = fixtures::model();
  inside([&](GuestEnv& env) {
    runtime_.load_model(env, m);
    for (const auto& in : fixtures::inputs(50)) {
      exchange::InferenceOutput out = runtime_.infer(env, in);
      EXPECT_EQ(out.request_id, in.request_id);
      EXPECT_EQ(out.class_index, oracle::classify(m.weights, m.bias, in.values));
    }
  });
  EXPECT_EQ(rmm_.descriptor(realm_).inference_count, 50u);
}

TEST_F(RuntimeTest, FifthInferenceIsTheLast) {
  model::Policy p;
  p.max_inferences = 5;
  inside([&](GuestEnv& env) { runtime_.load_model(env, fixtures::model(1, p)); });
  for (int i = 0; i < 5; ++i) {
    inside([&](GuestEnv& env) {
      EXPECT_EQ(runtime_.enforce_policy(env), PolicyDecision::kContinue);
      runtime_.infer(env, {uint64_t(i + 1), {0, 0, 0, 0}});
    });
  }
  inside([&](GuestEnv& env) {
    EXPECT_EQ(runtime_.enforce_policy(env), PolicyDecision::kInferenceLimit);
  });
  EXPECT_EQ(code_inside([&](GuestEnv& env) { runtime_.infer(env, {6, {0, 0, 0, 0}}); }),
            ErrorCode::kPolicyExhausted);
  EXPECT_EQ(rmm_.descriptor(realm_).inference_count, 5u);
}

TEST(PolicyTest, ExpiryIsStrict) {
  model::Policy p;
  p.valid_until = 100;
  EXPECT_EQ(evaluate_policy(p, 0, 100), PolicyDecision::kContinue);
  EXPECT_EQ(evaluate_policy(p, 0, 101), PolicyDecision::kExpired);
}

TEST(PolicyTest, LimitTakesPrecedenceOverExpiry) {
  model::Policy p;
  p.max_inferences = 1;
  p.valid_until = 0;
  EXPECT_EQ(evaluate_policy(p, 1, 5), PolicyDecision::kInferenceLimit);
  EXPECT_EQ(evaluate_policy(p, 0, 5), PolicyDecision::kExpired);
}

TEST_F(RuntimeTest, UnlimitedPolicyNeverStops) {
  inside([&](GuestEnv& env) {
    runtime_.load_model(env, fixtures::model());
    for (uint64_t i = 1; i <= 10000; ++i) {
      ASSERT_EQ(runtime_.enforce_policy(env), PolicyDecision::kContinue);
      runtime_.infer(env, {i, {1, 2, 3, 4}});
    }
  });
  EXPECT_EQ(rmm_.descriptor(realm_).inference_count, 10000u);
}

// Random interleavings of host writes, polls, inferences and policy checks
// never complete more inferences than the limit allows.
TEST_F(RuntimeTest, PolicySafetyUnderRandomSchedules) {
  DeterministicRng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Rmm machine(fixtures::machine());
    RealmId r = machine.rmi_realm_create({fixtures::personalization(), {0, 52}});
    auto g = std::make_unique<Scripted>();
    Scripted* guest = g.get();
    machine.attach_guest(r, std::move(g));
    machine.rmi_realm_activate(r);
    exchange::NormalWorldPort host(machine.memory());
    RealmRuntime rt(nullptr, region(), 1);
    model::Policy p;
    p.max_inferences = 1 + rng.below(12);
    guest->body = [&](GuestEnv& env) { rt.load_model(env, fixtures::model(1, p)); };
    machine.rmi_rec_enter(r);
    uint64_t next_id = 1;
    for (int step = 0; step < 60; ++step) {
      uint64_t action = rng.below(4);
      if (action == 0) {
        try {
          region().put_input(host, {next_id++, {1, 1, 1, 1}});
        } catch (const Error&) {
        }
        continue;
      }
      guest->body = [&](GuestEnv& env) {
        try {
          if (action == 1) {
            for (const auto& in : rt.poll_exchange(env)) rt.infer(env, in.input);
          } else if (action == 2) {
            rt.infer(env, {next_id++, {2, 2, 2, 2}});
          } else {
            rt.enforce_policy(env);
          }
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::kPolicyExhausted);
        }
      };
      machine.rmi_rec_enter(r);
      ASSERT_LE(machine.descriptor(r).inference_count, *p.max_inferences);
    }
  }
}

TEST_F(RuntimeTest, PollReturnsWriteOrderAndCountsGarbage) {
  exchange::NormalWorldPort host(rmm_.memory());
  region().put_input(host, {11, {1, 2, 3, 4}});
  region().put_input(host, {12, {5, 6, 7, 8}});
  rmm_.memory().write(World::kNormal, 5, 0, Bytes{0xde, 0xad});
  inside([&](GuestEnv& env) {
    auto got = runtime_.poll_exchange(env);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].input.request_id, 11u);
    EXPECT_EQ(got[1].input.request_id, 12u);
    EXPECT_EQ(runtime_.diagnostics().malformed_records, 1u);
    EXPECT_TRUE(runtime_.poll_exchange(env).empty());
  });
}

TEST(RuntimeConfigTest, EncodeDecode) {
  RuntimeConfig c = fixtures::runtime_config(40);
  Bytes enc = c.encode();
  EXPECT_EQ(enc.size(), RuntimeConfig::kEncodedSize);
  enc.resize(kGranuleSize, 0xcc);
  EXPECT_EQ(RuntimeConfig::decode(enc), c);
  enc[0] = 'X';
  EXPECT_THROW(RuntimeConfig::decode(enc), Error);
}

}  // namespace
}  // namespace realmsim
