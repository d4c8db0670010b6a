#include "realmsim/provider.hpp"

#include <gtest/gtest.h>

#include <set>

#include "realmsim/error.hpp"
#include "realmsim/fixtures.hpp"
#include "realmsim/rmm.hpp"

namespace realmsim::provider {
namespace {

using protocol::Message;
using protocol::MessageType;

// A realm built from the fixture image plus a hand-driven client end of the
// provider protocol.
class ProviderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    image_ = fixtures::realm_image();
    realm_ = rmm_.rmi_realm_create(image_.params());
    GranuleId g = 0;
    for (const auto& seg : image_.segments) {
      rmm_.rmi_granule_delegate(g);
      rmm_.rmi_data_create(realm_, g++, seg.content, seg.target_addr);
    }
    rmm_.rmi_realm_activate(realm_);
    provider_ = std::make_unique<Provider>(config(), fixtures::model());
  }

  ProviderConfig config(uint64_t seed = 1) {
    return {fixtures::provider_static_seed(), fixtures::reference_values(image_), seed};
  }

  std::vector<Message> send(Session& s, const Message& m) {
    std::vector<Message> out;
    for (const Bytes& body : s.on_frame(m.body())) out.push_back(Message::parse(body));
    return out;
  }

  Bytes report_for(const Challenge& c) {
    return attestation::encode(rmm_.rsi_attestation_token(World::kRealm, realm_, c));
  }

  // Hello and Challenge; returns the challenge.
  Challenge hello(Session& s) {
    auto replies = send(s, {MessageType::kHello, {{2, client_.public_key}}});
    EXPECT_EQ(replies.size(), 2u);
    keys_ = crypto::client_session_keys(client_, to_array<32>(replies[0].at(2).as_bytes()));
    EXPECT_EQ(to_array<32>(replies[0].at(3).as_bytes()),
              confirmation_tag(keys_.receive, client_.public_key));
    return to_array<64>(replies[1].at(2).as_bytes());
  }

  model::ModelPackage open(const Message& m, uint64_t counter) {
    auto plain = crypto::open(keys_.receive, counter, sealed_associated_data(m.type),
                              m.at(2).as_bytes());
    EXPECT_TRUE(plain.has_value());
    return model::ModelPackage::decode(*plain);
  }

  Rmm rmm_{fixtures::machine()};
  image::RealmImage image_;
  RealmId realm_;
  std::unique_ptr<Provider> provider_;
  crypto::KxKeyPair client_ = crypto::KxKeyPair::from_seed(crypto::Seed{9});
  crypto::SessionKeys keys_;
};

TEST_F(ProviderTest, GenuineRealmReceivesPackageInThreeMessages) {
  Session s = provider_->open_session();
  Challenge c = hello(s);
  auto replies = send(s, {MessageType::kReport, {{2, report_for(c)}}});
  ASSERT_EQ(replies.size(), 1u);
  ASSERT_EQ(replies[0].type, MessageType::kPackage);
  EXPECT_EQ(open(replies[0], 0), fixtures::model());
  EXPECT_EQ(s.provider_messages(), 3u);
  EXPECT_EQ(s.state(), Session::State::kProvisioned);
}

TEST_F(ProviderTest, PackageCiphertextHidesWeights) {
  Session s = provider_->open_session();
  Challenge c = hello(s);
  auto replies = send(s, {MessageType::kReport, {{2, report_for(c)}}});
  const Bytes& ct = replies[0].at(2).as_bytes();
  EXPECT_FALSE(contains(ct, fixtures::model().weight_encoding()));
  EXPECT_FALSE(contains(ct, fixtures::model().digest));
}

TEST_F(ProviderTest, ReplayedReportIsRefused) {
  Session first = provider_->open_session();
  Challenge c = hello(first);
  Bytes report = report_for(c);
  send(first, {MessageType::kReport, {{2, report}}});
  Session second = provider_->open_session();
  hello(second);
  auto replies = send(second, {MessageType::kReport, {{2, report}}});
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(replies[0].type, MessageType::kRefused);
  EXPECT_EQ(replies[0].at(2).as_text(), "ChallengeMismatch");
  EXPECT_TRUE(second.closed());
}

TEST_F(ProviderTest, ReportBeforeChallengeIsProtocolError) {
  Session s = provider_->open_session();
  auto replies = send(s, {MessageType::kReport, {{2, report_for(Challenge{})}}});
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(replies[0].at(2).as_text(), kProtocolError);
  EXPECT_TRUE(s.closed());
  EXPECT_TRUE(s.delivered().empty());
}

TEST_F(ProviderTest, GarbageFrameIsProtocolError) {
  Session s = provider_->open_session();
  auto bodies = s.on_frame(Bytes{0xff, 0x00});
  ASSERT_EQ(bodies.size(), 1u);
  EXPECT_EQ(Message::parse(bodies[0]).at(2).as_text(), kProtocolError);
}

TEST_F(ProviderTest, ChallengesAreUniqueAndDeterministic) {
  std::set<Challenge> seen;
  for (int i = 0; i < 10000; ++i) EXPECT_TRUE(seen.insert(provider_->issue_challenge()).second);
  EXPECT_EQ(provider_->issued_challenges(), 10000u);
  Provider a(config(5), fixtures::model());
  Provider b(config(5), fixtures::model());
  Provider c(config(6), fixtures::model());
  Challenge ca = a.issue_challenge();
  EXPECT_EQ(ca, b.issue_challenge());
  EXPECT_NE(ca, c.issue_challenge());
}

TEST_F(ProviderTest, UpdateDeliveredThenUpToDate) {
  provider_->publish(fixtures::model(2));
  Session s = provider_->open_session();
  Challenge c = hello(s);
  auto pkg = send(s, {MessageType::kReport, {{2, report_for(c)}}});
  model::ModelPackage v = open(pkg[0], 0);
  EXPECT_EQ(v.version, 2u);
  rmm_.rsi_measurement_extend(World::kRealm, realm_, 0, v.digest);

  provider_->publish(fixtures::model(3));
  auto ch = send(s, {MessageType::kUpdateQuery, {{2, uint64_t{2}}}});
  ASSERT_EQ(ch[0].type, MessageType::kChallenge);
  auto upd = send(s, {MessageType::kReport, {{2, report_for(to_array<64>(ch[0].at(2).as_bytes()))}}});
  ASSERT_EQ(upd[0].type, MessageType::kUpdate);
  model::ModelPackage v3 = open(upd[0], 1);
  EXPECT_EQ(v3.version, 3u);
  rmm_.rsi_measurement_extend(World::kRealm, realm_, 0, v3.digest);

  ch = send(s, {MessageType::kUpdateQuery, {{2, uint64_t{3}}}});
  auto same = send(s, {MessageType::kReport, {{2, report_for(to_array<64>(ch[0].at(2).as_bytes()))}}});
  EXPECT_EQ(same[0].type, MessageType::kUpToDate);
  EXPECT_EQ(s.delivered().size(), 2u);
}

TEST_F(ProviderTest, TamperedRuntimeMeasurementIsRefused) {
  provider_->publish(fixtures::model(2));
  Session s = provider_->open_session();
  Challenge c = hello(s);
  auto pkg = send(s, {MessageType::kReport, {{2, report_for(c)}}});
  Digest wrong = open(pkg[0], 0).digest;
  wrong[0] ^= 1;
  rmm_.rsi_measurement_extend(World::kRealm, realm_, 0, wrong);
  provider_->publish(fixtures::model(3));
  auto ch = send(s, {MessageType::kUpdateQuery, {{2, uint64_t{2}}}});
  auto r = send(s, {MessageType::kReport, {{2, report_for(to_array<64>(ch[0].at(2).as_bytes()))}}});
  ASSERT_EQ(r[0].type, MessageType::kRefused);
  EXPECT_EQ(r[0].at(2).as_text(), kRuntimeStateMismatch);
  EXPECT_EQ(s.delivered().size(), 1u);
}

TEST_F(ProviderTest, PublishRequiresIncreasingVersion) {
  provider_->publish(fixtures::model(2));
  try {
    provider_->publish(fixtures::model(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  EXPECT_THROW(provider_->publish(fixtures::model(1)), Error);
  EXPECT_EQ(provider_->versions().size(), 2u);
}

// Random message sequences: a package only ever follows an accepted verdict.
TEST_F(ProviderTest, NoPackageWithoutAccept) {
  DeterministicRng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    Session s = provider_->open_session();
    std::optional<Challenge> last;
    for (int i = 0; i < 6 && !s.closed(); ++i) {
      Message m{MessageType::kHello, {}};
      switch (rng.below(5)) {
        case 0: m = {MessageType::kHello, {{2, client_.public_key}}}; break;
        case 1: {
          Challenge c = last && rng.below(2) ? *last : rng.bytes<64>();
          m = {MessageType::kReport, {{2, report_for(c)}}};
          break;
        }
        case 2: m = {MessageType::kUpdateQuery, {{2, rng.below(4)}}}; break;
        case 3: {
          Bytes junk(rng.below(64));
          rng.fill(junk);
          m = {MessageType::kReport, {{2, junk}}};
          break;
        }
        default: m = {static_cast<MessageType>(1 + rng.below(8)), {}}; break;
      }
      size_t verdicts_before = s.verdicts().size();
      for (const Bytes& body : s.on_frame(m.body())) {
        Message reply = Message::parse(body);
        if (reply.type == MessageType::kChallenge) last = to_array<64>(reply.at(2).as_bytes());
        if (reply.type == MessageType::kPackage || reply.type == MessageType::kUpdate) {
          ASSERT_GT(s.verdicts().size(), verdicts_before);
          EXPECT_TRUE(s.verdicts().back().accepted);
        }
      }
    }
    size_t accepts = 0;
    for (const auto& v : s.verdicts()) accepts += v.accepted;
    EXPECT_LE(s.delivered().size(), accepts);
  }
}

TEST_F(ProviderTest, TranscriptRecordsExactFrames) {
  Session s = provider_->open_session();
  Message hello_msg{MessageType::kHello, {{2, client_.public_key}}};
  s.on_frame(hello_msg.body());
  ASSERT_EQ(s.transcript().size(), 3u);
  EXPECT_EQ(s.transcript()[0].direction, Direction::kFromRealm);
  EXPECT_EQ(s.transcript()[0].frame, protocol::frame(hello_msg.body()));
  EXPECT_LT(s.transcript()[0].tick, s.transcript()[1].tick);
}

}  // namespace
}  // namespace realmsim::provider
