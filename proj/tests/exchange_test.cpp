#include "realmsim/exchange.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "realmsim/fixtures.hpp"
#include "realmsim/rng.hpp"

namespace realmsim::exchange {
namespace {

TEST(ExchangeLayoutTest, InputRecordBytes) {
  Bytes enc = encode_input({0x0102030405060708, {1, -1}});
  EXPECT_EQ(to_hex(enc),
            "4754"                // magic
            "00"                  // input
            "0807060504030201"    // request id
            "0800"                // payload length
            "01000000" "ffffffff" // values
            "00");                // not consumed
}

TEST(ExchangeLayoutTest, OutputRecordBytes) {
  EXPECT_EQ(to_hex(encode_output({7, 2}, true)), "4754" "01" "0700000000000000" "0400" "02000000" "01");
}

class ExchangeTest : public ::testing::Test {
 protected:
  ExchangeTest() : region_(slots(), 4) {}
  static std::vector<GranuleId> slots() {
    std::vector<GranuleId> s;
    for (GranuleId g = 0; g < kDefaultSlots; ++g) s.push_back(g);
    return s;
  }
  GranuleSpace memory_;
  NormalWorldPort port_{memory_};
  Region region_;
};

TEST_F(ExchangeTest, EmptyExchangePollsNothing) {
  size_t malformed = 0;
  EXPECT_TRUE(region_.poll(port_, &malformed).empty());
  EXPECT_EQ(malformed, 0u);
}

TEST_F(ExchangeTest, GarbageBeforeValidRecordCountsOnce) {
  Bytes slot(kGranuleSize, 0);
  const uint8_t garbage[] = {0x47, 0x99, 0x13, 0x37, 0xff, 0x47, 0x54, 0x05};
  std::copy(std::begin(garbage), std::end(garbage), slot.begin());
  Bytes rec = encode_input({9, {1, 2, 3, 4}});
  std::copy(rec.begin(), rec.end(), slot.begin() + sizeof(garbage));
  memory_.write(World::kNormal, 3, 0, slot);
  size_t malformed = 0;
  auto got = region_.poll(port_, &malformed);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].input.request_id, 9u);
  EXPECT_EQ(got[0].input.values, (std::vector<int32_t>{1, 2, 3, 4}));
  EXPECT_EQ(malformed, 1u);
}

TEST_F(ExchangeTest, TwoInputsReturnInWriteOrder) {
  region_.put_input(port_, {1, {1, 1, 1, 1}});
  region_.put_input(port_, {2, {2, 2, 2, 2}});
  auto got = region_.poll(port_);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].input.request_id, 1u);
  EXPECT_EQ(got[1].input.request_id, 2u);
  EXPECT_TRUE(region_.poll(port_).empty());
}

TEST_F(ExchangeTest, SeventeenthInputIsExchangeFull) {
  for (uint64_t i = 1; i <= kDefaultSlots; ++i) region_.put_input(port_, {i, {0, 0, 0, 0}});
  try {
    region_.put_input(port_, {17, {0, 0, 0, 0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kExchangeFull);
  }
}

TEST_F(ExchangeTest, OutputsReturnAndFreeSlots) {
  region_.put_input(port_, {5, {0, 0, 0, 0}});
  auto got = region_.poll(port_);
  region_.write_output(port_, got[0].slot, {5, 2});
  auto outs = region_.take_outputs(port_);
  ASSERT_EQ(outs.size(), 1u);
  EXPECT_EQ(outs[0], (InferenceOutput{5, 2}));
  EXPECT_EQ(memory_.granule(got[0].slot).contents, Bytes(kGranuleSize, 0));
  EXPECT_TRUE(region_.take_outputs(port_).empty());
}

TEST_F(ExchangeTest, ConsumedFlagSetInPlace) {
  region_.put_input(port_, {5, {0, 0, 0, 0}});
  auto got = region_.poll(port_);
  ScanResult s = scan(memory_.granule(got[0].slot).contents, 4);
  ASSERT_EQ(s.records.size(), 1u);
  EXPECT_TRUE(s.records[0].consumed);
}

TEST_F(ExchangeTest, WrongPayloadLengthIsMalformed) {
  memory_.write(World::kNormal, 0, 0, encode_input({1, {1, 2, 3}}));
  size_t malformed = 0;
  EXPECT_TRUE(region_.poll(port_, &malformed).empty());
  EXPECT_GT(malformed, 0u);
}

// 40 inputs interleaved with polls and outputs: every id comes back once,
// with the class an echo of the first value.
TEST_F(ExchangeTest, InterleavedBatchIsAMultisetEcho) {
  auto inputs = fixtures::inputs(40);
  DeterministicRng rng(8);
  std::vector<InferenceOutput> collected;
  size_t next = 0;
  while (collected.size() < inputs.size()) {
    for (uint64_t k = rng.below(5); k > 0 && next < inputs.size(); --k) {
      try {
        region_.put_input(port_, inputs[next]);
        ++next;
      } catch (const Error&) {
        break;
      }
    }
    if (rng.below(2)) {
      for (const auto& p : region_.poll(port_)) {
        region_.write_output(port_, p.slot,
                             {p.input.request_id, static_cast<uint32_t>(p.input.values[0] & 3)});
      }
    }
    for (const auto& o : region_.take_outputs(port_)) collected.push_back(o);
  }
  ASSERT_EQ(collected.size(), 40u);
  std::sort(collected.begin(), collected.end(),
            [](const auto& a, const auto& b) { return a.request_id < b.request_id; });
  for (size_t i = 0; i < 40; ++i) {
    EXPECT_EQ(collected[i].request_id, inputs[i].request_id);
    EXPECT_EQ(collected[i].class_index, static_cast<uint32_t>(inputs[i].values[0] & 3));
  }
}

TEST(ExchangeScanTest, RandomBytesNeverCrash) {
  DeterministicRng rng(12);
  for (int i = 0; i < 500; ++i) {
    Bytes slot(kGranuleSize);
    rng.fill(slot);
    if (i % 2 == 0) {
      Bytes rec = encode_input({1, {1, 2, 3, 4}});
      std::copy(rec.begin(), rec.end(), slot.begin() + rng.below(kGranuleSize - rec.size()));
    }
    ScanResult s = scan(slot, 4);
    for (const auto& r : s.records) EXPECT_LE(r.offset + r.size, kGranuleSize);
  }
}

}  // namespace
}  // namespace realmsim::exchange
