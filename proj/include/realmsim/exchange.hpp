#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "realmsim/bytes.hpp"
#include "realmsim/error.hpp"
#include "realmsim/granule_space.hpp"

// Shared-memory exchange between the normal-world app and the realm. Each
// slot is one normal-world granule holding records laid out as
//
//   0x47 0x54 | type u8 | request id le64 | payload length le16 | payload |
//   consumed u8
//
// where type 0 carries D little-endian int32 inputs and type 1 carries a
// little-endian u32 class index. Zero bytes between records are padding.
namespace realmsim::exchange {

inline constexpr uint8_t kMagic[2] = {0x47, 0x54};
inline constexpr size_t kHeaderSize = 13;  // magic, type, id, length
inline constexpr size_t kDefaultSlots = 16;

enum class RecordType : uint8_t { kInput = 0, kOutput = 1 };

struct InferenceInput {
  uint64_t request_id = 0;
  std::vector<int32_t> values;
  bool operator==(const InferenceInput&) const = default;
};

struct InferenceOutput {
  uint64_t request_id = 0;
  uint32_t class_index = 0;
  bool operator==(const InferenceOutput&) const = default;
};

Bytes encode_input(const InferenceInput& input, bool consumed = false);
Bytes encode_output(const InferenceOutput& output, bool consumed = false);

struct Record {
  RecordType type;
  uint64_t request_id;
  Bytes payload;
  bool consumed;
  size_t offset;  // of the magic
  size_t size;    // whole record

  size_t consumed_offset() const { return offset + size - 1; }
};

struct ScanResult {
  std::vector<Record> records;
  size_t malformed = 0;  // maximal runs of bytes that are neither records nor padding
};

// Parses one slot. Input payloads must be exactly features * 4 bytes.
ScanResult scan(ByteView slot, size_t features);

std::vector<int32_t> input_values(const Record& record);
uint32_t output_class(const Record& record);

// Normal-world view of memory for the host side of the exchange.
class NormalWorldPort {
 public:
  explicit NormalWorldPort(GranuleSpace& memory) : memory_(memory) {}
  Bytes read(GranuleId g, size_t offset, size_t length) {
    return memory_.read(World::kNormal, g, offset, length);
  }
  void write(GranuleId g, size_t offset, ByteView data) {
    memory_.write(World::kNormal, g, offset, data);
  }

 private:
  GranuleSpace& memory_;
};

struct PolledInput {
  GranuleId slot;
  InferenceInput input;
};

// A bounded set of slots. `Port` is anything with read/write over granules:
// NormalWorldPort on the host side, a GuestEnv inside the VM.
class Region {
 public:
  Region() = default;
  Region(std::vector<GranuleId> slots, size_t features)
      : slots_(std::move(slots)), features_(features) {}

  const std::vector<GranuleId>& slots() const { return slots_; }
  size_t features() const { return features_; }

  // Host side. Throws Error(ExchangeFull) when every slot is occupied.
  template <typename Port>
  void put_input(Port& port, const InferenceInput& input) const {
    if (input.values.size() != features_) {
      throw Error(ErrorCode::kBounds, "input has wrong feature count");
    }
    for (GranuleId slot : slots_) {
      Bytes contents = port.read(slot, 0, kGranuleSize);
      if (std::all_of(contents.begin(), contents.end(), [](uint8_t b) { return b == 0; })) {
        port.write(slot, 0, encode_input(input));
        return;
      }
    }
    throw Error(ErrorCode::kExchangeFull, std::to_string(slots_.size()) + " slots occupied");
  }

  // Host side: collects finished outputs in request-id order and frees
  // their slots.
  template <typename Port>
  std::vector<InferenceOutput> take_outputs(Port& port) const {
    std::vector<InferenceOutput> out;
    for (GranuleId slot : slots_) {
      ScanResult scanned = scan(port.read(slot, 0, kGranuleSize), features_);
      bool any = false;
      for (const Record& r : scanned.records) {
        if (r.type == RecordType::kOutput && !r.consumed) {
          out.push_back({r.request_id, output_class(r)});
          any = true;
        }
      }
      if (any) port.write(slot, 0, Bytes(kGranuleSize, 0));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.request_id < b.request_id; });
    return out;
  }

  // VM side: unconsumed inputs in request-id order, each marked consumed.
  template <typename Port>
  std::vector<PolledInput> poll(Port& port, size_t* malformed = nullptr) const {
    std::vector<PolledInput> out;
    for (GranuleId slot : slots_) {
      ScanResult scanned = scan(port.read(slot, 0, kGranuleSize), features_);
      if (malformed != nullptr) *malformed += scanned.malformed;
      for (const Record& r : scanned.records) {
        if (r.type != RecordType::kInput || r.consumed) continue;
        const uint8_t one = 1;
        port.write(slot, r.consumed_offset(), ByteView(&one, 1));
        out.push_back({slot, {r.request_id, input_values(r)}});
      }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.input.request_id < b.input.request_id;
    });
    return out;
  }

  // VM side: replaces the slot's contents with a single output record.
  template <typename Port>
  void write_output(Port& port, GranuleId slot, const InferenceOutput& output) const {
    Bytes contents(kGranuleSize, 0);
    Bytes record = encode_output(output);
    std::copy(record.begin(), record.end(), contents.begin());
    port.write(slot, 0, contents);
  }

 private:
  std::vector<GranuleId> slots_;
  size_t features_ = 0;
};

}  // namespace realmsim::exchange
