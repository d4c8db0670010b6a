#include "realmsim/exchange.hpp"

#include "realmsim/model.hpp"

namespace realmsim::exchange {

namespace {

Bytes encode_record(RecordType type, uint64_t request_id, ByteView payload, bool consumed) {
  Bytes out{kMagic[0], kMagic[1], static_cast<uint8_t>(type)};
  append_le64(out, request_id);
  append_le16(out, static_cast<uint16_t>(payload.size()));
  append(out, payload);
  out.push_back(consumed ? 1 : 0);
  return out;
}

// Parses a record starting at `pos`, or returns false if the bytes there do
// not form a well-formed record.
bool parse_at(ByteView slot, size_t pos, size_t features, Record& out) {
  if (slot.size() - pos < kHeaderSize + 1) return false;
  if (slot[pos] != kMagic[0] || slot[pos + 1] != kMagic[1]) return false;
  uint8_t type = slot[pos + 2];
  if (type > static_cast<uint8_t>(RecordType::kOutput)) return false;
  uint16_t length = load_le16(slot.subspan(pos + 11, 2));
  size_t expected = type == 0 ? features * 4 : 4;
  if (length != expected) return false;
  size_t total = kHeaderSize + length + 1;
  if (slot.size() - pos < total) return false;
  uint8_t consumed = slot[pos + total - 1];
  if (consumed > 1) return false;
  out.type = static_cast<RecordType>(type);
  out.request_id = load_le64(slot.subspan(pos + 3, 8));
  ByteView payload = slot.subspan(pos + kHeaderSize, length);
  out.payload.assign(payload.begin(), payload.end());
  out.consumed = consumed == 1;
  out.offset = pos;
  out.size = total;
  if (out.type == RecordType::kInput) {
    for (int32_t v : input_values(out)) {
      if (v < -model::kMaxMagnitude || v > model::kMaxMagnitude) return false;
    }
  }
  return true;
}

}  // namespace

Bytes encode_input(const InferenceInput& input, bool consumed) {
  Bytes payload;
  for (int32_t v : input.values) append_le32(payload, static_cast<uint32_t>(v));
  return encode_record(RecordType::kInput, input.request_id, payload, consumed);
}

Bytes encode_output(const InferenceOutput& output, bool consumed) {
  Bytes payload;
  append_le32(payload, output.class_index);
  return encode_record(RecordType::kOutput, output.request_id, payload, consumed);
}

ScanResult scan(ByteView slot, size_t features) {
  ScanResult result;
  bool in_garbage = false;
  size_t pos = 0;
  while (pos < slot.size()) {
    Record record;
    if (parse_at(slot, pos, features, record)) {
      pos += record.size;
      result.records.push_back(std::move(record));
      in_garbage = false;
    } else if (slot[pos] == 0) {
      ++pos;
      in_garbage = false;
    } else {
      if (!in_garbage) ++result.malformed;
      in_garbage = true;
      ++pos;
    }
  }
  return result;
}

std::vector<int32_t> input_values(const Record& record) {
  std::vector<int32_t> values(record.payload.size() / 4);
  for (size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<int32_t>(load_le32(ByteView(record.payload).subspan(4 * i, 4)));
  }
  return values;
}

uint32_t output_class(const Record& record) { return load_le32(record.payload); }

}  // namespace realmsim::exchange
