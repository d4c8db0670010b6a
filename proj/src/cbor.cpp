#include "realmsim/cbor.hpp"

#include <algorithm>

#include "realmsim/error.hpp"

namespace realmsim::cbor {

namespace {

constexpr uint8_t kMajorUnsigned = 0;
constexpr uint8_t kMajorNegative = 1;
constexpr uint8_t kMajorBytes = 2;
constexpr uint8_t kMajorText = 3;
constexpr uint8_t kMajorArray = 4;
constexpr uint8_t kMajorMap = 5;
constexpr uint8_t kSimpleNull = 0xf6;
constexpr int kMaxDepth = 16;

void put_head(Bytes& out, uint8_t major, uint64_t arg) {
  uint8_t m = static_cast<uint8_t>(major << 5);
  if (arg < 24) {
    out.push_back(m | static_cast<uint8_t>(arg));
  } else if (arg <= 0xff) {
    out.push_back(m | 24);
    out.push_back(static_cast<uint8_t>(arg));
  } else if (arg <= 0xffff) {
    out.push_back(m | 25);
    for (int i = 1; i >= 0; --i) out.push_back(static_cast<uint8_t>(arg >> (8 * i)));
  } else if (arg <= 0xffffffff) {
    out.push_back(m | 26);
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(arg >> (8 * i)));
  } else {
    out.push_back(m | 27);
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<uint8_t>(arg >> (8 * i)));
  }
}

[[noreturn]] void fail(size_t offset, const std::string& what) {
  throw Error(ErrorCode::kDecode, what + " at offset " + std::to_string(offset));
}

class Decoder {
 public:
  explicit Decoder(ByteView in) : in_(in) {}

  Value parse(int depth) {
    if (depth > kMaxDepth) fail(pos_, "nesting too deep");
    size_t start = pos_;
    uint8_t initial = next_byte();
    if (initial == kSimpleNull) return Value(Null{});
    uint8_t major = initial >> 5;
    uint64_t arg = read_arg(initial & 0x1f, start);
    switch (major) {
      case kMajorUnsigned:
        return Value(arg);
      case kMajorNegative:
        return Value(Negative{arg});
      case kMajorBytes: {
        ByteView body = take(arg, start);
        return Value(Bytes(body.begin(), body.end()));
      }
      case kMajorText: {
        ByteView body = take(arg, start);
        return Value(std::string(body.begin(), body.end()));
      }
      case kMajorArray: {
        check_count(arg, start);
        Array items;
        items.reserve(arg);
        for (uint64_t i = 0; i < arg; ++i) items.push_back(parse(depth + 1));
        return Value(std::move(items));
      }
      case kMajorMap: {
        check_count(arg, start);
        Map entries;
        entries.reserve(arg);
        for (uint64_t i = 0; i < arg; ++i) {
          size_t key_at = pos_;
          uint8_t key_initial = next_byte();
          if ((key_initial >> 5) != kMajorUnsigned) fail(key_at, "map key is not an unsigned integer");
          uint64_t key = read_arg(key_initial & 0x1f, key_at);
          if (!entries.empty() && key <= entries.back().first) {
            fail(key_at, "map keys not strictly ascending");
          }
          entries.emplace_back(key, parse(depth + 1));
        }
        return Value(std::move(entries));
      }
      default:
        fail(start, "unsupported major type " + std::to_string(major));
    }
  }

  size_t position() const { return pos_; }

 private:
  uint8_t next_byte() {
    if (pos_ >= in_.size()) fail(pos_, "unexpected end of input");
    return in_[pos_++];
  }

  uint64_t read_arg(uint8_t info, size_t start) {
    if (info < 24) return info;
    int width;
    switch (info) {
      case 24: width = 1; break;
      case 25: width = 2; break;
      case 26: width = 4; break;
      case 27: width = 8; break;
      default: fail(start, "indefinite or reserved length");
    }
    uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | next_byte();
    uint64_t floor = width == 1 ? 24 : (uint64_t{1} << (8 * width / 2));
    if (v < floor) fail(start, "non-shortest integer encoding");
    return v;
  }

  ByteView take(uint64_t length, size_t start) {
    if (length > in_.size() - pos_) fail(start, "length exceeds input");
    ByteView out = in_.subspan(pos_, length);
    pos_ += length;
    return out;
  }

  // Every element needs at least one byte, which bounds allocation.
  void check_count(uint64_t count, size_t start) {
    if (count > in_.size() - pos_) fail(start, "element count exceeds input");
  }

  ByteView in_;
  size_t pos_ = 0;
};

const char* kind_name(size_t index) {
  static constexpr const char* kNames[] = {"null",  "unsigned", "negative", "bytes",
                                           "text",  "array",    "map"};
  return kNames[index];
}

}  // namespace

void encode_into(Bytes& out, const Value& value) {
  std::visit(
      [&out](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Null>) {
          out.push_back(kSimpleNull);
        } else if constexpr (std::is_same_v<T, uint64_t>) {
          put_head(out, kMajorUnsigned, v);
        } else if constexpr (std::is_same_v<T, Negative>) {
          put_head(out, kMajorNegative, v.magnitude_minus_one);
        } else if constexpr (std::is_same_v<T, Bytes>) {
          put_head(out, kMajorBytes, v.size());
          append(out, v);
        } else if constexpr (std::is_same_v<T, std::string>) {
          put_head(out, kMajorText, v.size());
          append(out, as_bytes(v));
        } else if constexpr (std::is_same_v<T, Array>) {
          put_head(out, kMajorArray, v.size());
          for (const Value& item : v) encode_into(out, item);
        } else if constexpr (std::is_same_v<T, Map>) {
          put_head(out, kMajorMap, v.size());
          for (size_t i = 0; i < v.size(); ++i) {
            if (i > 0 && v[i].first <= v[i - 1].first) {
              throw Error(ErrorCode::kConfig, "map built with non-ascending keys");
            }
            put_head(out, kMajorUnsigned, v[i].first);
            encode_into(out, v[i].second);
          }
        }
      },
      value.data_);
}

Bytes encode(const Value& value) {
  Bytes out;
  encode_into(out, value);
  return out;
}

Value decode(ByteView bytes) {
  Decoder decoder(bytes);
  Value v = decoder.parse(0);
  if (decoder.position() != bytes.size()) fail(decoder.position(), "trailing bytes");
  return v;
}

#define REALMSIM_CBOR_ACCESSOR(type, name, label)                                          \
  const type& Value::name() const {                                                       \
    if (auto* p = std::get_if<type>(&data_)) return *p;                                   \
    throw Error(ErrorCode::kDecode,                                                       \
                std::string("expected ") + label + ", found " + kind_name(data_.index())); \
  }

REALMSIM_CBOR_ACCESSOR(Bytes, as_bytes, "bytes")
REALMSIM_CBOR_ACCESSOR(std::string, as_text, "text")
REALMSIM_CBOR_ACCESSOR(Array, as_array, "array")
REALMSIM_CBOR_ACCESSOR(Map, as_map, "map")

#undef REALMSIM_CBOR_ACCESSOR

uint64_t Value::as_uint() const {
  if (auto* p = std::get_if<uint64_t>(&data_)) return *p;
  throw Error(ErrorCode::kDecode,
              std::string("expected unsigned, found ") + kind_name(data_.index()));
}

MapReader::MapReader(const Value& value, std::initializer_list<uint64_t> required,
                     std::initializer_list<uint64_t> optional)
    : map_(&value.as_map()) {
  for (const auto& [key, _] : *map_) {
    bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                 std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) throw Error(ErrorCode::kDecode, "unexpected map key " + std::to_string(key));
  }
  for (uint64_t key : required) {
    if (find(key) == nullptr) {
      throw Error(ErrorCode::kDecode, "missing map key " + std::to_string(key));
    }
  }
}

const Value* MapReader::find(uint64_t key) const {
  for (const auto& [k, v] : *map_) {
    if (k == key) return &v;
  }
  return nullptr;
}

const Value& MapReader::at(uint64_t key) const {
  const Value* v = find(key);
  if (v == nullptr) throw Error(ErrorCode::kDecode, "missing map key " + std::to_string(key));
  return *v;
}

}  // namespace realmsim::cbor
