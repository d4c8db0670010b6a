#pragma once

#include <concepts>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "realmsim/bytes.hpp"

// Canonical CBOR subset used for every on-wire and on-disk structure: unsigned
// and negative integers, byte and text strings, arrays, maps keyed by
// unsigned integers in strictly ascending order, and null. Lengths are always
// definite and heads always use the shortest form; the decoder rejects
// anything else so that encode(decode(b)) == b for every accepted b.
namespace realmsim::cbor {

class Value;

using Array = std::vector<Value>;
using Map = std::vector<std::pair<uint64_t, Value>>;

struct Negative {
  uint64_t magnitude_minus_one;  // value = -1 - magnitude_minus_one
  bool operator==(const Negative&) const = default;
};

struct Null {
  bool operator==(const Null&) const = default;
};

class Value {
 public:
  Value() : data_(Null{}) {}
  template <std::unsigned_integral T>
    requires(!std::same_as<T, bool>)
  Value(T v) : data_(static_cast<uint64_t>(v)) {}
  Value(Negative v) : data_(v) {}
  Value(Bytes v) : data_(std::move(v)) {}
  Value(ByteView v) : data_(Bytes(v.begin(), v.end())) {}
  Value(std::string v) : data_(std::move(v)) {}
  Value(const char* v) : data_(std::string(v)) {}
  Value(Array v) : data_(std::move(v)) {}
  Value(Map v) : data_(std::move(v)) {}
  Value(Null v) : data_(v) {}

  template <size_t N>
  Value(const std::array<uint8_t, N>& v) : data_(Bytes(v.begin(), v.end())) {}

  bool is_null() const { return std::holds_alternative<Null>(data_); }

  // Accessors throw Error(Decode) naming the expected type on mismatch.
  uint64_t as_uint() const;
  const Bytes& as_bytes() const;
  const std::string& as_text() const;
  const Array& as_array() const;
  const Map& as_map() const;

  bool operator==(const Value&) const = default;

 private:
  friend Bytes encode(const Value& value);
  friend void encode_into(Bytes& out, const Value& value);
  std::variant<Null, uint64_t, Negative, Bytes, std::string, Array, Map> data_;
};

Bytes encode(const Value& value);

// Throws Error(Decode) with the byte offset of the first violation.
Value decode(ByteView bytes);

// Schema helper over a decoded map: every key must be in `required` or
// `optional`, and every required key must be present.
class MapReader {
 public:
  MapReader(const Value& value, std::initializer_list<uint64_t> required,
            std::initializer_list<uint64_t> optional = {});

  const Value& at(uint64_t key) const;
  const Value* find(uint64_t key) const;

  template <size_t N>
  std::array<uint8_t, N> fixed(uint64_t key) const {
    return to_array<N>(at(key).as_bytes());
  }

 private:
  const Map* map_;
};

}  // namespace realmsim::cbor
