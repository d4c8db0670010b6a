#pragma once

#include <array>
#include <initializer_list>
#include <optional>

#include "realmsim/bytes.hpp"

// Thin wrappers over libsodium. All key material is derived from 32-byte
// seeds so every run of the simulator is reproducible.
namespace realmsim::crypto {

using SymmetricKey = std::array<uint8_t, 32>;
using Seed = std::array<uint8_t, 32>;

Digest sha256(ByteView data);
Digest sha256(std::initializer_list<ByteView> parts);

Digest hmac_sha256(const SymmetricKey& key, ByteView data);

class SigningKey {
 public:
  static SigningKey from_seed(const Seed& seed);

  const PublicKey& public_key() const { return public_key_; }
  const Seed& seed() const { return seed_; }
  Signature sign(ByteView message) const;

 private:
  Seed seed_{};
  PublicKey public_key_{};
  std::array<uint8_t, 64> secret_{};
};

bool verify_signature(const PublicKey& key, ByteView message, const Signature& signature);

struct KxKeyPair {
  PublicKey public_key{};
  std::array<uint8_t, 32> secret_key{};

  static KxKeyPair from_seed(const Seed& seed);
};

struct SessionKeys {
  SymmetricKey receive{};
  SymmetricKey transmit{};
};

// Throws Error(Protocol) if the peer key is unacceptable.
SessionKeys client_session_keys(const KxKeyPair& client, const PublicKey& server);
SessionKeys server_session_keys(const KxKeyPair& server, const PublicKey& client);

// ChaCha20-Poly1305 (IETF) with the nonce derived from a message counter.
Bytes seal(const SymmetricKey& key, uint64_t counter, ByteView associated, ByteView plaintext);
std::optional<Bytes> open(const SymmetricKey& key, uint64_t counter, ByteView associated,
                          ByteView ciphertext);

}  // namespace realmsim::crypto
