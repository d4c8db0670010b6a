#include "realmsim/crypto.hpp"

#include <sodium.h>

#include <cstdlib>

#include "realmsim/error.hpp"

namespace realmsim::crypto {

namespace {

void ensure_sodium() {
  static const bool ready = [] { return sodium_init() >= 0; }();
  if (!ready) std::abort();
}

std::array<uint8_t, crypto_aead_chacha20poly1305_ietf_NPUBBYTES> counter_nonce(uint64_t counter) {
  std::array<uint8_t, crypto_aead_chacha20poly1305_ietf_NPUBBYTES> nonce{};
  for (int i = 0; i < 8; ++i) nonce[i] = static_cast<uint8_t>(counter >> (8 * i));
  return nonce;
}

}  // namespace

Digest sha256(ByteView data) { return sha256({data}); }

Digest sha256(std::initializer_list<ByteView> parts) {
  ensure_sodium();
  crypto_hash_sha256_state state;
  crypto_hash_sha256_init(&state);
  for (ByteView part : parts) crypto_hash_sha256_update(&state, part.data(), part.size());
  Digest out;
  crypto_hash_sha256_final(&state, out.data());
  return out;
}

Digest hmac_sha256(const SymmetricKey& key, ByteView data) {
  ensure_sodium();
  crypto_auth_hmacsha256_state state;
  crypto_auth_hmacsha256_init(&state, key.data(), key.size());
  crypto_auth_hmacsha256_update(&state, data.data(), data.size());
  Digest out;
  crypto_auth_hmacsha256_final(&state, out.data());
  return out;
}

SigningKey SigningKey::from_seed(const Seed& seed) {
  ensure_sodium();
  SigningKey key;
  key.seed_ = seed;
  crypto_sign_ed25519_seed_keypair(key.public_key_.data(), key.secret_.data(), seed.data());
  return key;
}

Signature SigningKey::sign(ByteView message) const {
  Signature sig;
  crypto_sign_ed25519_detached(sig.data(), nullptr, message.data(), message.size(),
                               secret_.data());
  return sig;
}

bool verify_signature(const PublicKey& key, ByteView message, const Signature& signature) {
  ensure_sodium();
  return crypto_sign_ed25519_verify_detached(signature.data(), message.data(), message.size(),
                                             key.data()) == 0;
}

KxKeyPair KxKeyPair::from_seed(const Seed& seed) {
  ensure_sodium();
  KxKeyPair pair;
  crypto_kx_seed_keypair(pair.public_key.data(), pair.secret_key.data(), seed.data());
  return pair;
}

SessionKeys client_session_keys(const KxKeyPair& client, const PublicKey& server) {
  SessionKeys keys;
  if (crypto_kx_client_session_keys(keys.receive.data(), keys.transmit.data(),
                                    client.public_key.data(), client.secret_key.data(),
                                    server.data()) != 0) {
    throw Error(ErrorCode::kProtocol, "unacceptable server key");
  }
  return keys;
}

SessionKeys server_session_keys(const KxKeyPair& server, const PublicKey& client) {
  SessionKeys keys;
  if (crypto_kx_server_session_keys(keys.receive.data(), keys.transmit.data(),
                                    server.public_key.data(), server.secret_key.data(),
                                    client.data()) != 0) {
    throw Error(ErrorCode::kProtocol, "unacceptable client key");
  }
  return keys;
}

Bytes seal(const SymmetricKey& key, uint64_t counter, ByteView associated, ByteView plaintext) {
  ensure_sodium();
  Bytes out(plaintext.size() + crypto_aead_chacha20poly1305_ietf_ABYTES);
  unsigned long long written = 0;
  auto nonce = counter_nonce(counter);
  crypto_aead_chacha20poly1305_ietf_encrypt(out.data(), &written, plaintext.data(),
                                            plaintext.size(), associated.data(),
                                            associated.size(), nullptr, nonce.data(), key.data());
  out.resize(written);
  return out;
}

std::optional<Bytes> open(const SymmetricKey& key, uint64_t counter, ByteView associated,
                          ByteView ciphertext) {
  ensure_sodium();
  if (ciphertext.size() < crypto_aead_chacha20poly1305_ietf_ABYTES) return std::nullopt;
  Bytes out(ciphertext.size());
  unsigned long long written = 0;
  auto nonce = counter_nonce(counter);
  if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &written, nullptr, ciphertext.data(),
                                                ciphertext.size(), associated.data(),
                                                associated.size(), nonce.data(),
                                                key.data()) != 0) {
    return std::nullopt;
  }
  out.resize(written);
  return out;
}

}  // namespace realmsim::crypto
