#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "realmsim/attestation.hpp"
#include "realmsim/crypto.hpp"
#include "realmsim/model.hpp"
#include "realmsim/protocol.hpp"
#include "realmsim/rng.hpp"

namespace realmsim::provider {

enum class Direction { kToRealm, kFromRealm };

struct TranscriptEntry {
  Direction direction;
  uint64_t tick;  // provider-local message counter
  protocol::MessageType type;
  Bytes frame;    // exactly the bytes on the wire
};

using SessionTranscript = std::vector<TranscriptEntry>;

// Refusal reasons beyond the verifier's reject reasons.
inline constexpr std::string_view kProtocolError = "ProtocolError";
inline constexpr std::string_view kRuntimeStateMismatch = "RuntimeStateMismatch";

// Associated data binding sealed payloads to their message type.
Bytes sealed_associated_data(protocol::MessageType type);
// Key-confirmation tag the provider returns in its Hello.
Digest confirmation_tag(const crypto::SymmetricKey& provider_transmit, const PublicKey& client);

struct ProviderConfig {
  crypto::Seed static_key_seed{};
  attestation::ReferenceValues refs;
  uint64_t seed = 0;
};

class Session;

// The model provider. Holds a linear history of model versions and the set
// of every challenge it has issued; nonces are never reused within a run.
class Provider {
 public:
  Provider(ProviderConfig config, model::ModelPackage initial);

  // Appends a newer version; throws Error(Config) if the version does not
  // increase or the package does not validate.
  void publish(model::ModelPackage package);
  const model::ModelPackage& latest() const { return versions_.back(); }
  const std::vector<model::ModelPackage>& versions() const { return versions_; }

  Challenge issue_challenge();
  size_t issued_challenges() const { return used_nonces_.size(); }

  PublicKey public_key() const { return static_key_.public_key; }
  const attestation::ReferenceValues& refs() const { return config_.refs; }

  Session open_session();

 private:
  friend class Session;
  ProviderConfig config_;
  crypto::KxKeyPair static_key_;
  std::vector<model::ModelPackage> versions_;
  DeterministicRng rng_;
  std::set<Challenge> used_nonces_;
  uint64_t tick_ = 0;
};

// One connection from a realm. Frames are processed strictly in order;
// `on_frame` returns the reply bodies to send back.
class Session {
 public:
  enum class State {
    kAwaitHello,
    kAwaitReport,
    kProvisioned,
    kAwaitUpdateReport,
    kClosed,
  };

  explicit Session(Provider& provider) : provider_(&provider) {}

  std::vector<Bytes> on_frame(ByteView body);

  State state() const { return state_; }
  bool closed() const { return state_ == State::kClosed; }
  const SessionTranscript& transcript() const { return transcript_; }
  const std::vector<attestation::Verdict>& verdicts() const { return verdicts_; }
  // Digests of every package delivered on this session, in order.
  const std::vector<Digest>& delivered() const { return delivered_; }
  const std::optional<std::string>& refusal() const { return refusal_; }
  size_t provider_messages() const;

 private:
  std::vector<Bytes> handle_hello(const protocol::Message& m);
  std::vector<Bytes> handle_provisioning(const protocol::Message& m);
  std::vector<Bytes> handle_update_query(const protocol::Message& m);
  std::vector<Bytes> handle_update(const protocol::Message& m);
  std::vector<Bytes> refuse(std::string_view reason);
  Bytes outgoing(const protocol::Message& m);
  Bytes sealed(protocol::MessageType type, const model::ModelPackage& package);
  Digest expected_runtime_measurement() const;

  Provider* provider_;
  State state_ = State::kAwaitHello;
  crypto::SessionKeys keys_;
  uint64_t send_counter_ = 0;
  std::optional<Challenge> outstanding_;
  uint64_t claimed_version_ = 0;
  SessionTranscript transcript_;
  std::vector<attestation::Verdict> verdicts_;
  std::vector<Digest> delivered_;
  std::vector<uint64_t> delivered_versions_;
  std::optional<std::string> refusal_;
};

}  // namespace realmsim::provider
