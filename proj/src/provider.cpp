#include "realmsim/provider.hpp"

#include "realmsim/error.hpp"

namespace realmsim::provider {

using protocol::Message;
using protocol::MessageType;

namespace {

constexpr std::string_view kConfirmLabel = "realmsim provider confirm";

}  // namespace

Bytes sealed_associated_data(MessageType type) {
  Bytes ad(as_bytes("realmsim sealed ").begin(), as_bytes("realmsim sealed ").end());
  ad.push_back(static_cast<uint8_t>(type));
  return ad;
}

Digest confirmation_tag(const crypto::SymmetricKey& provider_transmit, const PublicKey& client) {
  Bytes material(kConfirmLabel.begin(), kConfirmLabel.end());
  append(material, client);
  return crypto::hmac_sha256(provider_transmit, material);
}

Provider::Provider(ProviderConfig config, model::ModelPackage initial)
    : config_(std::move(config)),
      static_key_(crypto::KxKeyPair::from_seed(config_.static_key_seed)),
      rng_(DeterministicRng::derive(config_.seed, "provider-nonce")) {
  initial.validate();
  versions_.push_back(std::move(initial));
}

void Provider::publish(model::ModelPackage package) {
  package.validate();
  if (package.version <= latest().version) {
    throw Error(ErrorCode::kConfig, "published version " + std::to_string(package.version) +
                                        " does not follow " + std::to_string(latest().version));
  }
  versions_.push_back(std::move(package));
}

Challenge Provider::issue_challenge() {
  Challenge nonce;
  do {
    nonce = rng_.bytes<64>();
  } while (!used_nonces_.insert(nonce).second);
  return nonce;
}

Session Provider::open_session() { return Session(*this); }

size_t Session::provider_messages() const {
  size_t n = 0;
  for (const auto& e : transcript_) n += e.direction == Direction::kToRealm;
  return n;
}

Bytes Session::outgoing(const Message& m) {
  Bytes body = m.body();
  transcript_.push_back({Direction::kToRealm, ++provider_->tick_, m.type, protocol::frame(body)});
  return body;
}

std::vector<Bytes> Session::refuse(std::string_view reason) {
  refusal_ = std::string(reason);
  outstanding_.reset();
  Bytes body = outgoing({MessageType::kRefused, {{2, std::string(reason)}}});
  state_ = State::kClosed;
  return {body};
}

Bytes Session::sealed(MessageType type, const model::ModelPackage& package) {
  Bytes ciphertext = crypto::seal(keys_.transmit, send_counter_++, sealed_associated_data(type),
                                  package.encode());
  delivered_.push_back(package.digest);
  delivered_versions_.push_back(package.version);
  return outgoing({type, {{2, std::move(ciphertext)}}});
}

Digest Session::expected_runtime_measurement() const {
  Digest chain = kZeroDigest;
  for (const Digest& d : delivered_) chain = attestation::extend(chain, d);
  return chain;
}

std::vector<Bytes> Session::on_frame(ByteView body) {
  if (state_ == State::kClosed) return {};
  Message m;
  try {
    m = Message::parse(body);
  } catch (const Error&) {
    transcript_.push_back({Direction::kFromRealm, ++provider_->tick_, MessageType::kRefused,
                           protocol::frame(body)});
    return refuse(kProtocolError);
  }
  transcript_.push_back({Direction::kFromRealm, ++provider_->tick_, m.type, protocol::frame(body)});
  try {
    switch (state_) {
      case State::kAwaitHello:
        if (m.type == MessageType::kHello) return handle_hello(m);
        break;
      case State::kAwaitReport:
        if (m.type == MessageType::kReport) return handle_provisioning(m);
        break;
      case State::kProvisioned:
        if (m.type == MessageType::kUpdateQuery) return handle_update_query(m);
        break;
      case State::kAwaitUpdateReport:
        if (m.type == MessageType::kReport) return handle_update(m);
        break;
      case State::kClosed:
        return {};
    }
  } catch (const Error&) {
    // Malformed fields inside an otherwise well-ordered message.
  }
  return refuse(kProtocolError);
}

std::vector<Bytes> Session::handle_hello(const Message& m) {
  PublicKey client = to_array<32>(m.at(2).as_bytes());
  keys_ = crypto::server_session_keys(provider_->static_key_, client);
  std::vector<Bytes> replies;
  replies.push_back(outgoing({MessageType::kHello,
                              {{2, provider_->static_key_.public_key},
                               {3, confirmation_tag(keys_.transmit, client)}}}));
  outstanding_ = provider_->issue_challenge();
  replies.push_back(outgoing({MessageType::kChallenge, {{2, *outstanding_}}}));
  state_ = State::kAwaitReport;
  return replies;
}

// Challenge has been sent; the realm answers with its attestation report.
// Only an Accept verdict releases the model.
std::vector<Bytes> Session::handle_provisioning(const Message& m) {
  Challenge nonce = *outstanding_;
  outstanding_.reset();
  attestation::Verdict verdict =
      attestation::verify_report(m.at(2).as_bytes(), nonce, provider_->config_.refs);
  verdicts_.push_back(verdict);
  if (!verdict.accepted) return refuse(attestation::reject_reason_name(verdict.reason));
  std::vector<Bytes> replies{sealed(MessageType::kPackage, provider_->latest())};
  state_ = State::kProvisioned;
  return replies;
}

std::vector<Bytes> Session::handle_update_query(const Message& m) {
  claimed_version_ = m.at(2).as_uint();
  outstanding_ = provider_->issue_challenge();
  state_ = State::kAwaitUpdateReport;
  return {outgoing({MessageType::kChallenge, {{2, *outstanding_}}})};
}

// Runtime attestation: the fresh report must verify and its first runtime
// measurement slot must equal the chain of packages this session delivered.
std::vector<Bytes> Session::handle_update(const Message& m) {
  Challenge nonce = *outstanding_;
  outstanding_.reset();
  const Bytes& encoded = m.at(2).as_bytes();
  attestation::Verdict verdict = attestation::verify_report(encoded, nonce, provider_->config_.refs);
  verdicts_.push_back(verdict);
  if (!verdict.accepted) return refuse(attestation::reject_reason_name(verdict.reason));
  attestation::AttestationReport report = attestation::decode(encoded);
  if (report.realm.rem[0] != expected_runtime_measurement() ||
      claimed_version_ != delivered_versions_.back()) {
    return refuse(kRuntimeStateMismatch);
  }
  state_ = State::kProvisioned;
  if (provider_->latest().version > claimed_version_) {
    return {sealed(MessageType::kUpdate, provider_->latest())};
  }
  return {outgoing({MessageType::kUpToDate, {}})};
}

}  // namespace realmsim::provider
