#include "realmsim/realm_runtime.hpp"

#include <algorithm>

#include "realmsim/error.hpp"
#include "realmsim/provider.hpp"
#include "realmsim/rng.hpp"

namespace realmsim {

using protocol::Message;
using protocol::MessageType;

Bytes RuntimeConfig::encode() const {
  Bytes out(kMagic.begin(), kMagic.end());
  append(out, provider_key);
  append_le32(out, classes);
  append_le32(out, features);
  append_le32(out, update_every);
  return out;
}

RuntimeConfig RuntimeConfig::decode(ByteView granule) {
  if (granule.size() < kEncodedSize ||
      !std::equal(kMagic.begin(), kMagic.end(), granule.begin())) {
    throw Error(ErrorCode::kDecode, "image granule 0 holds no runtime config");
  }
  RuntimeConfig c;
  std::copy_n(granule.begin() + 8, 32, c.provider_key.begin());
  c.classes = load_le32(granule.subspan(40));
  c.features = load_le32(granule.subspan(44));
  c.update_every = load_le32(granule.subspan(48));
  if (c.classes == 0 || c.features == 0 || c.features > model::kMaxFeatures) {
    throw Error(ErrorCode::kDecode, "runtime config has bad dimensions");
  }
  return c;
}

std::string_view policy_decision_name(PolicyDecision decision) {
  switch (decision) {
    case PolicyDecision::kContinue: return "Continue";
    case PolicyDecision::kInferenceLimit: return "InferenceLimit";
    case PolicyDecision::kExpired: return "Expired";
  }
  return "?";
}

PolicyDecision evaluate_policy(const model::Policy& policy, uint64_t inference_count,
                               uint64_t now) {
  if (policy.max_inferences && inference_count >= *policy.max_inferences) {
    return PolicyDecision::kInferenceLimit;
  }
  if (policy.valid_until && now > *policy.valid_until) return PolicyDecision::kExpired;
  return PolicyDecision::kContinue;
}

RealmRuntime::RealmRuntime(std::shared_ptr<transport::Link> link, exchange::Region region,
                           uint64_t entropy_seed)
    : link_(std::move(link)), region_(std::move(region)), entropy_seed_(entropy_seed) {}

std::unique_ptr<RealmRuntime> RealmRuntime::preloaded(model::ModelPackage package,
                                                      exchange::Region region) {
  std::unique_ptr<RealmRuntime> r(new RealmRuntime());
  r->region_ = std::move(region);
  r->preloaded_ = std::move(package);
  return r;
}

std::unique_ptr<Guest> RealmRuntime::clone() const {
  return std::unique_ptr<Guest>(new RealmRuntime(*this));
}

void RealmRuntime::step(GuestEnv& env) {
  switch (stage_) {
    case Stage::kBoot: handshake(env); break;
    case Stage::kConnected: attest(env); break;
    case Stage::kAttested: receive_model(env); break;
    case Stage::kServing: serve(env); break;
    case Stage::kTerminated: break;
  }
}

void RealmRuntime::handshake(GuestEnv& env) {
  config_ = RuntimeConfig::decode(env.read(env.image_granule(0), 0, RuntimeConfig::kEncodedSize));
  if (preloaded_) {
    load_model(env, *preloaded_);
    preloaded_.reset();
    env.host_call(as_bytes("ready"));
    stage_ = Stage::kServing;
    return;
  }
  DeterministicRng rng = DeterministicRng::derive(entropy_seed_, "realm-ephemeral");
  crypto::KxKeyPair ephemeral = crypto::KxKeyPair::from_seed(rng.bytes<32>());
  link_->send({MessageType::kHello, {{2, ephemeral.public_key}}});
  Message reply = link_->receive();
  if (reply.type != MessageType::kHello) {
    throw Error(ErrorCode::kProtocol, "expected provider Hello");
  }
  PublicKey server = to_array<32>(reply.at(2).as_bytes());
  if (server != config_->provider_key) {
    throw Error(ErrorCode::kProtocol, "provider key does not match the pinned key");
  }
  keys_ = crypto::client_session_keys(ephemeral, server);
  Digest expected = provider::confirmation_tag(keys_.receive, ephemeral.public_key);
  if (to_array<32>(reply.at(3).as_bytes()) != expected) {
    throw Error(ErrorCode::kProtocol, "provider failed key confirmation");
  }
  stage_ = Stage::kConnected;
}

void RealmRuntime::send_report(GuestEnv& env, const Challenge& challenge) {
  attestation::AttestationReport report = env.attestation_token(challenge);
  link_->send({MessageType::kReport, {{2, attestation::encode(report)}}});
}

void RealmRuntime::attest(GuestEnv& env) {
  Message m = link_->receive();
  if (m.type != MessageType::kChallenge) {
    throw Error(ErrorCode::kProtocol, "expected Challenge");
  }
  send_report(env, to_array<64>(m.at(2).as_bytes()));
  stage_ = Stage::kAttested;
}

model::ModelPackage RealmRuntime::open_package(const Message& m) {
  std::optional<Bytes> plain = crypto::open(keys_.receive, receive_counter_++,
                                            provider::sealed_associated_data(m.type),
                                            m.at(2).as_bytes());
  if (!plain) throw Error(ErrorCode::kIntegrity, "package failed authentication");
  return model::ModelPackage::decode(*plain);
}

void RealmRuntime::receive_model(GuestEnv& env) {
  Message m = link_->receive();
  if (m.type == MessageType::kRefused) {
    refusal_ = m.at(2).as_text();
    terminate(env, "refused:" + *refusal_);
    return;
  }
  if (m.type != MessageType::kPackage) throw Error(ErrorCode::kProtocol, "expected Package");
  load_model(env, open_package(m));
  env.host_call(as_bytes("ready"));
  stage_ = Stage::kServing;
}

void RealmRuntime::load_model(GuestEnv& env, const model::ModelPackage& package) {
  package.validate();
  if (config_ && (package.classes != config_->classes || package.features != config_->features)) {
    throw Error(ErrorCode::kIntegrity, "package dimensions differ from the image config");
  }
  env.measurement_extend(0, package.digest);
  model_ = package;
}

PolicyDecision RealmRuntime::enforce_policy(const GuestEnv& env) const {
  if (!model_) throw Error(ErrorCode::kState, "no model loaded");
  return evaluate_policy(model_->policy, env.inference_count(), env.now());
}

exchange::InferenceOutput RealmRuntime::infer(GuestEnv& env,
                                              const exchange::InferenceInput& input) {
  PolicyDecision decision = enforce_policy(env);
  if (decision != PolicyDecision::kContinue) {
    throw Error(ErrorCode::kPolicyExhausted, std::string(policy_decision_name(decision)));
  }
  uint32_t cls = model::classify(*model_, input.values);
  env.count_inference();
  env.charge(EventType::kInferenceCompute);
  return {input.request_id, cls};
}

std::vector<exchange::PolledInput> RealmRuntime::poll_exchange(GuestEnv& env) {
  return region_.poll(env, &diagnostics_.malformed_records);
}

void RealmRuntime::terminate(GuestEnv& env, std::string_view reason) {
  env.request_termination(reason);
  stage_ = Stage::kTerminated;
}

// Inputs that arrive after the limit stay unconsumed; the realm asks for
// termination instead of answering them.
void RealmRuntime::serve(GuestEnv& env) {
  PolicyDecision decision = enforce_policy(env);
  if (decision != PolicyDecision::kContinue) {
    terminate(env, policy_decision_name(decision));
    return;
  }
  for (const exchange::PolledInput& p : poll_exchange(env)) {
    decision = enforce_policy(env);
    if (decision != PolicyDecision::kContinue) break;
    region_.write_output(env, p.slot, infer(env, p.input));
    if (link_ && config_->update_every != 0 &&
        env.inference_count() % config_->update_every == 0) {
      query_update(env);
    }
    decision = enforce_policy(env);
    if (decision != PolicyDecision::kContinue) break;
  }
  if (decision != PolicyDecision::kContinue) terminate(env, policy_decision_name(decision));
}

void RealmRuntime::query_update(GuestEnv& env) {
  // A refusal closes the provider session.
  if (diagnostics_.update_refusals > 0) return;
  link_->send({MessageType::kUpdateQuery, {{2, model_->version}}});
  Message m = link_->receive();
  if (m.type == MessageType::kRefused) {
    ++diagnostics_.update_refusals;
    return;
  }
  if (m.type != MessageType::kChallenge) throw Error(ErrorCode::kProtocol, "expected Challenge");
  send_report(env, to_array<64>(m.at(2).as_bytes()));
  m = link_->receive();
  switch (m.type) {
    case MessageType::kUpdate:
      load_model(env, open_package(m));
      ++diagnostics_.updates_applied;
      break;
    case MessageType::kUpToDate:
      ++diagnostics_.up_to_date;
      break;
    case MessageType::kRefused:
      ++diagnostics_.update_refusals;
      break;
    default:
      throw Error(ErrorCode::kProtocol, "unexpected reply to update report");
  }
}

}  // namespace realmsim
