#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "realmsim/exchange.hpp"
#include "realmsim/model.hpp"
#include "realmsim/rmm.hpp"
#include "realmsim/transport.hpp"

namespace realmsim {

// Parameters baked into the first image granule, ahead of the program bytes:
//   "RSIMRT01" | provider key (32) | classes le32 | features le32 |
//   update_every le32
struct RuntimeConfig {
  static constexpr std::string_view kMagic = "RSIMRT01";
  static constexpr size_t kEncodedSize = 8 + 32 + 12;

  PublicKey provider_key{};
  uint32_t classes = 3;
  uint32_t features = 4;
  uint32_t update_every = 0;  // 0 disables update queries

  Bytes encode() const;
  // Throws Error(Decode) if the granule does not start with a config.
  static RuntimeConfig decode(ByteView granule);
  bool operator==(const RuntimeConfig&) const = default;
};

enum class PolicyDecision { kContinue, kInferenceLimit, kExpired };
std::string_view policy_decision_name(PolicyDecision decision);

PolicyDecision evaluate_policy(const model::Policy& policy, uint64_t inference_count,
                               uint64_t now);

struct RuntimeDiagnostics {
  size_t malformed_records = 0;
  size_t updates_applied = 0;
  size_t up_to_date = 0;
  size_t update_refusals = 0;
};

// The program inside the VM. Each `step` is one entry: handshake, then
// attestation, then model receipt, then serving the exchange.
class RealmRuntime final : public Guest {
 public:
  enum class Stage { kBoot, kConnected, kAttested, kServing, kTerminated };

  RealmRuntime(std::shared_ptr<transport::Link> link, exchange::Region region,
               uint64_t entropy_seed);
  // Normal-world VM variant: the model is part of the image, no provider.
  static std::unique_ptr<RealmRuntime> preloaded(model::ModelPackage package,
                                                 exchange::Region region);

  void step(GuestEnv& env) override;
  std::unique_ptr<Guest> clone() const override;

  void load_model(GuestEnv& env, const model::ModelPackage& package);
  // Throws Error(State) without a model, Error(PolicyExhausted) once the
  // policy no longer allows inference.
  exchange::InferenceOutput infer(GuestEnv& env, const exchange::InferenceInput& input);
  PolicyDecision enforce_policy(const GuestEnv& env) const;
  std::vector<exchange::PolledInput> poll_exchange(GuestEnv& env);

  Stage stage() const { return stage_; }
  bool has_model() const { return model_.has_value(); }
  uint64_t model_version() const { return model_ ? model_->version : 0; }
  const RuntimeDiagnostics& diagnostics() const { return diagnostics_; }
  const std::optional<std::string>& refusal() const { return refusal_; }

 private:
  RealmRuntime() = default;

  void handshake(GuestEnv& env);
  void attest(GuestEnv& env);
  void receive_model(GuestEnv& env);
  void serve(GuestEnv& env);
  void query_update(GuestEnv& env);
  void terminate(GuestEnv& env, std::string_view reason);
  model::ModelPackage open_package(const protocol::Message& m);
  void send_report(GuestEnv& env, const Challenge& challenge);

  std::shared_ptr<transport::Link> link_;
  exchange::Region region_;
  uint64_t entropy_seed_ = 0;
  Stage stage_ = Stage::kBoot;
  std::optional<RuntimeConfig> config_;
  std::optional<model::ModelPackage> model_;
  std::optional<model::ModelPackage> preloaded_;
  crypto::SessionKeys keys_;
  uint64_t receive_counter_ = 0;
  RuntimeDiagnostics diagnostics_;
  std::optional<std::string> refusal_;
};

}  // namespace realmsim
