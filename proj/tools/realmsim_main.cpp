#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "realmsim/attestation.hpp"
#include "realmsim/error.hpp"
#include "realmsim/experiment.hpp"
#include "realmsim/fixtures.hpp"
#include "realmsim/orchestrator.hpp"

namespace {

using namespace realmsim;

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kUsage = 2;

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

void write_file(const std::string& path, ByteView data) {
  write_file(path, std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

void emit(const std::optional<std::string>& out, const std::string& text) {
  if (out) {
    write_file(*out, text);
  } else {
    std::cout << text;
  }
}

struct Options {
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  bool tcp = false;
};

int cmd_run(const Options& o, const std::string& config_path) {
  PipelineConfig config = PipelineConfig::load(config_path);
  if (o.seed) config.seed = *o.seed;
  if (o.tcp) config.transport = ProviderTransport::kTcp;
  PipelineResult result = run_pipeline(config);
  emit(o.out, result.transcript_jsonl());
  if (o.out && result.provisioning_report && result.provisioning_challenge) {
    write_file(*o.out + ".report.cbor", *result.provisioning_report);
    nlohmann::ordered_json refs = result.refs.to_json();
    refs["challenge"] = to_hex(*result.provisioning_challenge);
    write_file(*o.out + ".refs.json", refs.dump(2) + "\n");
  }
  if (!result.completed) {
    std::cerr << "run failed at step " << *result.failed_step << ": " << result.error << "\n";
    return kDomainFailure;
  }
  return kOk;
}

int cmd_experiment(const Options& o, const std::string& profile_path, const std::string& image,
                   size_t runs, size_t inferences, bool jitter, const std::string& format) {
  ExperimentConfig config;
  config.profile = CostProfile::load(profile_path);
  config.image_size_bytes = image_size_from_name(image);
  config.runs = runs;
  config.inferences = inferences;
  config.seed = o.seed.value_or(0);
  config.transport = o.tcp ? ProviderTransport::kTcp : ProviderTransport::kInProcess;
  if (jitter) config.jitter = Jitter::reference();
  ExperimentReport report = run_experiment(config);
  emit(o.out, format == "csv" ? report.to_csv() : report.to_json().dump(2) + "\n");
  return kOk;
}

int cmd_calibrate(const Options& o, const std::optional<std::string>& targets_path) {
  CalibrationTargets targets;
  if (targets_path) {
    try {
      targets = CalibrationTargets::from_json(nlohmann::json::parse(read_file(*targets_path)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, e.what());
    }
  }
  Calibration c = calibrate(targets);
  for (const std::string& entry : c.clamped) std::cerr << "clamped to zero: " << entry << "\n";
  emit(o.out, c.profile.to_json().dump(2) + "\n");
  return kOk;
}

int cmd_attest_verify(const std::string& report_path, const std::string& refs_path) {
  Bytes report = read_file(report_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(refs_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, refs_path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("challenge")) {
    throw Error(ErrorCode::kConfig, refs_path + ": missing challenge");
  }
  Challenge challenge = to_array<64>(from_hex(j["challenge"].get<std::string>()));
  j.erase("challenge");
  attestation::ReferenceValues refs = attestation::ReferenceValues::from_json(j);
  attestation::Verdict verdict = attestation::verify_report(report, challenge, refs);
  std::cout << verdict.describe() << "\n";
  return verdict.accepted ? kOk : kDomainFailure;
}

int cmd_make_image(const Options& o, const std::string& image, uint32_t update_every,
                   const std::optional<std::string>& refs_out) {
  if (!o.out) throw Error(ErrorCode::kConfig, "make-image needs --out");
  image::RealmImage img = fixtures::realm_image(image_size_from_name(image), update_every);
  write_file(*o.out, img.encode());
  if (refs_out) write_file(*refs_out, img.refs.to_json().dump(2) + "\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Realm inference pipeline simulator"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Run seed");
    sub->add_option("--out", o.out, "Output file (default: stdout)");
  };

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "Run the end-to-end pipeline and print its transcript");
  run->add_option("--config", config_path, "Pipeline config (JSON)")->required();
  run->add_flag("--tcp", o.tcp, "Serve the provider over a local TCP socket");
  common(run);

  std::string profile_path, image = "98mb", format = "json";
  size_t runs = 5, inferences = 40;
  bool jitter = false;
  CLI::App* exp = app.add_subcommand("experiment", "Compare realm and normal-world VM costs");
  exp->add_option("--profile", profile_path, "Cost profile (JSON)")->required();
  exp->add_option("--image", image, "Image config, e.g. 98mb or 139mb");
  exp->add_option("--runs", runs, "Runs per scenario")->check(CLI::PositiveNumber);
  exp->add_option("--inferences", inferences, "Inferences per run")->check(CLI::PositiveNumber);
  exp->add_flag("--jitter", jitter, "Add per-run noise at the reference deviations");
  exp->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  exp->add_flag("--tcp", o.tcp, "Serve the provider over a local TCP socket");
  common(exp);

  std::optional<std::string> targets_path;
  CLI::App* cal = app.add_subcommand("calibrate", "Fit a cost profile to target measurements");
  cal->add_option("--config", targets_path, "Calibration targets (JSON)");
  common(cal);

  std::string report_path, refs_path;
  CLI::App* av = app.add_subcommand("attest-verify", "Appraise an attestation report");
  av->add_option("report", report_path, "Encoded report")->required();
  av->add_option("refs", refs_path, "Reference values with challenge (JSON)")->required();
  av->add_option("--seed", o.seed, "Run seed");

  uint32_t update_every = 40;
  std::optional<std::string> refs_out;
  CLI::App* mk = app.add_subcommand("make-image", "Build a signed realm image bundle");
  mk->add_option("--image", image, "Image config, e.g. 98mb or 139mb");
  mk->add_option("--update-every", update_every, "Inferences between update queries (0: never)");
  mk->add_option("--refs", refs_out, "Also write the reference values (JSON)");
  common(mk);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(o, config_path);
    if (*exp) return cmd_experiment(o, profile_path, image, runs, inferences, jitter, format);
    if (*cal) return cmd_calibrate(o, targets_path);
    if (*av) return cmd_attest_verify(report_path, refs_path);
    if (*mk) return cmd_make_image(o, image, update_every, refs_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig || e.code() == ErrorCode::kIo ? kUsage : kDomainFailure;
  }
  return kUsage;
}
