#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "realmsim/cost_model.hpp"
#include "realmsim/orchestrator.hpp"

namespace realmsim {

// "98mb", "139mb" or any "<n>mb" (decimal megabytes). Throws Error(Config).
uint64_t image_size_from_name(std::string_view name);

// Per-run Gaussian noise added to each measured phase, in instructions.
struct Jitter {
  double inference_normal = 0, inference_realm = 0;
  double boot_normal = 0, boot_realm = 0;
  double termination_normal = 0, termination_realm = 0;

  // Standard deviations reported alongside the reference measurements.
  static Jitter reference();
  nlohmann::ordered_json to_json() const;
};

struct ExperimentConfig {
  CostProfile profile;
  uint64_t image_size_bytes = fixtures::kImage98MB;
  size_t inferences = 40;
  size_t runs = 5;
  uint64_t seed = 0;
  ProviderTransport transport = ProviderTransport::kInProcess;
  std::optional<Jitter> jitter;
};

struct RunMeasurement {
  double boot = 0;
  double inference = 0;  // mean per inference
  double termination = 0;
};

struct Stat {
  double mean = 0;
  double sd = 0;  // sample standard deviation
};

struct ScenarioSummary {
  Scenario scenario = Scenario::kRealmVm;
  std::vector<RunMeasurement> runs;
  Stat boot, inference, termination;
  // Structural counts from the first run.
  double world_switches_per_inference = 0;
  double vm_enters_per_inference = 0;
  uint64_t idle_subtracted = 0;
};

struct ExperimentReport {
  ExperimentConfig config;
  ScenarioSummary normal;
  ScenarioSummary realm;
  // Empty when the normal-VM value is zero.
  std::optional<double> inference_ratio, boot_ratio, termination_ratio;

  nlohmann::ordered_json to_json() const;
  // One row per measured quantity, in millions of instructions.
  std::string to_csv() const;
};

ScenarioSummary run_scenario(Scenario scenario, const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config);

// Absolute targets (instructions) a profile is fitted to, plus the entries
// that are fixed by choice rather than fitted.
struct CalibrationTargets {
  double inference_normal = 222.2e6;
  double inference_realm = 361.6e6;
  double boot_normal = 709.8e6;
  double boot_realm = 18880.6e6;
  double boot_realm_large = 27190e6;
  double termination_normal = 105.1e6;
  double termination_realm = 970.0e6;
  uint64_t image_small = fixtures::kImage98MB;
  uint64_t image_large = fixtures::kImage139MB;

  double vm_enter_cost = 1e6;
  double memory_access_cost = 1e3;
  double idle_cost_per_tick = 1e5;

  nlohmann::ordered_json to_json() const;
  static CalibrationTargets from_json(const nlohmann::json& j);
};

struct Calibration {
  CostProfile profile;
  // Base entries whose exact solution was negative and were set to zero.
  std::vector<std::string> clamped;
};

// Solves for inference, switch, populate and base costs one at a time from
// ledger coefficients measured with indicator profiles. Populate cost is the
// slope between the two realm boot targets. Base entries clamp at zero;
// any other negative entry is Error(Config).
Calibration calibrate(const CalibrationTargets& targets);

}  // namespace realmsim
