#include "realmsim/experiment.hpp"

#include <algorithm>
#include <cctype>

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "realmsim/error.hpp"
#include "realmsim/rng.hpp"

namespace realmsim {

using nlohmann::ordered_json;

uint64_t image_size_from_name(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower.size() > 2 && lower.ends_with("mb")) {
    std::string digits = lower.substr(0, lower.size() - 2);
    if (digits.find_first_not_of("0123456789") == std::string::npos && digits.size() < 12) {
      uint64_t mb = std::stoull(digits);
      if (mb > 0) return mb * 1'000'000;
    }
  }
  throw Error(ErrorCode::kConfig, "image config must look like '98mb', got '" +
                                      std::string(name) + "'");
}

Jitter Jitter::reference() { return {46.5e6, 4.4e6, 6.7e6, 1655.3e6, 0.2e6, 98.9e6}; }

ordered_json Jitter::to_json() const {
  return {{"inference_normal", inference_normal}, {"inference_realm", inference_realm},
          {"boot_normal", boot_normal},           {"boot_realm", boot_realm},
          {"termination_normal", termination_normal},
          {"termination_realm", termination_realm}};
}

namespace {

uint64_t workload(const CostLedger& ledger, Phase phase) {
  uint64_t idle = ledger.count(EventType::kIdle, phase) *
                  static_cast<uint64_t>(std::llround(ledger.profile().idle_cost_per_tick));
  return baseline_subtract(ledger.phase_total(phase), idle);
}

Stat summarize(const std::vector<double>& xs) {
  Stat s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::optional<double> ratio(double realm, double normal) {
  if (normal == 0) return std::nullopt;
  return realm / normal;
}

PipelineConfig pipeline_config(Scenario scenario, const ExperimentConfig& config, uint64_t seed) {
  PipelineConfig pc;
  pc.scenario = scenario;
  pc.image_size_bytes = config.image_size_bytes;
  pc.update_every = 0;
  pc.transport = config.transport;
  pc.inputs = fixtures::inputs(config.inferences, fixtures::kFeatures, seed);
  pc.profile = config.profile;
  pc.seed = seed;
  return pc;
}

ordered_json stat_json(const Stat& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }

ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json summary_json(const ScenarioSummary& s) {
  ordered_json runs = ordered_json::array();
  for (const RunMeasurement& r : s.runs) {
    runs.push_back({{"boot", r.boot}, {"inference", r.inference}, {"termination", r.termination}});
  }
  return {{"scenario", scenario_name(s.scenario)},
          {"inference_per_call", stat_json(s.inference)},
          {"boot", stat_json(s.boot)},
          {"termination", stat_json(s.termination)},
          {"world_switches_per_inference", s.world_switches_per_inference},
          {"vm_enters_per_inference", s.vm_enters_per_inference},
          {"idle_subtracted", s.idle_subtracted},
          {"runs", runs}};
}

}  // namespace

ScenarioSummary run_scenario(Scenario scenario, const ExperimentConfig& config) {
  if (config.runs == 0 || config.inferences == 0) {
    throw Error(ErrorCode::kConfig, "experiment needs at least one run and one inference");
  }
  config.profile.validate();
  ScenarioSummary summary;
  summary.scenario = scenario;
  bool realm = scenario == Scenario::kRealmVm;
  DeterministicRng noise = DeterministicRng::derive(config.seed, realm ? "jitter-realm" : "jitter-normal");
  auto jittered = [&](double value, double sd) {
    if (!config.jitter || sd == 0) return value;
    return std::max(0.0, value + sd * noise.normal());
  };
  std::vector<double> boots, inferences, terminations;
  for (size_t run = 0; run < config.runs; ++run) {
    uint64_t seed = DeterministicRng::derive(config.seed, "run-" + std::to_string(run)).next();
    PipelineResult result = run_pipeline(pipeline_config(scenario, config, seed));
    if (!result.completed) {
      throw Error(ErrorCode::kState, std::string(scenario_name(scenario)) + " run failed at step " +
                                         *result.failed_step + ": " + result.error);
    }
    const CostLedger& ledger = result.ledger();
    double n = static_cast<double>(result.outputs.size());
    RunMeasurement m;
    const Jitter j = config.jitter.value_or(Jitter{});
    m.boot = jittered(static_cast<double>(workload(ledger, Phase::kBoot)),
                      realm ? j.boot_realm : j.boot_normal);
    m.inference = jittered(static_cast<double>(workload(ledger, Phase::kInference)) / n,
                           realm ? j.inference_realm : j.inference_normal);
    m.termination = jittered(static_cast<double>(workload(ledger, Phase::kTermination)),
                             realm ? j.termination_realm : j.termination_normal);
    if (run == 0) {
      summary.world_switches_per_inference =
          static_cast<double>(ledger.count(EventType::kWorldSwitch, Phase::kInference)) / n;
      summary.vm_enters_per_inference =
          static_cast<double>(ledger.count(EventType::kVmEnter, Phase::kInference)) / n;
      summary.idle_subtracted = ledger.phase_total(Phase::kBoot) - workload(ledger, Phase::kBoot) +
                                ledger.phase_total(Phase::kInference) -
                                workload(ledger, Phase::kInference) +
                                ledger.phase_total(Phase::kTermination) -
                                workload(ledger, Phase::kTermination);
    }
    summary.runs.push_back(m);
    boots.push_back(m.boot);
    inferences.push_back(m.inference);
    terminations.push_back(m.termination);
  }
  summary.boot = summarize(boots);
  summary.inference = summarize(inferences);
  summary.termination = summarize(terminations);
  return summary;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  ExperimentReport report;
  report.config = config;
  report.normal = run_scenario(Scenario::kNormalVm, config);
  report.realm = run_scenario(Scenario::kRealmVm, config);
  report.inference_ratio = ratio(report.realm.inference.mean, report.normal.inference.mean);
  report.boot_ratio = ratio(report.realm.boot.mean, report.normal.boot.mean);
  report.termination_ratio = ratio(report.realm.termination.mean, report.normal.termination.mean);
  return report;
}

ordered_json ExperimentReport::to_json() const {
  ordered_json j;
  j["calibrated"] = true;
  j["image_size_bytes"] = config.image_size_bytes;
  j["inferences_per_run"] = config.inferences;
  j["runs"] = config.runs;
  j["seed"] = config.seed;
  j["jitter"] = config.jitter ? config.jitter->to_json() : ordered_json(nullptr);
  j["profile"] = config.profile.to_json();
  j["normal_vm"] = summary_json(normal);
  j["realm_vm"] = summary_json(realm);
  j["ratios"] = {{"inference", optional_json(inference_ratio)},
                 {"boot", optional_json(boot_ratio)},
                 {"termination", optional_json(termination_ratio)}};
  return j;
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  out << "metric,normal_vm_mean_m,normal_vm_sd_m,realm_vm_mean_m,realm_vm_sd_m,ratio\n";
  auto row = [&](const char* name, const Stat& n, const Stat& r, const std::optional<double>& q) {
    out << name << ',' << n.mean / 1e6 << ',' << n.sd / 1e6 << ',' << r.mean / 1e6 << ','
        << r.sd / 1e6 << ',';
    if (q) {
      out << std::setprecision(3) << *q << std::setprecision(1);
    } else {
      out << "undefined";
    }
    out << '\n';
  };
  row("inference", normal.inference, realm.inference, inference_ratio);
  row("boot", normal.boot, realm.boot, boot_ratio);
  row("termination", normal.termination, realm.termination, termination_ratio);
  return out.str();
}

ordered_json CalibrationTargets::to_json() const {
  return {{"inference_normal", inference_normal},
          {"inference_realm", inference_realm},
          {"boot_normal", boot_normal},
          {"boot_realm", boot_realm},
          {"boot_realm_large", boot_realm_large},
          {"termination_normal", termination_normal},
          {"termination_realm", termination_realm},
          {"image_small", image_small},
          {"image_large", image_large},
          {"vm_enter_cost", vm_enter_cost},
          {"memory_access_cost", memory_access_cost},
          {"idle_cost_per_tick", idle_cost_per_tick}};
}

CalibrationTargets CalibrationTargets::from_json(const nlohmann::json& j) {
  CalibrationTargets t;
  ordered_json known = t.to_json();
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::kConfig, "unknown calibration key '" + key + "'");
  }
  try {
    t.inference_normal = j.value("inference_normal", t.inference_normal);
    t.inference_realm = j.value("inference_realm", t.inference_realm);
    t.boot_normal = j.value("boot_normal", t.boot_normal);
    t.boot_realm = j.value("boot_realm", t.boot_realm);
    t.boot_realm_large = j.value("boot_realm_large", t.boot_realm_large);
    t.termination_normal = j.value("termination_normal", t.termination_normal);
    t.termination_realm = j.value("termination_realm", t.termination_realm);
    t.image_small = j.value("image_small", t.image_small);
    t.image_large = j.value("image_large", t.image_large);
    t.vm_enter_cost = j.value("vm_enter_cost", t.vm_enter_cost);
    t.memory_access_cost = j.value("memory_access_cost", t.memory_access_cost);
    t.idle_cost_per_tick = j.value("idle_cost_per_tick", t.idle_cost_per_tick);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  if (t.image_large <= t.image_small) {
    throw Error(ErrorCode::kConfig, "image_large must exceed image_small");
  }
  return t;
}

namespace {

// Workload of each measured quantity per unit of one profile entry.
using Coefficients = std::array<double, kEventTypeCount>;

struct Quantities {
  Coefficients inference{}, boot{}, termination{};
};

Quantities measure(Scenario scenario, uint64_t image_size) {
  Quantities q;
  for (size_t e = 0; e < kEventTypeCount; ++e) {
    if (static_cast<EventType>(e) == EventType::kIdle) continue;
    ExperimentConfig config;
    config.profile.cost_of(static_cast<EventType>(e)) = 1;
    config.image_size_bytes = image_size;
    config.runs = 1;
    ScenarioSummary s = run_scenario(scenario, config);
    q.inference[e] = s.inference.mean;
    q.boot[e] = s.boot.mean;
    q.termination[e] = s.termination.mean;
  }
  return q;
}

// Solves target = sum_e cost_e * a_e for one unknown entry.
double solve(const CostProfile& known, const Coefficients& a, EventType unknown, double target,
             std::string_view what, std::vector<std::string>* clamped = nullptr) {
  double rest = 0;
  for (size_t e = 0; e < kEventTypeCount; ++e) {
    if (static_cast<EventType>(e) != unknown) rest += known.cost_of(static_cast<EventType>(e)) * a[e];
  }
  double coef = a[static_cast<size_t>(unknown)];
  if (coef <= 0) {
    throw Error(ErrorCode::kConfig, std::string(what) + " does not depend on " +
                                        std::string(event_name(unknown)));
  }
  double value = (target - rest) / coef;
  if (value < 0 && clamped != nullptr) {
    clamped->push_back(std::string(event_name(unknown)) + " (" + std::string(what) + ")");
    return 0;
  }
  if (value < 0) {
    throw Error(ErrorCode::kConfig, std::string(what) + " target needs negative " +
                                        std::string(event_name(unknown)));
  }
  return value;
}

}  // namespace

Calibration calibrate(const CalibrationTargets& t) {
  Calibration result;
  std::vector<std::string>* clamped = &result.clamped;
  CostProfile& p = result.profile;
  p.vm_enter_cost = t.vm_enter_cost;
  p.memory_access_cost = t.memory_access_cost;
  p.idle_cost_per_tick = t.idle_cost_per_tick;
  p.validate();

  Quantities normal = measure(Scenario::kNormalVm, t.image_small);
  Quantities realm = measure(Scenario::kRealmVm, t.image_small);
  Quantities realm_large = measure(Scenario::kRealmVm, t.image_large);

  p.inference_compute_cost =
      solve(p, normal.inference, EventType::kInferenceCompute, t.inference_normal, "normal inference");
  p.world_switch_cost =
      solve(p, realm.inference, EventType::kWorldSwitch, t.inference_realm, "realm inference");

  // The two image sizes differ only in populated bytes.
  double bytes = realm_large.boot[static_cast<size_t>(EventType::kPopulate)] -
                 realm.boot[static_cast<size_t>(EventType::kPopulate)];
  p.populate_cost_per_byte = (t.boot_realm_large - t.boot_realm) / bytes;
  if (p.populate_cost_per_byte < 0) {
    throw Error(ErrorCode::kConfig, "larger image needs a smaller boot cost");
  }

  p.boot_base_realm = solve(p, realm.boot, EventType::kBootBaseRealm, t.boot_realm, "realm boot",
                            clamped);
  p.boot_base_normal = solve(p, normal.boot, EventType::kBootBaseNormal, t.boot_normal, "normal boot",
                             clamped);
  p.termination_base_realm = solve(p, realm.termination, EventType::kTerminationBaseRealm,
                                   t.termination_realm, "realm termination", clamped);
  p.termination_base_normal = solve(p, normal.termination, EventType::kTerminationBaseNormal,
                                    t.termination_normal, "normal termination", clamped);
  p.validate();
  return result;
}

}  // namespace realmsim
