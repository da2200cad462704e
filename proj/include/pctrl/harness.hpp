#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pctrl/agents.hpp"
#include "pctrl/baselines.hpp"
#include "pctrl/checkpoint.hpp"
#include "pctrl/config.hpp"

namespace pctrl {

inline constexpr const char* kVersion = "1.0.0";

struct SeedRun {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::size_t iterations_done = 0;
  std::string checkpoint;  // relative to the output directory
  std::string curve;
  std::string message;  // failure reason
};

struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::string code_version = kVersion;
  std::vector<SeedRun> runs;
  std::vector<std::string> result_files;  // relative to the output directory
  double wall_clock_s = 0.0;
};

std::string manifest_to_json(const RunManifest& m);
// Writes <dir>/manifest.json.
void write_manifest(const std::string& dir, const RunManifest& m);

// Seed s trains from derive_seed(master_seed, init, {s}).
std::uint64_t campaign_seed(std::uint64_t master_seed, std::size_t index);

using CampaignProgress = std::function<void(std::size_t seed_index, const IterationLog&)>;

RunManifest run_training_campaign(const ExperimentConfig& cfg,
                                  const CampaignProgress& progress = {});

struct MethodResult {
  std::string method;
  double pmax_dbm = 0.0;
  double output_scale = 1.0;  // only meaningful for learned policies
  EvalSummary summary;
};

// Baseline on one realization: max_power, random, fp or wmmse.
PowerMatrix baseline_powers(std::string_view method, const ChannelTensor& h,
                            const NetworkConfig& net, ConstraintMode mode, Rng& rng,
                            const SolverOptions& opts);

// Same realization sequence as evaluate(); random draws from (seed, baseline, i).
EvalSummary evaluate_baseline(std::string_view method, const Scenario& scenario,
                              std::size_t n_realizations, std::uint64_t seed,
                              const SolverOptions& opts);

// Checkpoints are evaluated alongside the baseline entries of cfg.eval_methods.
// A learned-scheme name in eval_methods needs a matching checkpoint.
std::vector<MethodResult> run_evaluation(const ExperimentConfig& cfg,
                                         const std::vector<std::string>& checkpoints,
                                         RunManifest* manifest = nullptr);

std::vector<MethodResult> run_power_sweep(const ExperimentConfig& cfg,
                                          const std::vector<std::string>& checkpoints,
                                          RunManifest* manifest = nullptr);

struct TimingRow {
  std::string method;
  std::size_t samples = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
};

// Single-threaded. Full-scheme latency is the slowest base station's local
// decision; partial is the whole sequential pass over B base stations.
std::vector<TimingRow> run_timing(const ExperimentConfig& cfg,
                                  const std::vector<std::string>& checkpoints,
                                  RunManifest* manifest = nullptr);

struct BaselineRun {
  std::string method;
  SolverTrace trace;  // a single iterate for max_power and random
};

// All four baselines on realization cfg.trace_realization of the evaluation set.
std::vector<BaselineRun> run_baselines(const ExperimentConfig& cfg,
                                        RunManifest* manifest = nullptr);

struct ExchangeReport {
  std::string method;
  std::size_t csi_to_center = 0;
  std::size_t powers_from_center = 0;
  std::size_t powers_relayed = 0;
  std::size_t total = 0;
  std::string exchange_class;  // "O(KB^2)", "O(KB)" or "0"
  std::size_t csi_per_decision = 0;  // CSI scalars one decision maker needs
  std::string csi_class;
};

ExchangeReport exchange_accounting(const NetworkConfig& net, std::string_view method);

std::vector<ExchangeReport> run_accounting(const ExperimentConfig& cfg,
                                           RunManifest* manifest = nullptr);

bool is_learned_method(std::string_view method);
bool is_baseline_method(std::string_view method);

}  // namespace pctrl
