#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pctrl/agents.hpp"
#include "pctrl/netmodel.hpp"
#include "pctrl/trpo.hpp"

namespace pctrl {

struct ExperimentConfig {
  NetworkConfig net;
  TrpoConfig trpo;
  Scheme scheme = Scheme::centralized;
  Algorithm algorithm = Algorithm::trpo;
  double a2c_step = 7e-4;
  std::size_t iterations = 300;
  std::size_t n_seeds = 1;
  std::size_t hidden_layers = 3;
  std::size_t hidden_width = 256;
  double smoothing = 0.96;
  std::size_t norm_samples = 10000;
  std::size_t eval_realizations = 1000;
  std::vector<std::string> eval_methods{"max_power", "random", "fp", "wmmse"};
  std::vector<double> pmax_sweep_dbm{20, 25, 30, 35, 40, 43, 45, 50};
  ConstraintMode constraint_mode = ConstraintMode::per_user;
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;
  std::size_t solver_max_iters = 500;
  double solver_tol = 1e-4;
  std::size_t timing_realizations = 200;
  std::size_t trace_realization = 0;
  // Write every wall-clock field as 0 so repeated runs are byte-identical.
  bool reproducible = false;

  std::vector<std::size_t> hidden() const {
    return std::vector<std::size_t>(hidden_layers, hidden_width);
  }
  void validate() const;
};

// Flat "key = value" text; '#' starts a comment; lists are comma separated.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

// Throws ConfigError for unknown keys or unparsable values.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const ExperimentConfig& cfg, std::string_view key);
const std::vector<std::string>& config_keys();

// Every key with its current value, in config_keys() order.
std::vector<std::pair<std::string, std::string>> config_items(const ExperimentConfig& cfg);
std::string format_config(const ExperimentConfig& cfg);

}  // namespace pctrl
