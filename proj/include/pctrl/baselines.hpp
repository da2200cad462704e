#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "pctrl/netmodel.hpp"
#include "pctrl/rng.hpp"

namespace pctrl {

struct SolverTrace {
  std::vector<PowerMatrix> iterates;  // iterates[0] is the initial point
  std::vector<double> sum_rate;       // bits/s, one per iterate
  bool converged = false;
  std::size_t iterations = 0;

  const PowerMatrix& final_powers() const { return iterates.back(); }
  double final_sum_rate() const { return sum_rate.back(); }
};

struct SolverOptions {
  std::size_t max_iters = 500;
  // Stop once the spectral efficiency (bits/s/Hz) changes by less than this
  // fraction of its previous value.
  double tol = 1e-4;
  bool keep_iterates = true;  // false keeps only the initial and final matrices
};

PowerMatrix max_power(const NetworkConfig& cfg);
PowerMatrix random_power(const NetworkConfig& cfg, Rng& rng);

// SISO WMMSE on channel magnitudes, started from full power.
SolverTrace wmmse(const ChannelTensor& h, const NetworkConfig& cfg, const SolverOptions& opts = {});

// Quadratic-transform fractional programming, started from full power.
SolverTrace fp(const ChannelTensor& h, const NetworkConfig& cfg, const SolverOptions& opts = {});

}  // namespace pctrl
