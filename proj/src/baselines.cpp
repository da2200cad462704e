#include "pctrl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/core.h>

#include "pctrl/error.hpp"

namespace pctrl {

PowerMatrix max_power(const NetworkConfig& cfg) {
  return PowerMatrix(cfg.num_cells, cfg.users_per_cell, cfg.pmax_watts());
}

PowerMatrix random_power(const NetworkConfig& cfg, Rng& rng) {
  PowerMatrix p(cfg.num_cells, cfg.users_per_cell);
  std::uniform_real_distribution<double> u(0.0, cfg.pmax_watts());
  for (auto& v : p.data()) v = u(rng);
  return p;
}

namespace {

// Records an iterate and reports whether the relative change in spectral
// efficiency fell below tol.
class TraceRecorder {
 public:
  TraceRecorder(const ChannelTensor& h, const NetworkConfig& cfg, const SolverOptions& opts)
      : h_(h), cfg_(cfg), opts_(opts), noise_(noise_power(cfg)) {}

  bool push(const PowerMatrix& p) {
    for (double v : p.data())
      if (!std::isfinite(v))
        throw NumericalError(fmt::format("solver produced a non-finite iterate after {} steps",
                                         trace_.iterations));
    const double r = sum_rate(h_, p, noise_, cfg_.bandwidth_hz);
    bool done = false;
    if (!trace_.sum_rate.empty()) {
      ++trace_.iterations;
      const double prev = trace_.sum_rate.back() / cfg_.bandwidth_hz;
      const double cur = r / cfg_.bandwidth_hz;
      done = std::abs(cur - prev) < opts_.tol * std::max(std::abs(prev), 1e-12);
    }
    if (opts_.keep_iterates || trace_.iterates.size() < 2)
      trace_.iterates.push_back(p);
    else
      trace_.iterates.back() = p;
    trace_.sum_rate.push_back(r);
    return done;
  }

  SolverTrace finish(bool converged) {
    trace_.converged = converged;
    return std::move(trace_);
  }

 private:
  const ChannelTensor& h_;
  const NetworkConfig& cfg_;
  const SolverOptions& opts_;
  double noise_;
  SolverTrace trace_;
};

void check_inputs(const ChannelTensor& h, const NetworkConfig& cfg, const SolverOptions& opts) {
  cfg.validate();
  if (h.num_cells() != cfg.num_cells || h.users_per_cell() != cfg.users_per_cell)
    throw ShapeError("channel tensor does not match the network configuration");
  if (!(opts.tol > 0.0)) throw ConfigError("solver tolerance must be > 0");
}

}  // namespace

SolverTrace wmmse(const ChannelTensor& h, const NetworkConfig& cfg, const SolverOptions& opts) {
  check_inputs(h, cfg, opts);
  const std::size_t B = cfg.num_cells;
  const std::size_t K = cfg.users_per_cell;
  const double pmax = cfg.pmax_watts();
  const double vmax = std::sqrt(pmax);
  const double z = noise_power(cfg);
  auto a = [&](std::size_t tx, std::size_t cell, std::size_t k) { return std::abs(h(tx, cell, k)); };
  auto g = [&](std::size_t tx, std::size_t cell, std::size_t k) { return h.gain(tx, cell, k); };

  PowerMatrix v(B, K, vmax);
  std::vector<char> at_max(B * K, 1);
  PowerMatrix u(B, K), w(B, K);
  auto powers = [&] {
    PowerMatrix p(B, K);
    for (std::size_t i = 0; i < B * K; ++i)
      p.data()[i] = at_max[i] ? pmax : v.data()[i] * v.data()[i];
    return p;
  };

  TraceRecorder rec(h, cfg, opts);
  rec.push(powers());
  bool converged = false;
  for (std::size_t t = 0; t < opts.max_iters && !converged; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < K; ++k) {
        double rx = z;
        for (std::size_t tx = 0; tx < B; ++tx)
          for (std::size_t kk = 0; kk < K; ++kk) rx += g(tx, b, k) * v(tx, kk) * v(tx, kk);
        u(b, k) = a(b, b, k) * v(b, k) / rx;
        w(b, k) = 1.0 / (1.0 - u(b, k) * a(b, b, k) * v(b, k));
      }
    }
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < K; ++k) {
        double den = 0.0;
        for (std::size_t cell = 0; cell < B; ++cell)
          for (std::size_t kk = 0; kk < K; ++kk)
            den += w(cell, kk) * u(cell, kk) * u(cell, kk) * g(b, cell, kk);
        const double num = w(b, k) * u(b, k) * a(b, b, k);
        const double raw = den > 0.0 ? num / den : 0.0;
        at_max[b * K + k] = raw >= vmax;
        v(b, k) = std::clamp(raw, 0.0, vmax);
      }
    }
    converged = rec.push(powers());
  }
  return rec.finish(converged);
}

SolverTrace fp(const ChannelTensor& h, const NetworkConfig& cfg, const SolverOptions& opts) {
  check_inputs(h, cfg, opts);
  const std::size_t B = cfg.num_cells;
  const std::size_t K = cfg.users_per_cell;
  const double pmax = cfg.pmax_watts();
  const double z = noise_power(cfg);
  auto a = [&](std::size_t tx, std::size_t cell, std::size_t k) { return std::abs(h(tx, cell, k)); };
  auto g = [&](std::size_t tx, std::size_t cell, std::size_t k) { return h.gain(tx, cell, k); };

  PowerMatrix p(B, K, pmax);
  PowerMatrix y(B, K), snr(B, K);
  TraceRecorder rec(h, cfg, opts);
  rec.push(p);
  bool converged = false;
  for (std::size_t t = 0; t < opts.max_iters && !converged; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < K; ++k) {
        snr(b, k) = sinr(h, p, z, b, k);
        double rx = z;  // includes the desired signal
        for (std::size_t tx = 0; tx < B; ++tx)
          for (std::size_t kk = 0; kk < K; ++kk) rx += g(tx, b, k) * p(tx, kk);
        y(b, k) = std::sqrt((1.0 + snr(b, k)) * p(b, k)) * a(b, b, k) / rx;
      }
    }
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < K; ++k) {
        double den = 0.0;
        for (std::size_t cell = 0; cell < B; ++cell)
          for (std::size_t kk = 0; kk < K; ++kk) den += y(cell, kk) * y(cell, kk) * g(b, cell, kk);
        const double num = y(b, k) * std::sqrt(1.0 + snr(b, k)) * a(b, b, k);
        const double root = den > 0.0 ? num / den : 0.0;
        p(b, k) = std::min(pmax, root * root);
      }
    }
    converged = rec.push(p);
  }
  return rec.finish(converged);
}

}  // namespace pctrl
