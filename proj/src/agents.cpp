#include "pctrl/agents.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/core.h>
#include <numeric>

#include "pctrl/parallel.hpp"

namespace pctrl {

std::string_view to_string(Algorithm algo) { return algo == Algorithm::trpo ? "trpo" : "a2c"; }

Algorithm parse_algorithm(std::string_view text) {
  if (text == "trpo") return Algorithm::trpo;
  if (text == "a2c") return Algorithm::a2c;
  throw ConfigError(fmt::format("unknown algorithm '{}'", text));
}

AgentShape agent_shape(Scheme scheme, const NetworkConfig& cfg) {
  const std::size_t B = cfg.num_cells;
  const std::size_t K = cfg.users_per_cell;
  switch (scheme) {
    case Scheme::centralized: return {K * B * B, K * B};
    case Scheme::partial: return {K * B + (B - 1) * K, K};
    case Scheme::full: return {K * B, K};
  }
  throw ConfigError("unknown scheme");
}

NormalizationConstants NormalizationConstants::identity(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

void NormalizationConstants::validate() const {
  if (shift.size() != scale.size()) throw ShapeError("normalization shift/scale size mismatch");
  for (std::size_t i = 0; i < scale.size(); ++i)
    if (!(scale[i] > 0.0) || !std::isfinite(scale[i]) || !std::isfinite(shift[i]))
      throw ConfigError("normalization scales must be positive and finite");
}

ChannelSampler random_channels(const NetworkConfig& cfg) {
  cfg.validate();
  return [cfg](Rng& rng) {
    const auto geom = sample_geometry(cfg, rng);
    return sample_channels(geom, cfg, rng);
  };
}

ChannelSampler fixed_channels(ChannelTensor h) {
  return [h = std::move(h)](Rng&) { return h; };
}

Scenario::Scenario(NetworkConfig cfg, ConstraintMode m)
    : net(cfg), mode(m), channels(random_channels(cfg)) {}

Scenario::Scenario(NetworkConfig cfg, ConstraintMode m, ChannelSampler sampler)
    : net(cfg), mode(m), channels(std::move(sampler)) {
  net.validate();
}

std::vector<std::size_t> cyclic_peers(std::size_t num_cells, std::size_t bs) {
  std::vector<std::size_t> peers;
  for (std::size_t i = 1; i < num_cells; ++i) peers.push_back((bs + i) % num_cells);
  return peers;
}

std::vector<std::size_t> acting_peers(std::span<const std::size_t> order, std::size_t position) {
  std::vector<std::size_t> peers;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (i != position) peers.push_back(order[i]);
  return peers;
}

std::vector<double> csi_features_db(const ChannelTensor& h, Scheme scheme, std::size_t bs_index,
                                    std::span<const std::size_t> peers) {
  const std::size_t B = h.num_cells();
  const std::size_t K = h.users_per_cell();
  auto db = [&](std::size_t tx, std::size_t cell, std::size_t k) {
    return 10.0 * std::log10(h.gain(tx, cell, k));
  };
  std::vector<double> f;
  if (scheme == Scheme::centralized) {
    f.reserve(B * B * K);
    for (std::size_t tx = 0; tx < B; ++tx)
      for (std::size_t cell = 0; cell < B; ++cell)
        for (std::size_t k = 0; k < K; ++k) f.push_back(db(tx, cell, k));
    return f;
  }
  if (bs_index >= B) throw ShapeError("bs_index out of range");
  std::vector<std::size_t> cells{bs_index};
  if (peers.empty()) {
    const auto c = cyclic_peers(B, bs_index);
    cells.insert(cells.end(), c.begin(), c.end());
  } else {
    if (peers.size() != B - 1) throw ShapeError("peer order must list the other B-1 cells");
    cells.insert(cells.end(), peers.begin(), peers.end());
  }
  f.reserve(B * K);
  for (auto cell : cells)
    for (std::size_t k = 0; k < K; ++k) f.push_back(db(bs_index, cell, k));
  return f;
}

namespace {

void normalize_prefix(std::vector<double>& f, const NormalizationConstants& norm) {
  if (norm.dim() < f.size()) throw ShapeError("normalization constants are too short");
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = (f[i] - norm.shift[i]) / norm.scale[i];
}

std::vector<std::size_t> random_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

std::vector<double> raw_partial_state(const ChannelTensor& h, std::span<const std::size_t> order,
                                      std::size_t position, const PowerMatrix& allocated,
                                      double pmax_watts) {
  const std::size_t B = h.num_cells();
  const std::size_t K = h.users_per_cell();
  const auto peers = acting_peers(order, position);
  auto f = csi_features_db(h, Scheme::partial, order[position], peers);
  f.resize(B * K + (B - 1) * K, 0.0);
  for (std::size_t j = 0; j < position; ++j)
    for (std::size_t k = 0; k < K; ++k) f[B * K + j * K + k] = allocated(order[j], k) / pmax_watts;
  return f;
}

}  // namespace

std::vector<double> encode_csi(const ChannelTensor& h, Scheme scheme, std::size_t bs_index,
                               const NormalizationConstants& norm,
                               std::span<const std::size_t> peers) {
  auto f = csi_features_db(h, scheme, bs_index, peers);
  normalize_prefix(f, norm);
  return f;
}

std::vector<double> encode_partial_state(const ChannelTensor& h,
                                         std::span<const std::size_t> order,
                                         std::size_t position, const PowerMatrix& allocated,
                                         double pmax_watts, const NormalizationConstants& norm) {
  if (order.size() != h.num_cells() || position >= order.size())
    throw ShapeError("acting order does not match the network");
  auto f = raw_partial_state(h, order, position, allocated, pmax_watts);
  const std::size_t csi = h.num_cells() * h.users_per_cell();
  if (norm.dim() != f.size()) throw ShapeError("normalization does not match partial state");
  for (std::size_t i = 0; i < csi; ++i) f[i] = (f[i] - norm.shift[i]) / norm.scale[i];
  return f;
}

Agent make_agent(Scheme scheme, const NetworkConfig& cfg, const std::vector<std::size_t>& hidden,
                 NormalizationConstants norm) {
  cfg.validate();
  const auto shape = agent_shape(scheme, cfg);
  if (norm.dim() != shape.state_dim)
    throw ShapeError(fmt::format("normalization has {} features, scheme needs {}", norm.dim(),
                                 shape.state_dim));
  norm.validate();
  return Agent{scheme, cfg,
               ActorCritic{GaussianPolicy(shape.state_dim, shape.action_dim, hidden,
                                          cfg.pmax_watts()),
                           ValueNetwork(shape.state_dim, 2 * shape.action_dim, hidden),
                           cfg.bandwidth_hz},
               std::move(norm)};
}

NormalizationConstants compute_normalization(Scheme scheme, const Scenario& scenario,
                                             std::size_t samples, Rng& rng) {
  const auto shape = agent_shape(scheme, scenario.net);
  const std::size_t B = scenario.net.num_cells;
  const std::size_t csi = scheme == Scheme::centralized ? shape.state_dim
                                                        : B * scenario.net.users_per_cell;
  std::vector<double> mean(csi, 0.0), m2(csi, 0.0);
  std::size_t count = 0;
  auto push = [&](const std::vector<double>& f) {
    ++count;
    for (std::size_t i = 0; i < csi; ++i) {
      const double d = f[i] - mean[i];
      mean[i] += d / static_cast<double>(count);
      m2[i] += d * (f[i] - mean[i]);
    }
  };
  for (std::size_t s = 0; s < samples; ++s) {
    const auto h = scenario.channels(rng);
    switch (scheme) {
      case Scheme::centralized: push(csi_features_db(h, scheme, 0)); break;
      case Scheme::partial: {
        const auto order = random_order(B, rng);
        for (std::size_t pos = 0; pos < B; ++pos)
          push(csi_features_db(h, scheme, order[pos], acting_peers(order, pos)));
        break;
      }
      case Scheme::full:
        for (std::size_t b = 0; b < B; ++b) push(csi_features_db(h, scheme, b));
        break;
    }
  }
  auto norm = NormalizationConstants::identity(shape.state_dim);
  for (std::size_t i = 0; i < csi && count > 0; ++i) {
    norm.shift[i] = mean[i];
    const double sd = count > 1 ? std::sqrt(m2[i] / static_cast<double>(count - 1)) : 0.0;
    norm.scale[i] = (sd > 1e-9 && std::isfinite(sd)) ? sd : 1.0;
  }
  return norm;
}

namespace {

Step decide_step(const Agent& agent, const ParamVector& theta, std::vector<double> state,
                 Rng& rng, const ActOptions& opts, double pmax) {
  const auto& policy = agent.ac.policy;
  auto head = policy.forward(theta, state);
  if (opts.sigma_floor) std::fill(head.log_std.begin(), head.log_std.end(), policy.log_std_min());
  Step step;
  step.state = std::move(state);
  std::normal_distribution<double> n(0.0, 1.0);
  step.raw_action.resize(head.dim());
  step.action.resize(head.dim());
  for (std::size_t j = 0; j < head.dim(); ++j) {
    step.raw_action[j] = head.mean[j] + std::exp(head.log_std[j]) * n(rng);
    step.action[j] = std::clamp(opts.output_scale * step.raw_action[j], 0.0, pmax);
  }
  step.logp = log_density(head, step.raw_action);
  step.log_std = std::move(head.log_std);
  return step;
}

void project_row(PowerMatrix& p, std::size_t b, double pmax, ConstraintMode mode) {
  if (mode != ConstraintMode::sum_power) return;
  PowerMatrix row(1, p.users_per_cell());
  for (std::size_t k = 0; k < p.users_per_cell(); ++k) row(0, k) = p(b, k);
  row = project_powers(row, pmax, mode);
  for (std::size_t k = 0; k < p.users_per_cell(); ++k) p(b, k) = row(0, k);
}

}  // namespace

Step act_local(const Agent& agent, const ParamVector& theta, const ChannelTensor& h,
               std::size_t bs, Rng& rng, const ActOptions& opts) {
  if (agent.scheme != Scheme::full) throw ShapeError("act_local needs a full-scheme agent");
  const double pmax = opts.pmax_watts > 0.0 ? opts.pmax_watts : agent.net.pmax_watts();
  auto step = decide_step(agent, theta, encode_csi(h, Scheme::full, bs, agent.norm), rng, opts, pmax);
  step.bs = bs;
  return step;
}

Episode act(const Agent& agent, const ParamVector& theta, const ChannelTensor& h,
            ConstraintMode mode, Rng& rng, const ActOptions& opts) {
  const auto& net = agent.net;
  const std::size_t B = net.num_cells;
  const std::size_t K = net.users_per_cell;
  if (h.num_cells() != B || h.users_per_cell() != K)
    throw ShapeError("channel tensor does not match the agent's network");
  const double pmax = opts.pmax_watts > 0.0 ? opts.pmax_watts : net.pmax_watts();
  Episode ep;
  ep.channels = h;
  ep.powers = PowerMatrix(B, K);
  switch (agent.scheme) {
    case Scheme::centralized: {
      auto step = decide_step(agent, theta, encode_csi(h, Scheme::centralized, 0, agent.norm), rng,
                              opts, pmax);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) ep.powers(b, k) = step.action[b * K + k];
      ep.steps.push_back(std::move(step));
      break;
    }
    case Scheme::partial: {
      const auto order = random_order(B, rng);
      for (std::size_t pos = 0; pos < B; ++pos) {
        const std::size_t b = order[pos];
        auto state = encode_partial_state(h, order, pos, ep.powers, pmax, agent.norm);
        auto step = decide_step(agent, theta, std::move(state), rng, opts, pmax);
        step.bs = b;
        for (std::size_t k = 0; k < K; ++k) ep.powers(b, k) = step.action[k];
        project_row(ep.powers, b, pmax, mode);
        ep.steps.push_back(std::move(step));
      }
      break;
    }
    case Scheme::full: {
      for (std::size_t b = 0; b < B; ++b) {
        auto step = act_local(agent, theta, h, b, rng, opts);
        for (std::size_t k = 0; k < K; ++k) ep.powers(b, k) = step.action[k];
        ep.steps.push_back(std::move(step));
      }
      break;
    }
  }
  ep.powers = project_powers(ep.powers, pmax, mode);
  ep.sum_rate = sum_rate(h, ep.powers, noise_power(net), net.bandwidth_hz);
  ep.steps.back().reward = ep.sum_rate;
  return ep;
}

namespace {

Episode rollout_checked(Scheme expected, const Agent& agent, const ParamVector& theta,
                        const Scenario& scenario, Rng& rng, const ActOptions& opts) {
  if (agent.scheme != expected)
    throw ShapeError(fmt::format("agent is {}, rollout is {}", to_string(agent.scheme),
                                 to_string(expected)));
  return rollout(agent, theta, scenario, rng, opts);
}

}  // namespace

Episode rollout(const Agent& agent, const ParamVector& theta, const Scenario& scenario, Rng& rng,
                const ActOptions& opts) {
  const auto h = scenario.channels(rng);
  return act(agent, theta, h, scenario.mode, rng, opts);
}

Episode rollout_centralized(const Agent& agent, const ParamVector& theta,
                            const Scenario& scenario, Rng& rng, const ActOptions& opts) {
  return rollout_checked(Scheme::centralized, agent, theta, scenario, rng, opts);
}

Episode rollout_partial(const Agent& agent, const ParamVector& theta, const Scenario& scenario,
                        Rng& rng, const ActOptions& opts) {
  return rollout_checked(Scheme::partial, agent, theta, scenario, rng, opts);
}

Episode rollout_full(const Agent& agent, const ParamVector& theta, const Scenario& scenario,
                     Rng& rng, const ActOptions& opts) {
  return rollout_checked(Scheme::full, agent, theta, scenario, rng, opts);
}

std::vector<double> smooth_curve(std::span<const double> raw, double w) {
  if (!(w > 0.0 && w <= 1.0)) throw ConfigError("smoothing factor must be in (0,1]");
  std::vector<double> s(raw.size());
  for (std::size_t n = 0; n < raw.size(); ++n)
    s[n] = n == 0 ? raw[0] : w * raw[n] + (1.0 - w) * s[n - 1];
  return s;
}

TrainResult train(Scheme scheme, const Scenario& scenario, const TrpoConfig& tcfg,
                  const TrainOptions& opts, const IterationCallback& on_iteration) {
  tcfg.validate();
  scenario.net.validate();
  Rng norm_rng = make_rng(opts.seed, Stream::normalization);
  auto norm = compute_normalization(scheme, scenario, opts.norm_samples, norm_rng);
  TrainResult res{make_agent(scheme, scenario.net, opts.hidden, std::move(norm)), {}, {}, {}};
  const auto& ac = res.agent.ac;
  {
    Rng init_rng = make_rng(opts.seed, Stream::init);
    res.theta = ac.policy.init(init_rng);
    res.phi = ac.critic.init(init_rng);
  }
  const std::size_t horizon = scheme == Scheme::centralized ? 1 : scenario.net.num_cells;
  AdamState adam;
  double smoothed = 0.0;

  for (std::size_t it = 0; it < opts.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeBatch batch{scheme, horizon, std::vector<Episode>(tcfg.episodes_per_iter)};
    parallel_for(tcfg.episodes_per_iter, [&](std::size_t m) {
      Rng rng = make_rng(opts.seed, Stream::rollout, {it, m});
      batch.episodes[m] = rollout(res.agent, res.theta, scenario, rng);
    });

    IterationLog rec;
    rec.iteration = it;
    for (const auto& ep : batch.episodes) rec.mean_reward += ep.sum_rate;
    rec.mean_reward /= static_cast<double>(batch.episodes.size());
    smoothed = it == 0 ? rec.mean_reward
                       : opts.smoothing * rec.mean_reward + (1.0 - opts.smoothing) * smoothed;
    rec.smoothed_reward = smoothed;

    const auto adv = estimate_advantages(ac, res.theta, res.phi, batch, tcfg.gamma);
    Rng critic_rng = make_rng(opts.seed, Stream::critic, {it});
    auto fit = fit_critic(ac, res.phi, batch, adv.returns, tcfg, critic_rng, &adam);
    rec.critic_loss = fit.final_loss;

    ParamVector next = res.theta;
    if (opts.algorithm == Algorithm::trpo) {
      const ScoreSet scores(ac.policy, res.theta, batch, tcfg.gamma);
      const auto g = policy_gradient_estimate(scores, adv.advantages);
      try {
        const auto cg = conjugate_gradient(
            [&](std::span<const double> v, std::span<double> out) {
              const auto fv = fisher_vector_product(scores, v, tcfg.fisher_damping);
              std::copy(fv.begin(), fv.end(), out.begin());
            },
            g, tcfg.cg_iters, tcfg.cg_tol);
        const auto step = natural_step(g, cg.x, tcfg.kl_bound);
        auto ls = line_search_update(ac.policy, res.theta, step, batch, adv.advantages, tcfg);
        rec.accepted = ls.accepted;
        rec.j_used = ls.j_used;
        if (ls.accepted) {
          rec.kl = ls.kl;
          rec.surrogate = ls.surrogate;
          next = std::move(ls.theta);
        }
      } catch (const NumericalError&) {
        // Degenerate direction: keep theta for this iteration.
      }
    } else {
      next = a2c_update(ac.policy, res.theta, batch, adv.advantages, tcfg.gamma, opts.a2c_step);
      if (next.all_finite()) {
        rec.kl = mean_kl(ac.policy, res.theta, next, batch);
        rec.surrogate = surrogate_L(ac.policy, next, batch, adv.advantages, tcfg.gamma);
      }
      rec.accepted = true;
    }
    if (!next.all_finite() || !fit.phi.all_finite())
      throw TrainingAborted(fmt::format("non-finite parameters at iteration {}", it), res);
    res.theta = std::move(next);
    res.phi = std::move(fit.phi);
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(rec);
    if (on_iteration) on_iteration(rec);
  }
  return res;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EvalSummary summarize(std::vector<double> sum_rates, std::vector<double> decision_ms) {
  EvalSummary s;
  s.sum_rates = std::move(sum_rates);
  s.decision_ms = std::move(decision_ms);
  const auto n = static_cast<double>(s.sum_rates.size());
  if (s.sum_rates.empty()) return s;
  s.mean = std::accumulate(s.sum_rates.begin(), s.sum_rates.end(), 0.0) / n;
  double var = 0.0;
  for (double r : s.sum_rates) var += (r - s.mean) * (r - s.mean);
  s.stddev = std::sqrt(var / n);
  s.p05 = percentile(s.sum_rates, 0.05);
  s.p50 = percentile(s.sum_rates, 0.50);
  s.p95 = percentile(s.sum_rates, 0.95);
  if (!s.decision_ms.empty())
    s.mean_decision_ms = std::accumulate(s.decision_ms.begin(), s.decision_ms.end(), 0.0) /
                         static_cast<double>(s.decision_ms.size());
  return s;
}

ChannelTensor evaluation_channels(const Scenario& scenario, std::uint64_t seed, std::size_t i) {
  Rng rng = make_rng(seed, Stream::eval_channel, {i});
  return scenario.channels(rng);
}

EvalSummary evaluate(const Agent& agent, const ParamVector& theta, const Scenario& scenario,
                     std::size_t n_realizations, std::uint64_t seed, ActOptions opts) {
  opts.sigma_floor = true;
  std::vector<double> rates(n_realizations), ms(n_realizations);
  parallel_for(n_realizations, [&](std::size_t i) {
    const auto h = evaluation_channels(scenario, seed, i);
    Rng rng = make_rng(seed, Stream::eval_policy, {i});
    const auto t0 = std::chrono::steady_clock::now();
    const auto ep = act(agent, theta, h, scenario.mode, rng, opts);
    ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    rates[i] = ep.sum_rate;
  });
  return summarize(std::move(rates), std::move(ms));
}

}  // namespace pctrl
