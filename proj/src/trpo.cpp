#include "pctrl/trpo.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <numeric>

#include "pctrl/error.hpp"
#include "pctrl/parallel.hpp"

namespace pctrl {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::centralized: return "centralized";
    case Scheme::partial: return "partial";
    case Scheme::full: return "full";
  }
  return "?";
}

Scheme parse_scheme(std::string_view text) {
  if (text == "centralized") return Scheme::centralized;
  if (text == "partial") return Scheme::partial;
  if (text == "full") return Scheme::full;
  throw ConfigError(fmt::format("unknown scheme '{}'", text));
}

void EpisodeBatch::validate() const {
  for (const auto& ep : episodes)
    if (ep.steps.size() != horizon)
      throw ShapeError(fmt::format("episode has {} steps, batch horizon is {}", ep.steps.size(),
                                   horizon));
}

void EpisodeBatch::for_each_step(
    const std::function<void(std::size_t, std::size_t, const Step&)>& fn) const {
  std::size_t flat = 0;
  for (const auto& ep : episodes)
    for (std::size_t n = 0; n < ep.steps.size(); ++n) fn(flat++, n, ep.steps[n]);
}

void TrpoConfig::validate() const {
  if (!(kl_bound > 0.0)) throw ConfigError("kl_bound must be > 0");
  if (!(step_decay > 0.0 && step_decay < 1.0)) throw ConfigError("step_decay must be in (0,1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0,1]");
  if (episodes_per_iter < 1) throw ConfigError("episodes_per_iter must be >= 1");
  if (!(fisher_damping >= 0.0)) throw ConfigError("fisher_damping must be >= 0");
  if (!(critic_lr >= 0.0)) throw ConfigError("critic_lr must be >= 0");
  if (critic_minibatch < 1) throw ConfigError("critic_minibatch must be >= 1");
  if (cg_iters < 1) throw ConfigError("cg_iters must be >= 1");
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t n = rewards.size(); n-- > 0;) {
    acc = rewards[n] + gamma * acc;
    g[n] = acc;
  }
  return g;
}

namespace {

std::vector<const Step*> flatten_steps(const EpisodeBatch& batch) {
  std::vector<const Step*> steps;
  steps.reserve(batch.num_steps());
  batch.for_each_step([&](std::size_t, std::size_t, const Step& s) { steps.push_back(&s); });
  return steps;
}

std::vector<double> step_discounts(const EpisodeBatch& batch, double gamma) {
  std::vector<double> w;
  w.reserve(batch.num_steps());
  batch.for_each_step(
      [&](std::size_t, std::size_t n, const Step&) { w.push_back(std::pow(gamma, n)); });
  return w;
}

std::vector<double> critic_input_action(const ActorCritic& ac, const Step& s) {
  return value_action_features(s.action, s.log_std, ac.policy.pmax_watts());
}

double critic_loss(const ActorCritic& ac, const ParamVector& phi,
                   const std::vector<const Step*>& steps, std::span<const double> targets) {
  std::vector<double> sq(steps.size());
  parallel_for(steps.size(), [&](std::size_t i) {
    const double v = ac.critic.forward(phi, steps[i]->state, critic_input_action(ac, *steps[i]));
    sq[i] = (v - targets[i]) * (v - targets[i]);
  });
  return std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(steps.size());
}

}  // namespace

AdvantageEstimate estimate_advantages(const ActorCritic& ac, const ParamVector& theta,
                                      const ParamVector& phi, const EpisodeBatch& batch,
                                      double gamma) {
  batch.validate();
  AdvantageEstimate est;
  for (const auto& ep : batch.episodes) {
    std::vector<double> r;
    for (const auto& s : ep.steps) r.push_back(s.reward);
    const auto g = discounted_returns(r, gamma);
    est.returns.insert(est.returns.end(), g.begin(), g.end());
  }
  const auto steps = flatten_steps(batch);
  const std::size_t n = steps.size();
  est.baseline.resize(n);
  const double pmax = ac.policy.pmax_watts();
  parallel_for(n, [&](std::size_t i) {
    const auto head = ac.policy.forward(theta, steps[i]->state);
    std::vector<double> mean_action(head.mean);
    for (auto& m : mean_action) m = std::clamp(m, 0.0, pmax);
    const auto feat = value_action_features(mean_action, head.log_std, pmax);
    est.baseline[i] = ac.value_scale * ac.critic.forward(phi, steps[i]->state, feat);
  });
  est.advantages.resize(n);
  for (std::size_t i = 0; i < n; ++i) est.advantages[i] = est.returns[i] - est.baseline[i];
  if (n == 0) return est;
  const double mean =
      std::accumulate(est.advantages.begin(), est.advantages.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (auto& a : est.advantages) {
    a -= mean;
    var += a * a;
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd > 0.0 && std::isfinite(sd))
    for (auto& a : est.advantages) a /= sd;
  return est;
}

CriticFit fit_critic(const ActorCritic& ac, const ParamVector& phi, const EpisodeBatch& batch,
                     std::span<const double> returns, const TrpoConfig& cfg, Rng& rng,
                     AdamState* adam) {
  ac.critic.check_params(phi);
  const auto steps = flatten_steps(batch);
  if (returns.size() != steps.size()) throw ShapeError("returns do not match batch size");
  std::vector<double> targets(returns.begin(), returns.end());
  for (auto& t : targets) t /= ac.value_scale;

  CriticFit fit{phi, 0.0, 0.0};
  fit.initial_loss = critic_loss(ac, phi, steps, targets);
  const std::size_t n = steps.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(phi.size());
  AdamState local;
  AdamState& st = adam ? *adam : local;
  if (st.m.size() != phi.size()) {
    st.m.assign(phi.size(), 0.0);
    st.v.assign(phi.size(), 0.0);
    st.t = 0;
  }
  auto params = fit.phi.values();
  for (std::size_t epoch = 0; epoch < cfg.critic_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    for (std::size_t start = 0; start < n; start += cfg.critic_minibatch) {
      const std::size_t end = std::min(n, start + cfg.critic_minibatch);
      const double scale = 2.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const Step& s = *steps[order[b]];
        // d/dphi (v - t)^2 = 2 (v - t) dv/dphi; evaluate v first for the residual.
        const auto feat = critic_input_action(ac, s);
        const double v = ac.critic.forward(fit.phi, s.state, feat);
        ac.critic.forward_and_grad(fit.phi, s.state, feat, grad, scale * (v - targets[order[b]]));
      }
      if (cfg.critic_optimizer == CriticOptimizer::sgd) {
        for (std::size_t k = 0; k < params.size(); ++k) params[k] -= cfg.critic_lr * grad[k];
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++st.t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
        for (std::size_t k = 0; k < params.size(); ++k) {
          st.m[k] = b1 * st.m[k] + (1.0 - b1) * grad[k];
          st.v[k] = b2 * st.v[k] + (1.0 - b2) * grad[k] * grad[k];
          params[k] -= cfg.critic_lr * (st.m[k] / c1) / (std::sqrt(st.v[k] / c2) + eps);
        }
      }
    }
  }
  fit.final_loss = critic_loss(ac, fit.phi, steps, targets);
  if (!std::isfinite(fit.final_loss) || !fit.phi.all_finite())
    throw TrainingError("critic fit diverged (non-finite loss)");
  return fit;
}

// --- scores -----------------------------------------------------------------

ScoreSet::ScoreSet(const GaussianPolicy& policy, const ParamVector& theta,
                   const EpisodeBatch& batch, double gamma, std::size_t max_cached_doubles)
    : policy_(&policy),
      theta_(&theta),
      batch_(&batch),
      steps_(flatten_steps(batch)),
      dim_(theta.size()),
      cached_(steps_.size() * theta.size() <= max_cached_doubles),
      weights_(step_discounts(batch, gamma)),
      logp_(steps_.size()) {
  policy.check_params(theta);
  if (cached_) rows_.resize(steps_.size() * dim_);
  parallel_for(steps_.size(), [&](std::size_t i) {
    if (cached_) {
      std::span<double> row(rows_.data() + i * dim_, dim_);
      logp_[i] = policy.log_prob_and_grad(theta, steps_[i]->state, steps_[i]->raw_action, row);
    } else {
      logp_[i] = policy.log_prob(theta, steps_[i]->state, steps_[i]->raw_action);
    }
  });
}

void ScoreSet::for_each(
    const std::function<void(std::size_t, std::span<const double>)>& fn) const {
  if (cached_) {
    for (std::size_t i = 0; i < steps_.size(); ++i)
      fn(i, std::span<const double>(rows_.data() + i * dim_, dim_));
    return;
  }
  std::vector<double> row(dim_);
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    policy_->log_prob_and_grad(*theta_, steps_[i]->state, steps_[i]->raw_action, row);
    fn(i, row);
  }
}

std::vector<double> policy_gradient_estimate(const ScoreSet& scores,
                                             std::span<const double> advantages) {
  if (advantages.size() != scores.num_samples())
    throw ShapeError("advantages do not match the batch");
  std::vector<double> g(scores.dim(), 0.0);
  const auto w = scores.weights();
  scores.for_each([&](std::size_t i, std::span<const double> s) {
    axpy(w[i] * advantages[i], s, g);
  });
  const double inv = scores.num_samples() ? 1.0 / static_cast<double>(scores.num_samples()) : 0.0;
  for (auto& v : g) v *= inv;
  return g;
}

std::vector<double> policy_gradient_estimate(const GaussianPolicy& policy,
                                             const ParamVector& theta, const EpisodeBatch& batch,
                                             std::span<const double> advantages, double gamma) {
  return policy_gradient_estimate(ScoreSet(policy, theta, batch, gamma), advantages);
}

std::vector<double> fisher_vector_product(const ScoreSet& scores, std::span<const double> v,
                                          double damping) {
  if (v.size() != scores.dim()) throw ShapeError("FVP vector has the wrong size");
  std::vector<double> out(v.size(), 0.0);
  scores.for_each([&](std::size_t, std::span<const double> s) { axpy(dot(s, v), s, out); });
  const double inv = scores.num_samples() ? 1.0 / static_cast<double>(scores.num_samples()) : 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = inv * out[k] + damping * v[k];
  return out;
}

CgResult conjugate_gradient(const LinearOperator& op, std::span<const double> g,
                            std::size_t max_iters, double tol) {
  const std::size_t n = g.size();
  CgResult res;
  res.x.assign(n, 0.0);
  std::vector<double> r(g.begin(), g.end());
  std::vector<double> p(r);
  std::vector<double> ap(n);
  double rr = dot(r, r);
  res.residual_norm = std::sqrt(rr);
  while (res.iterations < max_iters && res.residual_norm >= tol) {
    op(p, ap);
    const double pap = dot(p, ap);
    if (!std::isfinite(pap)) throw NumericalError("conjugate gradient: non-finite curvature");
    if (pap <= 0.0) throw NumericalError("conjugate gradient: operator is not positive definite");
    const double alpha = rr / pap;
    axpy(alpha, p, res.x);
    axpy(-alpha, ap, r);
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
    rr = rr_new;
    res.residual_norm = std::sqrt(rr);
    ++res.iterations;
    if (!std::isfinite(res.residual_norm)) throw NumericalError("conjugate gradient diverged");
  }
  return res;
}

std::vector<double> natural_step(std::span<const double> g, std::span<const double> x,
                                 double kl_bound) {
  if (g.size() != x.size()) throw ShapeError("natural_step: size mismatch");
  const double gx = dot(g, x);
  if (!std::isfinite(gx) || !(gx > 0.0))
    throw DegenerateStepError(fmt::format("degenerate natural step (g'F^-1 g = {})", gx));
  const double scale = std::sqrt(2.0 * kl_bound / gx);
  std::vector<double> step(x.begin(), x.end());
  for (auto& v : step) v *= scale;
  return step;
}

double surrogate_L(const GaussianPolicy& policy, const ParamVector& theta_new,
                   const EpisodeBatch& batch, std::span<const double> advantages, double gamma) {
  const auto steps = flatten_steps(batch);
  if (advantages.size() != steps.size()) throw ShapeError("advantages do not match the batch");
  const auto w = step_discounts(batch, gamma);
  std::vector<double> terms(steps.size());
  parallel_for(steps.size(), [&](std::size_t i) {
    const double lp = policy.log_prob(theta_new, steps[i]->state, steps[i]->raw_action);
    // ratio - 1, so the theta_new = theta_old baseline cancels exactly.
    terms[i] = w[i] * std::expm1(lp - steps[i]->logp) * advantages[i];
  });
  if (steps.empty()) return 0.0;
  return std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(steps.size());
}

double mean_kl(const GaussianPolicy& policy, std::span<const GaussianHead> old_heads,
               const ParamVector& theta_new, const EpisodeBatch& batch) {
  const auto steps = flatten_steps(batch);
  if (old_heads.size() != steps.size()) throw ShapeError("old heads do not match the batch");
  std::vector<double> kl(steps.size());
  parallel_for(steps.size(), [&](std::size_t i) {
    kl[i] = kl_diag_gaussian(policy.forward(theta_new, steps[i]->state), old_heads[i]);
  });
  if (steps.empty()) return 0.0;
  return std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(steps.size());
}

namespace {

std::vector<GaussianHead> heads_at(const GaussianPolicy& policy, const ParamVector& theta,
                                   const EpisodeBatch& batch) {
  const auto steps = flatten_steps(batch);
  std::vector<GaussianHead> heads(steps.size());
  parallel_for(steps.size(),
               [&](std::size_t i) { heads[i] = policy.forward(theta, steps[i]->state); });
  return heads;
}

}  // namespace

double mean_kl(const GaussianPolicy& policy, const ParamVector& theta_old,
               const ParamVector& theta_new, const EpisodeBatch& batch) {
  return mean_kl(policy, heads_at(policy, theta_old, batch), theta_new, batch);
}

LineSearchResult line_search_update(const GaussianPolicy& policy, const ParamVector& theta,
                                    std::span<const double> step, const EpisodeBatch& batch,
                                    std::span<const double> advantages, const TrpoConfig& cfg) {
  if (step.size() != theta.size()) throw ShapeError("line search step has the wrong size");
  const auto old_heads = heads_at(policy, theta, batch);
  LineSearchResult res{theta, false, 0, 0.0, 0.0};
  double frac = 1.0;
  for (std::size_t j = 0; j <= cfg.max_backtracks; ++j, frac *= cfg.step_decay) {
    ParamVector candidate = theta;
    axpy(frac, step, candidate.values());
    if (!candidate.all_finite()) continue;
    const double kl = mean_kl(policy, old_heads, candidate, batch);
    const double L = surrogate_L(policy, candidate, batch, advantages, cfg.gamma);
    res.j_used = j;
    if (std::isfinite(kl) && std::isfinite(L) && L >= 0.0 && kl <= cfg.kl_bound) {
      res.theta = std::move(candidate);
      res.accepted = true;
      res.kl = kl;
      res.surrogate = L;
      return res;
    }
  }
  return res;
}

ParamVector a2c_update(const GaussianPolicy& policy, const ParamVector& theta,
                       const EpisodeBatch& batch, std::span<const double> advantages,
                       double gamma, double step_size) {
  const auto g = policy_gradient_estimate(policy, theta, batch, advantages, gamma);
  ParamVector out = theta;
  axpy(step_size, g, out.values());
  return out;
}

}  // namespace pctrl
