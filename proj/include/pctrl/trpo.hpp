#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "pctrl/netmodel.hpp"
#include "pctrl/neuralnet.hpp"
#include "pctrl/rng.hpp"

namespace pctrl {

enum class Scheme { centralized, partial, full };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view text);

struct Step {
  std::vector<double> state;
  std::vector<double> action;      // watts, after clamping
  std::vector<double> raw_action;  // pre-clamp Gaussian draw
  std::vector<double> log_std;     // policy log sigma when sampled
  double logp = 0.0;               // log density of raw_action under the sampling policy
  double reward = 0.0;             // bits/s
  std::size_t bs = 0;              // acting BS for decentralized schemes
};

struct Episode {
  std::vector<Step> steps;
  ChannelTensor channels;  // kept for replay checks
  PowerMatrix powers;      // allocation the reward was computed from
  double sum_rate = 0.0;
};

struct EpisodeBatch {
  Scheme scheme = Scheme::centralized;
  std::size_t horizon = 1;
  std::vector<Episode> episodes;

  std::size_t num_steps() const { return episodes.size() * horizon; }
  // Throws ShapeError if an episode's length differs from the horizon.
  void validate() const;
  // Visits steps in episode-major order; n is the 0-based step index.
  void for_each_step(const std::function<void(std::size_t flat, std::size_t n, const Step&)>& fn) const;
};

enum class CriticOptimizer { sgd, adam };

struct TrpoConfig {
  double kl_bound = 0.01;
  double step_decay = 0.90;  // zeta
  double gamma = 0.99;
  std::size_t episodes_per_iter = 1000;
  std::size_t cg_iters = 10;
  double cg_tol = 1e-8;
  double fisher_damping = 1e-2;
  std::size_t max_backtracks = 10;
  double critic_lr = 1e-3;
  std::size_t critic_epochs = 5;
  std::size_t critic_minibatch = 64;
  CriticOptimizer critic_optimizer = CriticOptimizer::adam;

  void validate() const;
};

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

// Critic outputs are in units of value_scale (the bandwidth), so the regression
// target is G / value_scale.
struct ActorCritic {
  GaussianPolicy policy;
  ValueNetwork critic;
  double value_scale = 1.0;
};

struct AdvantageEstimate {
  std::vector<double> advantages;  // normalized, episode-major flat order
  std::vector<double> returns;     // G_n, bits/s
  std::vector<double> baseline;    // V-hat(s_n), bits/s
};

// A = G - V(s, mean action), then standardized over the batch.
AdvantageEstimate estimate_advantages(const ActorCritic& ac, const ParamVector& theta,
                                      const ParamVector& phi, const EpisodeBatch& batch,
                                      double gamma);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

struct CriticFit {
  ParamVector phi;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Mini-batch descent on mean squared error between the critic and G.
CriticFit fit_critic(const ActorCritic& ac, const ParamVector& phi, const EpisodeBatch& batch,
                     std::span<const double> returns, const TrpoConfig& cfg, Rng& rng,
                     AdamState* adam = nullptr);

// Per-step score vectors grad log pi(a|s) at theta, with their discount
// weights gamma^(n-1). Rows are cached when they fit in max_cached_doubles;
// otherwise they are recomputed on every pass.
class ScoreSet {
 public:
  ScoreSet(const GaussianPolicy& policy, const ParamVector& theta, const EpisodeBatch& batch,
           double gamma, std::size_t max_cached_doubles = std::size_t{1} << 26);

  std::size_t num_samples() const { return weights_.size(); }
  std::size_t dim() const { return dim_; }
  bool cached() const { return cached_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> log_probs() const { return logp_; }

  void for_each(const std::function<void(std::size_t i, std::span<const double> score)>& fn) const;

 private:
  const GaussianPolicy* policy_;
  const ParamVector* theta_;
  const EpisodeBatch* batch_;
  std::vector<const Step*> steps_;
  std::size_t dim_;
  bool cached_;
  std::vector<double> rows_;
  std::vector<double> weights_;
  std::vector<double> logp_;
};

// g = 1/(MN) sum gamma^(n-1) grad log pi * A
std::vector<double> policy_gradient_estimate(const ScoreSet& scores,
                                             std::span<const double> advantages);
std::vector<double> policy_gradient_estimate(const GaussianPolicy& policy,
                                             const ParamVector& theta, const EpisodeBatch& batch,
                                             std::span<const double> advantages, double gamma);

// 1/(MN) sum (s.v) s + damping v
std::vector<double> fisher_vector_product(const ScoreSet& scores, std::span<const double> v,
                                          double damping);

using LinearOperator = std::function<void(std::span<const double> in, std::span<double> out)>;

struct CgResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double residual_norm = 0.0;
};

CgResult conjugate_gradient(const LinearOperator& op, std::span<const double> g,
                            std::size_t max_iters, double tol);

// sqrt(2 delta / g'x) x; throws DegenerateStepError when g'x <= 0.
std::vector<double> natural_step(std::span<const double> g, std::span<const double> x,
                                 double kl_bound);

// Importance-sampled surrogate relative to the sampling policy whose
// log-probabilities are stored in the batch.
double surrogate_L(const GaussianPolicy& policy, const ParamVector& theta_new,
                   const EpisodeBatch& batch, std::span<const double> advantages, double gamma);

double mean_kl(const GaussianPolicy& policy, const ParamVector& theta_old,
               const ParamVector& theta_new, const EpisodeBatch& batch);
double mean_kl(const GaussianPolicy& policy, std::span<const GaussianHead> old_heads,
               const ParamVector& theta_new, const EpisodeBatch& batch);

struct LineSearchResult {
  ParamVector theta;
  bool accepted = false;
  std::size_t j_used = 0;
  double kl = 0.0;
  double surrogate = 0.0;
};

LineSearchResult line_search_update(const GaussianPolicy& policy, const ParamVector& theta,
                                    std::span<const double> step, const EpisodeBatch& batch,
                                    std::span<const double> advantages, const TrpoConfig& cfg);

// Fixed-step policy-gradient ascent; no KL check.
ParamVector a2c_update(const GaussianPolicy& policy, const ParamVector& theta,
                       const EpisodeBatch& batch, std::span<const double> advantages,
                       double gamma, double step_size);

}  // namespace pctrl
