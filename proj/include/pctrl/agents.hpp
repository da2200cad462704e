#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "pctrl/error.hpp"
#include "pctrl/netmodel.hpp"
#include "pctrl/neuralnet.hpp"
#include "pctrl/trpo.hpp"

namespace pctrl {

enum class Algorithm { trpo, a2c };

std::string_view to_string(Algorithm algo);
Algorithm parse_algorithm(std::string_view text);

struct AgentShape {
  std::size_t state_dim;
  std::size_t action_dim;
};

// centralized: KB^2 -> KB; partial: KB + (B-1)K -> K; full: KB -> K.
AgentShape agent_shape(Scheme scheme, const NetworkConfig& cfg);

// Per-feature affine map applied to raw state features: (x - shift) / scale.
struct NormalizationConstants {
  std::vector<double> shift;
  std::vector<double> scale;

  static NormalizationConstants identity(std::size_t dim);
  std::size_t dim() const { return shift.size(); }
  void validate() const;
};

using ChannelSampler = std::function<ChannelTensor(Rng&)>;

// Geometry + Rayleigh channels drawn fresh on every call.
ChannelSampler random_channels(const NetworkConfig& cfg);
// Always returns the same tensor; consumes no randomness.
ChannelSampler fixed_channels(ChannelTensor h);

struct Scenario {
  NetworkConfig net;
  ConstraintMode mode = ConstraintMode::per_user;
  ChannelSampler channels;

  explicit Scenario(NetworkConfig cfg, ConstraintMode m = ConstraintMode::per_user);
  Scenario(NetworkConfig cfg, ConstraintMode m, ChannelSampler sampler);
  double noise_w() const { return noise_power(net); }
};

// Decentralized schemes see the other cells in a per-BS "peer order". For the
// full scheme it is cyclic (b+1, b+2, ...); for the partial scheme it is the
// acting order with b removed, so prior-power slot j and CSI block j+1
// describe the same cell.
std::vector<std::size_t> cyclic_peers(std::size_t num_cells, std::size_t bs);
std::vector<std::size_t> acting_peers(std::span<const std::size_t> order, std::size_t position);

// Raw CSI features 10 log10 |h|^2. Centralized: all B^2 K channels, b_tx major,
// then b_cell, then k. Decentralized: channels from bs_index to its own users,
// then to the users of each peer.
std::vector<double> csi_features_db(const ChannelTensor& h, Scheme scheme, std::size_t bs_index,
                                    std::span<const std::size_t> peers = {});

// Normalized CSI block of the state.
std::vector<double> encode_csi(const ChannelTensor& h, Scheme scheme, std::size_t bs_index,
                               const NormalizationConstants& norm,
                               std::span<const std::size_t> peers = {});

// CSI block followed by (B-1)K prior-power slots p/pmax; slots of BSs that
// have not acted yet are zero.
std::vector<double> encode_partial_state(const ChannelTensor& h,
                                         std::span<const std::size_t> order,
                                         std::size_t position, const PowerMatrix& allocated,
                                         double pmax_watts, const NormalizationConstants& norm);

struct Agent {
  Scheme scheme;
  NetworkConfig net;  // scenario the agent was built for
  ActorCritic ac;
  NormalizationConstants norm;
};

Agent make_agent(Scheme scheme, const NetworkConfig& cfg, const std::vector<std::size_t>& hidden,
                 NormalizationConstants norm);

// Feature statistics over `samples` channel draws, encoded the way the scheme
// sees them. Power slots keep shift 0, scale 1.
NormalizationConstants compute_normalization(Scheme scheme, const Scenario& scenario,
                                             std::size_t samples, Rng& rng);

struct ActOptions {
  double output_scale = 1.0;  // multiplies the raw action before clamping
  double pmax_watts = 0.0;    // clamp bound; 0 means the agent's own pmax
  bool sigma_floor = false;   // replace log sigma by its lower clamp
};

// One decision on a given channel realization.
Episode act(const Agent& agent, const ParamVector& theta, const ChannelTensor& h,
            ConstraintMode mode, Rng& rng, const ActOptions& opts = {});

// One base station's decision under the full scheme, from its local CSI.
Step act_local(const Agent& agent, const ParamVector& theta, const ChannelTensor& h,
               std::size_t bs, Rng& rng, const ActOptions& opts = {});

Episode rollout_centralized(const Agent& agent, const ParamVector& theta,
                            const Scenario& scenario, Rng& rng, const ActOptions& opts = {});
Episode rollout_partial(const Agent& agent, const ParamVector& theta, const Scenario& scenario,
                        Rng& rng, const ActOptions& opts = {});
Episode rollout_full(const Agent& agent, const ParamVector& theta, const Scenario& scenario,
                     Rng& rng, const ActOptions& opts = {});
// Dispatches on agent.scheme.
Episode rollout(const Agent& agent, const ParamVector& theta, const Scenario& scenario, Rng& rng,
                const ActOptions& opts = {});

struct TrainOptions {
  Algorithm algorithm = Algorithm::trpo;
  std::size_t iterations = 0;
  double a2c_step = 7e-4;
  double smoothing = 0.96;
  std::vector<std::size_t> hidden{256, 256, 256};
  std::uint64_t seed = 0;
  std::size_t norm_samples = 10000;
};

struct IterationLog {
  std::size_t iteration = 0;
  double mean_reward = 0.0;      // bits/s, mean terminal sum-rate over the batch
  double smoothed_reward = 0.0;  // exponential smoothing of mean_reward
  double kl = 0.0;               // mean KL of the applied step
  double surrogate = 0.0;        // L at the applied step
  std::size_t j_used = 0;
  bool accepted = false;
  double critic_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  Agent agent;
  ParamVector theta;
  ParamVector phi;
  std::vector<IterationLog> log;
};

// Non-finite parameters. Carries the last finite parameters for a diagnostic
// checkpoint.
class TrainingAborted : public TrainingError {
 public:
  TrainingAborted(const std::string& what, TrainResult last_good)
      : TrainingError(what), last_good_(std::move(last_good)) {}
  const TrainResult& last_good() const { return last_good_; }

 private:
  TrainResult last_good_;
};

using IterationCallback = std::function<void(const IterationLog&)>;

TrainResult train(Scheme scheme, const Scenario& scenario, const TrpoConfig& tcfg,
                  const TrainOptions& opts, const IterationCallback& on_iteration = {});

std::vector<double> smooth_curve(std::span<const double> raw, double w);

struct EvalSummary {
  std::vector<double> sum_rates;  // bits/s per realization
  std::vector<double> decision_ms;
  double mean = 0.0;
  double stddev = 0.0;
  double p05 = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double mean_decision_ms = 0.0;
};

EvalSummary summarize(std::vector<double> sum_rates, std::vector<double> decision_ms);
double percentile(std::vector<double> values, double q);  // linear interpolation

// Realization i draws its channels from (seed, eval_channel, i) and the
// policy noise from (seed, eval_policy, i), so every method sees the same
// channel sequence.
ChannelTensor evaluation_channels(const Scenario& scenario, std::uint64_t seed, std::size_t i);

EvalSummary evaluate(const Agent& agent, const ParamVector& theta, const Scenario& scenario,
                     std::size_t n_realizations, std::uint64_t seed, ActOptions opts = {});

}  // namespace pctrl
