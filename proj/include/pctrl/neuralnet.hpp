#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pctrl/rng.hpp"

namespace pctrl {

// Flat parameter storage for a fully connected net. Layer l maps
// layer_sizes[l] -> layer_sizes[l+1]; its weights are stored row-major
// (out x in) followed by its bias.
class ParamVector {
 public:
  enum class Kind { weight, bias };
  struct Segment {
    std::size_t layer;
    Kind kind;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
    std::size_t size() const { return rows * cols; }
  };
  struct Layer {
    std::size_t rows = 0;  // fan-out
    std::size_t cols = 0;  // fan-in
    std::vector<double> weights;
    std::vector<double> bias;
  };

  ParamVector() = default;
  explicit ParamVector(std::vector<std::size_t> layer_sizes);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t num_layers() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::vector<Segment> segments() const;
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;

  std::vector<Layer> unflatten() const;
  static ParamVector flatten(const std::vector<std::size_t>& layer_sizes,
                            const std::vector<Layer>& layers);

  bool all_finite() const;
  bool same_shape(const ParamVector& other) const { return sizes_ == other.sizes_; }
  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<double> values_;
};

std::size_t parameter_count(const std::vector<std::size_t>& layer_sizes);

// Weights ~ N(0, 1/fan_in), biases zero. Requires at least one hidden layer.
ParamVector init_network(const std::vector<std::size_t>& layer_sizes, Rng& rng);

double elu(double z);
double elu_derivative(double z);

// Intermediate values kept for the backward pass. act[0] is the input,
// pre[l] the affine output of layer l.
struct ForwardTape {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> act;
};

// ELU on hidden layers, identity on the output layer.
std::vector<double> mlp_forward(const ParamVector& params, std::span<const double> input,
                                ForwardTape* tape = nullptr);

// Accumulates scale * d(output . dout)/d(params) into grad. Returns nothing
// about the input gradient; the nets here never need it.
void mlp_backward(const ParamVector& params, const ForwardTape& tape,
                  std::span<const double> dout, std::span<double> grad, double scale = 1.0);

struct GaussianHead {
  std::vector<double> mean;     // watts
  std::vector<double> log_std;  // log-watts
  std::size_t dim() const { return mean.size(); }
};

// Diagonal-Gaussian log-density of a pre-clamp action.
double log_density(const GaussianHead& head, std::span<const double> raw_action);

// D_KL(new || old), summed over action dimensions.
double kl_diag_gaussian(const GaussianHead& head_new, const GaussianHead& head_old);

struct ActionSample {
  std::vector<double> action;  // clamped to [0, pmax]
  std::vector<double> raw;     // pre-clamp draw
  double logp = 0.0;           // density of raw
};

ActionSample sample_action(const GaussianHead& head, Rng& rng, double pmax_watts);

// Policy network: state -> (mu, log sigma) per action dimension.
class GaussianPolicy {
 public:
  GaussianPolicy(std::size_t state_dim, std::size_t action_dim,
                 std::vector<std::size_t> hidden, double pmax_watts);

  std::size_t state_dim() const { return sizes_.front(); }
  std::size_t action_dim() const { return action_dim_; }
  double pmax_watts() const { return pmax_; }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  double log_std_min() const;
  double log_std_max() const;

  // init_network plus a log-std head with zero weights and bias log(0.25 pmax).
  ParamVector init(Rng& rng) const;

  GaussianHead forward(const ParamVector& theta, std::span<const double> state) const;

  double log_prob(const ParamVector& theta, std::span<const double> state,
                  std::span<const double> raw_action) const;

  // grad is overwritten.
  double log_prob_and_grad(const ParamVector& theta, std::span<const double> state,
                           std::span<const double> raw_action, std::span<double> grad) const;

  void check_params(const ParamVector& theta) const;

 private:
  std::vector<std::size_t> sizes_;
  std::size_t action_dim_;
  double pmax_;
};

// Value network: (state, action features) -> scalar. Action features are
// the realized powers over pmax followed by log sigma - log pmax.
class ValueNetwork {
 public:
  ValueNetwork(std::size_t state_dim, std::size_t action_feature_dim,
               std::vector<std::size_t> hidden);
  // Network with no hidden layer; only used for linear critics in tests.
  static ValueNetwork linear(std::size_t state_dim, std::size_t action_feature_dim);

  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_feature_dim() const { return action_dim_; }
  std::size_t input_dim() const { return sizes_.front(); }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }

  ParamVector init(Rng& rng) const;

  double forward(const ParamVector& phi, std::span<const double> state,
                 std::span<const double> action_features) const;

  // Accumulates scale * d value / d phi into grad; returns the value.
  double forward_and_grad(const ParamVector& phi, std::span<const double> state,
                          std::span<const double> action_features, std::span<double> grad,
                          double scale) const;

  void check_params(const ParamVector& phi) const;

 private:
  ValueNetwork() = default;
  std::vector<double> join(std::span<const double> state, std::span<const double> action) const;

  std::vector<std::size_t> sizes_;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
};

std::vector<double> value_action_features(std::span<const double> powers,
                                          std::span<const double> log_std, double pmax_watts);

// Small vector helpers used throughout the optimizer code.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double a, std::span<const double> x, std::span<double> y);  // y += a x
double norm2(std::span<const double> a);

}  // namespace pctrl
