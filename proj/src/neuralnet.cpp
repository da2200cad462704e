#include "pctrl/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <numbers>

#include "pctrl/error.hpp"

namespace pctrl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

}  // namespace

std::size_t parameter_count(const std::vector<std::size_t>& layer_sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  return n;
}

ParamVector::ParamVector(std::vector<std::size_t> layer_sizes)
    : sizes_(std::move(layer_sizes)), values_(parameter_count(sizes_), 0.0) {
  if (sizes_.size() < 2) throw ConfigError("a network needs at least input and output sizes");
  for (auto s : sizes_)
    if (s == 0) throw ConfigError("layer sizes must be positive");
}

std::size_t ParamVector::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  return off;
}

std::size_t ParamVector::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + sizes_[layer] * sizes_[layer + 1];
}

std::vector<ParamVector::Segment> ParamVector::segments() const {
  std::vector<Segment> out;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    out.push_back({l, Kind::weight, weight_offset(l), sizes_[l + 1], sizes_[l]});
    out.push_back({l, Kind::bias, bias_offset(l), sizes_[l + 1], 1});
  }
  return out;
}

std::vector<ParamVector::Layer> ParamVector::unflatten() const {
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Layer layer;
    layer.rows = sizes_[l + 1];
    layer.cols = sizes_[l];
    auto w = values_.begin() + static_cast<std::ptrdiff_t>(weight_offset(l));
    layer.weights.assign(w, w + static_cast<std::ptrdiff_t>(layer.rows * layer.cols));
    auto b = values_.begin() + static_cast<std::ptrdiff_t>(bias_offset(l));
    layer.bias.assign(b, b + static_cast<std::ptrdiff_t>(layer.rows));
    layers.push_back(std::move(layer));
  }
  return layers;
}

ParamVector ParamVector::flatten(const std::vector<std::size_t>& layer_sizes,
                                 const std::vector<Layer>& layers) {
  ParamVector p(layer_sizes);
  if (layers.size() != p.num_layers()) throw ShapeError("layer count mismatch in flatten");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.rows != layer_sizes[l + 1] || layer.cols != layer_sizes[l] ||
        layer.weights.size() != layer.rows * layer.cols || layer.bias.size() != layer.rows)
      throw ShapeError(fmt::format("layer {} shape mismatch in flatten", l));
    std::copy(layer.weights.begin(), layer.weights.end(),
              p.values_.begin() + static_cast<std::ptrdiff_t>(p.weight_offset(l)));
    std::copy(layer.bias.begin(), layer.bias.end(),
              p.values_.begin() + static_cast<std::ptrdiff_t>(p.bias_offset(l)));
  }
  return p;
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ParamVector init_network(const std::vector<std::size_t>& layer_sizes, Rng& rng) {
  if (layer_sizes.size() < 3)
    throw ConfigError("init_network requires at least one hidden layer");
  ParamVector p(layer_sizes);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer_sizes[l]));
    const std::size_t off = p.weight_offset(l);
    for (std::size_t i = 0; i < layer_sizes[l] * layer_sizes[l + 1]; ++i)
      p[off + i] = scale * n(rng);
  }
  return p;
}

double elu(double z) { return z > 0.0 ? z : std::expm1(z); }
double elu_derivative(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

std::vector<double> mlp_forward(const ParamVector& params, std::span<const double> input,
                                ForwardTape* tape) {
  const auto& sizes = params.layer_sizes();
  if (input.size() != sizes.front())
    throw ShapeError(fmt::format("network input has {} features, expected {}", input.size(),
                                 sizes.front()));
  const std::size_t L = params.num_layers();
  if (tape) {
    tape->pre.resize(L);
    tape->act.resize(L + 1);
    tape->act[0].assign(input.begin(), input.end());
  }
  std::vector<double> x(input.begin(), input.end());
  std::vector<double> y;
  const auto v = params.values();
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t rows = sizes[l + 1];
    const std::size_t cols = sizes[l];
    const double* w = v.data() + params.weight_offset(l);
    const double* b = v.data() + params.bias_offset(l);
    y.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* wr = w + r * cols;
      double s = b[r];
      for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
      y[r] = s;
    }
    if (tape) tape->pre[l] = y;
    if (l + 1 < L)
      for (auto& e : y) e = elu(e);
    if (tape) tape->act[l + 1] = y;
    x.swap(y);
  }
  return x;
}

void mlp_backward(const ParamVector& params, const ForwardTape& tape,
                  std::span<const double> dout, std::span<double> grad, double scale) {
  const auto& sizes = params.layer_sizes();
  const std::size_t L = params.num_layers();
  if (grad.size() != params.size()) throw ShapeError("gradient buffer size mismatch");
  if (dout.size() != sizes.back()) throw ShapeError("output gradient size mismatch");
  std::vector<double> delta(dout.begin(), dout.end());
  std::vector<double> prev;
  const auto v = params.values();
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t rows = sizes[l + 1];
    const std::size_t cols = sizes[l];
    const auto& a = tape.act[l];
    double* gw = grad.data() + params.weight_offset(l);
    double* gb = grad.data() + params.bias_offset(l);
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = scale * delta[r];
      gb[r] += d;
      double* gwr = gw + r * cols;
      for (std::size_t c = 0; c < cols; ++c) gwr[c] += d * a[c];
    }
    if (l == 0) break;
    const double* w = v.data() + params.weight_offset(l);
    prev.assign(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* wr = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) prev[c] += wr[c] * delta[r];
    }
    const auto& z = tape.pre[l - 1];
    for (std::size_t c = 0; c < cols; ++c) prev[c] *= elu_derivative(z[c]);
    delta.swap(prev);
  }
}

double log_density(const GaussianHead& head, std::span<const double> raw_action) {
  if (raw_action.size() != head.dim()) throw ShapeError("action dimension mismatch");
  double lp = 0.0;
  for (std::size_t j = 0; j < head.dim(); ++j) {
    const double z = (raw_action[j] - head.mean[j]) * std::exp(-head.log_std[j]);
    lp += -0.5 * z * z - head.log_std[j] - kHalfLog2Pi;
  }
  return lp;
}

double kl_diag_gaussian(const GaussianHead& head_new, const GaussianHead& head_old) {
  if (head_new.dim() != head_old.dim()) throw ShapeError("KL between heads of different size");
  double kl = 0.0;
  for (std::size_t j = 0; j < head_new.dim(); ++j) {
    const double var_new = std::exp(2.0 * head_new.log_std[j]);
    const double var_old = std::exp(2.0 * head_old.log_std[j]);
    const double dm = head_new.mean[j] - head_old.mean[j];
    kl += head_old.log_std[j] - head_new.log_std[j] + (var_new + dm * dm) / (2.0 * var_old) - 0.5;
  }
  return kl;
}

ActionSample sample_action(const GaussianHead& head, Rng& rng, double pmax_watts) {
  std::normal_distribution<double> n(0.0, 1.0);
  ActionSample s;
  s.raw.resize(head.dim());
  s.action.resize(head.dim());
  for (std::size_t j = 0; j < head.dim(); ++j) {
    s.raw[j] = head.mean[j] + std::exp(head.log_std[j]) * n(rng);
    s.action[j] = std::clamp(s.raw[j], 0.0, pmax_watts);
  }
  s.logp = log_density(head, s.raw);
  return s;
}

// --- GaussianPolicy ---------------------------------------------------------

GaussianPolicy::GaussianPolicy(std::size_t state_dim, std::size_t action_dim,
                               std::vector<std::size_t> hidden, double pmax_watts)
    : action_dim_(action_dim), pmax_(pmax_watts) {
  if (state_dim == 0 || action_dim == 0) throw ConfigError("policy dimensions must be positive");
  if (hidden.empty()) throw ConfigError("policy needs at least one hidden layer");
  if (!(pmax_watts > 0.0)) throw ConfigError("pmax must be positive");
  sizes_.push_back(state_dim);
  sizes_.insert(sizes_.end(), hidden.begin(), hidden.end());
  sizes_.push_back(2 * action_dim);
}

double GaussianPolicy::log_std_min() const { return std::log(1e-3 * pmax_); }
double GaussianPolicy::log_std_max() const { return std::log(pmax_); }

ParamVector GaussianPolicy::init(Rng& rng) const {
  ParamVector theta = init_network(sizes_, rng);
  const std::size_t last = theta.num_layers() - 1;
  const std::size_t cols = sizes_[last];
  const std::size_t w = theta.weight_offset(last);
  const std::size_t b = theta.bias_offset(last);
  for (std::size_t j = action_dim_; j < 2 * action_dim_; ++j) {
    for (std::size_t c = 0; c < cols; ++c) theta[w + j * cols + c] = 0.0;
    theta[b + j] = std::log(0.25 * pmax_);
  }
  return theta;
}

void GaussianPolicy::check_params(const ParamVector& theta) const {
  if (theta.layer_sizes() != sizes_) throw ShapeError("policy parameters have the wrong shape");
}

GaussianHead GaussianPolicy::forward(const ParamVector& theta,
                                     std::span<const double> state) const {
  check_params(theta);
  const auto out = mlp_forward(theta, state);
  GaussianHead head;
  head.mean.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(action_dim_));
  head.log_std.resize(action_dim_);
  const double lo = log_std_min();
  const double hi = log_std_max();
  for (std::size_t j = 0; j < action_dim_; ++j)
    head.log_std[j] = std::clamp(out[action_dim_ + j], lo, hi);
  return head;
}

double GaussianPolicy::log_prob(const ParamVector& theta, std::span<const double> state,
                                std::span<const double> raw_action) const {
  return log_density(forward(theta, state), raw_action);
}

double GaussianPolicy::log_prob_and_grad(const ParamVector& theta,
                                         std::span<const double> state,
                                         std::span<const double> raw_action,
                                         std::span<double> grad) const {
  check_params(theta);
  if (raw_action.size() != action_dim_) throw ShapeError("action dimension mismatch");
  ForwardTape tape;
  const auto out = mlp_forward(theta, state, &tape);
  const double lo = log_std_min();
  const double hi = log_std_max();
  std::vector<double> dout(2 * action_dim_, 0.0);
  double lp = 0.0;
  for (std::size_t j = 0; j < action_dim_; ++j) {
    const double mu = out[j];
    const double raw_ls = out[action_dim_ + j];
    const double ls = std::clamp(raw_ls, lo, hi);
    const double inv_sigma = std::exp(-ls);
    const double z = (raw_action[j] - mu) * inv_sigma;
    lp += -0.5 * z * z - ls - kHalfLog2Pi;
    dout[j] = z * inv_sigma;
    dout[action_dim_ + j] = (raw_ls >= lo && raw_ls <= hi) ? z * z - 1.0 : 0.0;
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  mlp_backward(theta, tape, dout, grad);
  return lp;
}

// --- ValueNetwork -----------------------------------------------------------

ValueNetwork::ValueNetwork(std::size_t state_dim, std::size_t action_feature_dim,
                           std::vector<std::size_t> hidden)
    : state_dim_(state_dim), action_dim_(action_feature_dim) {
  if (state_dim + action_feature_dim == 0) throw ConfigError("value network has no inputs");
  if (hidden.empty()) throw ConfigError("value network needs at least one hidden layer");
  sizes_.push_back(state_dim + action_feature_dim);
  sizes_.insert(sizes_.end(), hidden.begin(), hidden.end());
  sizes_.push_back(1);
}

ValueNetwork ValueNetwork::linear(std::size_t state_dim, std::size_t action_feature_dim) {
  ValueNetwork v;
  v.state_dim_ = state_dim;
  v.action_dim_ = action_feature_dim;
  v.sizes_ = {state_dim + action_feature_dim, 1};
  return v;
}

ParamVector ValueNetwork::init(Rng& rng) const {
  if (sizes_.size() < 3) return ParamVector(sizes_);
  return init_network(sizes_, rng);
}

void ValueNetwork::check_params(const ParamVector& phi) const {
  if (phi.layer_sizes() != sizes_) throw ShapeError("value parameters have the wrong shape");
}

std::vector<double> ValueNetwork::join(std::span<const double> state,
                                       std::span<const double> action) const {
  if (state.size() != state_dim_ || action.size() != action_dim_)
    throw ShapeError(fmt::format("value input ({}+{}) does not match network ({}+{})",
                                 state.size(), action.size(), state_dim_, action_dim_));
  std::vector<double> x;
  x.reserve(state.size() + action.size());
  x.insert(x.end(), state.begin(), state.end());
  x.insert(x.end(), action.begin(), action.end());
  return x;
}

double ValueNetwork::forward(const ParamVector& phi, std::span<const double> state,
                             std::span<const double> action_features) const {
  check_params(phi);
  return mlp_forward(phi, join(state, action_features))[0];
}

double ValueNetwork::forward_and_grad(const ParamVector& phi, std::span<const double> state,
                                      std::span<const double> action_features,
                                      std::span<double> grad, double scale) const {
  check_params(phi);
  ForwardTape tape;
  const double v = mlp_forward(phi, join(state, action_features), &tape)[0];
  const double one = 1.0;
  mlp_backward(phi, tape, std::span<const double>(&one, 1), grad, scale);
  return v;
}

std::vector<double> value_action_features(std::span<const double> powers,
                                          std::span<const double> log_std, double pmax_watts) {
  std::vector<double> f;
  f.reserve(powers.size() + log_std.size());
  for (double p : powers) f.push_back(p / pmax_watts);
  const double lp = std::log(pmax_watts);
  for (double s : log_std) f.push_back(s - lp);
  return f;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace pctrl
