#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pctrl/error.hpp"
#include "pctrl/neuralnet.hpp"

using namespace pctrl;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double s = 1.0) {
  std::normal_distribution<double> d(0.0, s);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Independent closed form of the diagonal-Gaussian log density.
double gaussian_logpdf(const std::vector<double>& mu, const std::vector<double>& log_sd,
                       const std::vector<double>& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double sd = std::exp(log_sd[i]);
    s += -0.5 * std::log(2 * std::numbers::pi * sd * sd) -
         (a[i] - mu[i]) * (a[i] - mu[i]) / (2 * sd * sd);
  }
  return s;
}

}  // namespace

TEST_CASE("parameter layout") {
  ParamVector p({4, 3, 2});
  CHECK(p.size() == 4 * 3 + 3 + 3 * 2 + 2);
  CHECK(parameter_count({4, 3, 2}) == p.size());
  CHECK(p.num_layers() == 2);
  CHECK(p.weight_offset(0) == 0);
  CHECK(p.bias_offset(0) == 12);
  CHECK(p.weight_offset(1) == 15);
  CHECK(p.bias_offset(1) == 21);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.5 * static_cast<double>(i);
  const auto layers = p.unflatten();
  CHECK(ParamVector::flatten(p.layer_sizes(), layers) == p);
  std::size_t total = 0;
  for (const auto& s : p.segments()) total += s.size();
  CHECK(total == p.size());
}

TEST_CASE("init_network statistics") {
  Rng rng(1);
  const auto p = init_network({200, 100, 1}, rng);
  double ss = 0.0;
  for (std::size_t i = 0; i < 200 * 100; ++i) ss += p[i] * p[i];
  CHECK(ss / (200 * 100) == doctest::Approx(1.0 / 200).epsilon(0.05));
  for (std::size_t i = p.bias_offset(0); i < p.bias_offset(0) + 100; ++i) CHECK(p[i] == 0.0);
  CHECK_THROWS(init_network({3, 2}, rng));
}

TEST_CASE("ELU") {
  CHECK(elu(2.0) == 2.0);
  CHECK(elu(0.0) == 0.0);
  CHECK(elu(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0));
  CHECK(elu(-50.0) == doctest::Approx(-1.0));
  CHECK(elu_derivative(3.0) == 1.0);
  CHECK(elu_derivative(-2.0) == doctest::Approx(std::exp(-2.0)));
  for (double z : {-3.0, -0.4, 0.7, 2.5}) {
    const double h = 1e-6;
    CHECK(elu_derivative(z) == doctest::Approx((elu(z + h) - elu(z - h)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("mlp backward matches finite differences") {
  Rng rng(42);
  auto p = init_network({5, 7, 6, 3}, rng);
  for (std::size_t i = p.bias_offset(0); i < p.bias_offset(0) + 7; ++i) p[i] = 0.3;
  const auto x = random_vec(5, rng);
  const auto dout = random_vec(3, rng);
  ForwardTape tape;
  mlp_forward(p, x, &tape);
  std::vector<double> g(p.size(), 0.0);
  mlp_backward(p, tape, dout, g);
  auto f = [&](const ParamVector& q) { return dot(mlp_forward(q, x), dout); };
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto a = p, b = p;
    const double h = 1e-6;
    a[i] += h;
    b[i] -= h;
    CHECK(g[i] == doctest::Approx((f(a) - f(b)) / (2 * h)).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("gaussian log density and KL") {
  GaussianHead h{{1.0, -2.0, 0.5}, {0.1, -0.7, 1.3}};
  const std::vector<double> a{0.3, -1.0, 4.0};
  CHECK(log_density(h, a) == doctest::Approx(gaussian_logpdf(h.mean, h.log_std, a)));
  CHECK(std::abs(kl_diag_gaussian(h, h)) < 1e-15);

  GaussianHead g{{0.0, -1.5, 0.5}, {0.0, 0.0, 1.0}};
  // closed form per dimension: log(s_old/s_new) + (s_new^2 + (m_new-m_old)^2)/(2 s_old^2) - 1/2
  double expect = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double sn = std::exp(h.log_std[i]), so = std::exp(g.log_std[i]);
    const double dm = h.mean[i] - g.mean[i];
    expect += std::log(so / sn) + (sn * sn + dm * dm) / (2 * so * so) - 0.5;
  }
  CHECK(kl_diag_gaussian(h, g) == doctest::Approx(expect));
  CHECK(kl_diag_gaussian(h, g) > 0.0);
  CHECK(kl_diag_gaussian(g, h) > 0.0);
}

TEST_CASE("sample_action clamps") {
  GaussianHead h{{-5.0, 5.0, 10.0}, {0.0, 0.0, -20.0}};
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto s = sample_action(h, rng, 10.0);
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(s.action[d] >= 0.0);
      CHECK(s.action[d] <= 10.0);
      CHECK(s.action[d] == std::clamp(s.raw[d], 0.0, 10.0));
    }
    CHECK(s.logp == doctest::Approx(log_density(h, s.raw)));
  }
}

TEST_CASE("gaussian policy") {
  const double pmax = 19.95;
  GaussianPolicy pol(4, 2, {8, 8}, pmax);
  Rng rng(9);
  const auto theta = pol.init(rng);
  CHECK_NOTHROW(pol.check_params(theta));
  const auto s = random_vec(4, rng);
  const auto head = pol.forward(theta, s);
  REQUIRE(head.dim() == 2);
  for (double ls : head.log_std) CHECK(ls == doctest::Approx(std::log(0.25 * pmax)));
  for (double ls : head.log_std) {
    CHECK(ls >= pol.log_std_min());
    CHECK(ls <= pol.log_std_max());
  }

  SUBCASE("log-prob gradient") {
    auto t = theta;
    for (auto& v : t.values()) v += 0.05 * std::sin(3.0 * v + 1.0);
    const std::vector<double> a{3.0, 12.0};
    std::vector<double> g(t.size());
    const double lp = pol.log_prob_and_grad(t, s, a, g);
    CHECK(lp == doctest::Approx(pol.log_prob(t, s, a)));
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto p = t, m = t;
      const double h = 1e-6;
      p[i] += h;
      m[i] -= h;
      const double fd = (pol.log_prob(p, s, a) - pol.log_prob(m, s, a)) / (2 * h);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-5));
    }
  }
  SUBCASE("wrong shape rejected") {
    GaussianPolicy other(5, 2, {8, 8}, pmax);
    Rng r2(1);
    CHECK_THROWS_AS(pol.check_params(other.init(r2)), ShapeError);
  }
}

TEST_CASE("value network gradient") {
  ValueNetwork v(3, 4, {6, 5});
  Rng rng(21);
  const auto phi = v.init(rng);
  CHECK(v.input_dim() == 7);
  const auto s = random_vec(3, rng), a = random_vec(4, rng);
  std::vector<double> g(phi.size(), 0.0);
  const double val = v.forward_and_grad(phi, s, a, g, 1.0);
  CHECK(val == doctest::Approx(v.forward(phi, s, a)));
  for (std::size_t i = 0; i < phi.size(); ++i) {
    auto p = phi, m = phi;
    const double h = 1e-6;
    p[i] += h;
    m[i] -= h;
    const double fd = (v.forward(p, s, a) - v.forward(m, s, a)) / (2 * h);
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("value action features") {
  const std::vector<double> p{5.0, 10.0};
  const std::vector<double> ls{std::log(2.5), 0.0};
  const auto f = value_action_features(p, ls, 10.0);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == doctest::Approx(0.5));
  CHECK(f[1] == doctest::Approx(1.0));
  CHECK(f[2] == doctest::Approx(std::log(0.25)));
  CHECK(f[3] == doctest::Approx(-std::log(10.0)));
}

TEST_CASE("vector helpers") {
  std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  CHECK(dot(a, b) == 12.0);
  CHECK(norm2(a) == doctest::Approx(std::sqrt(14.0)));
  axpy(2.0, a, b);
  CHECK(b == std::vector<double>{6, -1, 12});
}
