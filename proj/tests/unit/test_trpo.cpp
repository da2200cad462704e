#include <doctest.h>

#include <cmath>

#include "pctrl/error.hpp"
#include "pctrl/trpo.hpp"

using namespace pctrl;

namespace {

constexpr double kPmax = 10.0;

struct Fixture {
  GaussianPolicy policy{3, 2, {6}, kPmax};
  ParamVector theta;
  EpisodeBatch batch;
  std::vector<double> adv;

  explicit Fixture(std::size_t episodes = 40, std::size_t horizon = 2, std::uint64_t seed = 5) {
    Rng rng(seed);
    theta = policy.init(rng);
    std::normal_distribution<double> n(0.0, 1.0);
    batch.scheme = horizon == 1 ? Scheme::centralized : Scheme::partial;
    batch.horizon = horizon;
    for (std::size_t e = 0; e < episodes; ++e) {
      Episode ep;
      for (std::size_t t = 0; t < horizon; ++t) {
        Step s;
        s.state = {n(rng), n(rng), n(rng)};
        const auto head = policy.forward(theta, s.state);
        const auto a = sample_action(head, rng, kPmax);
        s.action = a.action;
        s.raw_action = a.raw;
        s.log_std = head.log_std;
        s.logp = a.logp;
        // reward favours more power on the first output
        s.reward = a.action[0] - 0.3 * a.action[1];
        s.bs = t;
        ep.steps.push_back(std::move(s));
      }
      batch.episodes.push_back(std::move(ep));
    }
    std::vector<double> r;
    batch.for_each_step([&](std::size_t, std::size_t, const Step& s) { r.push_back(s.reward); });
    double mean = 0.0, var = 0.0;
    for (double x : r) mean += x;
    mean /= static_cast<double>(r.size());
    for (double x : r) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(r.size()));
    for (double x : r) adv.push_back((x - mean) / sd);
  }
};

}  // namespace

TEST_CASE("discounted returns") {
  const std::vector<double> r{1.0, 2.0, 3.0};
  const auto g = discounted_returns(r, 0.5);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(1.0 + 0.5 * 2.0 + 0.25 * 3.0));
  CHECK(g[1] == doctest::Approx(2.0 + 0.5 * 3.0));
  CHECK(g[2] == doctest::Approx(3.0));
  CHECK(discounted_returns(r, 0.0) == r);
  CHECK(discounted_returns(std::vector<double>{}, 0.9).empty());
}

TEST_CASE("trpo config validation") {
  TrpoConfig c;
  CHECK_NOTHROW(c.validate());
  c.kl_bound = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.step_decay = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("batch validation") {
  Fixture f(3, 2);
  CHECK_NOTHROW(f.batch.validate());
  CHECK(f.batch.num_steps() == 6);
  f.batch.episodes[1].steps.pop_back();
  CHECK_THROWS_AS(f.batch.validate(), ShapeError);
}

TEST_CASE("surrogate and KL vanish at the sampling policy") {
  Fixture f;
  CHECK(std::abs(surrogate_L(f.policy, f.theta, f.batch, f.adv, 0.99)) < 1e-14);
  CHECK(std::abs(mean_kl(f.policy, f.theta, f.theta, f.batch)) < 1e-14);
}

TEST_CASE("policy gradient is the surrogate gradient") {
  Fixture f;
  const double gamma = 0.9;
  const auto g = policy_gradient_estimate(f.policy, f.theta, f.batch, f.adv, gamma);
  REQUIRE(g.size() == f.theta.size());
  for (std::size_t i = 0; i < g.size(); i += 3) {
    auto p = f.theta, m = f.theta;
    const double h = 1e-6;
    p[i] += h;
    m[i] -= h;
    const double fd = (surrogate_L(f.policy, p, f.batch, f.adv, gamma) -
                       surrogate_L(f.policy, m, f.batch, f.adv, gamma)) /
                      (2 * h);
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-7));
  }
}

TEST_CASE("Fisher-vector product") {
  Fixture f(30, 1);
  ScoreSet scores(f.policy, f.theta, f.batch, 0.99);
  const std::size_t d = scores.dim();
  Rng rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> u(d), v(d);
  for (auto& x : u) x = n(rng);
  for (auto& x : v) x = n(rng);

  SUBCASE("explicit matrix") {
    std::vector<double> F(d * d, 0.0);
    scores.for_each([&](std::size_t, std::span<const double> s) {
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) F[a * d + b] += s[a] * s[b];
    });
    const double S = static_cast<double>(scores.num_samples());
    const auto fv = fisher_vector_product(scores, v, 0.01);
    for (std::size_t a = 0; a < d; ++a) {
      double e = 0.01 * v[a];
      for (std::size_t b = 0; b < d; ++b) e += F[a * d + b] / S * v[b];
      CHECK(fv[a] == doctest::Approx(e).epsilon(1e-10).scale(1e-12));
    }
  }
  SUBCASE("linear and symmetric, positive definite") {
    std::vector<double> w(d);
    for (std::size_t i = 0; i < d; ++i) w[i] = 2.0 * u[i] - 3.0 * v[i];
    const auto fu = fisher_vector_product(scores, u, 0.01);
    const auto fv = fisher_vector_product(scores, v, 0.01);
    const auto fw = fisher_vector_product(scores, w, 0.01);
    for (std::size_t i = 0; i < d; ++i)
      CHECK(fw[i] == doctest::Approx(2.0 * fu[i] - 3.0 * fv[i]).scale(1e-9));
    CHECK(dot(u, fv) == doctest::Approx(dot(v, fu)));
    CHECK(dot(u, fu) > 0.0);
  }
  SUBCASE("uncached rows give the same product") {
    ScoreSet lean(f.policy, f.theta, f.batch, 0.99, 0);
    CHECK_FALSE(lean.cached());
    const auto a = fisher_vector_product(scores, v, 0.01);
    const auto b = fisher_vector_product(lean, v, 0.01);
    for (std::size_t i = 0; i < d; ++i) CHECK(a[i] == doctest::Approx(b[i]));
  }
}

TEST_CASE("conjugate gradient") {
  // A = M'M + I on a random M
  const std::size_t n = 12;
  Rng rng(31);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> M(n * n), A(n * n, 0.0), b(n);
  for (auto& x : M) x = nd(rng);
  for (auto& x : b) x = nd(rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) A[i * n + j] += M[k * n + i] * M[k * n + j];
      if (i == j) A[i * n + j] += 1.0;
    }
  LinearOperator op = [&](std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) out[i] += A[i * n + j] * in[j];
    }
  };
  const auto r = conjugate_gradient(op, b, 200, 1e-12);
  std::vector<double> ax(n);
  op(r.x, ax);
  for (std::size_t i = 0; i < n; ++i) CHECK(ax[i] == doctest::Approx(b[i]).scale(1e-9));
  CHECK(r.iterations <= 200);

  const auto capped = conjugate_gradient(op, b, 2, 0.0);
  CHECK(capped.iterations == 2);
  CHECK(capped.residual_norm > r.residual_norm);
}

TEST_CASE("natural step") {
  // F = diag(2, 4, 8), x = F^-1 g
  const std::vector<double> g{1.0, -2.0, 0.5};
  const std::vector<double> F{2.0, 4.0, 8.0};
  std::vector<double> x(3);
  for (int i = 0; i < 3; ++i) x[i] = g[i] / F[i];
  const auto d = natural_step(g, x, 0.01);
  double q = 0.0;
  for (int i = 0; i < 3; ++i) q += d[i] * F[i] * d[i];
  CHECK(0.5 * q == doctest::Approx(0.01));
  const double scale = std::sqrt(2 * 0.01 / dot(g, x));
  for (int i = 0; i < 3; ++i) CHECK(d[i] == doctest::Approx(scale * x[i]));

  const std::vector<double> neg{-1.0, 0.0, 0.0};
  CHECK_THROWS_AS(natural_step(g, neg, 0.01), DegenerateStepError);
  CHECK_THROWS_AS(natural_step(g, std::vector<double>(3, 0.0), 0.01), DegenerateStepError);
}

TEST_CASE("line search") {
  Fixture f(200, 1);
  TrpoConfig cfg;
  ScoreSet scores(f.policy, f.theta, f.batch, cfg.gamma);
  const auto g = policy_gradient_estimate(scores, f.adv);
  LinearOperator op = [&](std::span<const double> in, std::span<double> out) {
    const auto r = fisher_vector_product(scores, in, cfg.fisher_damping);
    std::copy(r.begin(), r.end(), out.begin());
  };
  const auto cg = conjugate_gradient(op, g, cfg.cg_iters, cfg.cg_tol);
  const auto step = natural_step(g, cg.x, cfg.kl_bound);

  SUBCASE("natural step accepted within the trust region") {
    const auto r = line_search_update(f.policy, f.theta, step, f.batch, f.adv, cfg);
    REQUIRE(r.accepted);
    CHECK(r.kl <= cfg.kl_bound);
    CHECK(r.surrogate >= 0.0);
    CHECK(r.kl == doctest::Approx(mean_kl(f.policy, f.theta, r.theta, f.batch)));
    CHECK_FALSE(r.theta == f.theta);
  }
  SUBCASE("huge step rejected, parameters unchanged") {
    auto big = step;
    for (auto& x : big) x *= 1e6;
    const auto r = line_search_update(f.policy, f.theta, big, f.batch, f.adv, cfg);
    CHECK_FALSE(r.accepted);
    CHECK(r.theta == f.theta);
  }
}

TEST_CASE("a2c update") {
  Fixture f;
  CHECK(a2c_update(f.policy, f.theta, f.batch, f.adv, 0.99, 0.0) == f.theta);
  const auto g = policy_gradient_estimate(f.policy, f.theta, f.batch, f.adv, 0.99);
  const auto t = a2c_update(f.policy, f.theta, f.batch, f.adv, 0.99, 1e-3);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(t[i] == doctest::Approx(f.theta[i] + 1e-3 * g[i]));
}

TEST_CASE("critic fitting and advantages") {
  Fixture f(120, 2);
  ActorCritic ac{f.policy, ValueNetwork(3, 4, {16}), 1.0};
  Rng rng(17);
  const auto phi = ac.critic.init(rng);
  std::vector<double> rewards;
  std::vector<double> returns;
  for (const auto& ep : f.batch.episodes) {
    std::vector<double> r;
    for (const auto& s : ep.steps) r.push_back(s.reward);
    const auto g = discounted_returns(r, 0.99);
    returns.insert(returns.end(), g.begin(), g.end());
  }
  TrpoConfig cfg;
  cfg.critic_epochs = 30;
  for (auto opt : {CriticOptimizer::adam, CriticOptimizer::sgd}) {
    cfg.critic_optimizer = opt;
    Rng r2(4);
    const auto fit = fit_critic(ac, phi, f.batch, returns, cfg, r2);
    CHECK(fit.final_loss < fit.initial_loss);
    CHECK(fit.phi.all_finite());
  }

  const auto est = estimate_advantages(ac, f.theta, phi, f.batch, 0.99);
  REQUIRE(est.advantages.size() == f.batch.num_steps());
  double mean = 0.0, var = 0.0;
  for (double a : est.advantages) mean += a;
  mean /= static_cast<double>(est.advantages.size());
  for (double a : est.advantages) var += (a - mean) * (a - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var / static_cast<double>(est.advantages.size()) == doctest::Approx(1.0));
  for (std::size_t i = 0; i < returns.size(); ++i)
    CHECK(est.returns[i] == doctest::Approx(returns[i]));
}
