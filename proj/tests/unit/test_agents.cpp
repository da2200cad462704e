#include <doctest.h>

#include <cmath>

#include "pctrl/agents.hpp"
#include "pctrl/parallel.hpp"

using namespace pctrl;

namespace {

NetworkConfig small_net(std::size_t B = 3, std::size_t K = 2) {
  NetworkConfig n;
  n.num_cells = B;
  n.users_per_cell = K;
  return n;
}

ChannelTensor distinct_channels(std::size_t B, std::size_t K) {
  // |h(tx, cell, k)|^2 = 10^(-(100 tx + 10 cell + k)/10), so the dB feature encodes the index
  ChannelTensor h(B, K);
  for (std::size_t t = 0; t < B; ++t)
    for (std::size_t c = 0; c < B; ++c)
      for (std::size_t k = 0; k < K; ++k)
        h(t, c, k) = std::sqrt(std::pow(10.0, -(100.0 * t + 10.0 * c + k) / 10.0));
  return h;
}

std::vector<std::size_t> tiny_hidden() { return {8}; }

}  // namespace

TEST_CASE("agent shapes") {
  const auto n = small_net(3, 2);
  CHECK(agent_shape(Scheme::centralized, n).state_dim == 2 * 9);
  CHECK(agent_shape(Scheme::centralized, n).action_dim == 6);
  CHECK(agent_shape(Scheme::partial, n).state_dim == 6 + 4);
  CHECK(agent_shape(Scheme::partial, n).action_dim == 2);
  CHECK(agent_shape(Scheme::full, n).state_dim == 6);
  CHECK(agent_shape(Scheme::full, n).action_dim == 2);
  for (auto s : {Scheme::centralized, Scheme::partial, Scheme::full})
    CHECK(parse_scheme(to_string(s)) == s);
  CHECK_THROWS_AS(parse_scheme("mesh"), ConfigError);
  CHECK(parse_algorithm("a2c") == Algorithm::a2c);
}

TEST_CASE("peer orders") {
  CHECK(cyclic_peers(4, 2) == std::vector<std::size_t>{3, 0, 1});
  CHECK(cyclic_peers(1, 0).empty());
  const std::vector<std::size_t> order{2, 0, 1};
  CHECK(acting_peers(order, 0) == std::vector<std::size_t>{0, 1});
  CHECK(acting_peers(order, 1) == std::vector<std::size_t>{2, 1});
}

TEST_CASE("CSI encoders") {
  const auto h = distinct_channels(3, 2);
  SUBCASE("centralized order") {
    const auto f = csi_features_db(h, Scheme::centralized, 0);
    REQUIRE(f.size() == 18);
    std::size_t i = 0;
    for (int t = 0; t < 3; ++t)
      for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 2; ++k) CHECK(f[i++] == doctest::Approx(-(100.0 * t + 10 * c + k)));
  }
  SUBCASE("decentralized: own users then peers, all from the acting BS") {
    const auto f = csi_features_db(h, Scheme::full, 1);
    REQUIRE(f.size() == 6);
    const int cells[] = {1, 2, 0};
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 2; ++k)
        CHECK(f[j * 2 + k] == doctest::Approx(-(100.0 + 10 * cells[j] + k)));
    const std::vector<std::size_t> peers{0, 2};
    const auto g = csi_features_db(h, Scheme::partial, 1, peers);
    CHECK(g[2] == doctest::Approx(-100.0));
    CHECK(g[4] == doctest::Approx(-120.0));
  }
  SUBCASE("normalization applied") {
    NormalizationConstants n = NormalizationConstants::identity(6);
    for (std::size_t i = 0; i < 6; ++i) {
      n.shift[i] = -100.0;
      n.scale[i] = 10.0;
    }
    const auto f = encode_csi(h, Scheme::full, 1, n);
    CHECK(f[0] == doctest::Approx(-1.0));
    CHECK(f[1] == doctest::Approx(-1.1));
  }
  SUBCASE("partial state slots") {
    const auto n = small_net(3, 2);
    const auto norm = NormalizationConstants::identity(10);
    const std::vector<std::size_t> order{2, 0, 1};
    PowerMatrix alloc(3, 2);
    alloc(2, 0) = 0.5 * n.pmax_watts();
    alloc(2, 1) = n.pmax_watts();
    alloc(0, 0) = 0.25 * n.pmax_watts();
    const auto first = encode_partial_state(h, order, 0, alloc, n.pmax_watts(), norm);
    for (std::size_t i = 6; i < 10; ++i) CHECK(first[i] == 0.0);
    const auto last = encode_partial_state(h, order, 2, alloc, n.pmax_watts(), norm);
    REQUIRE(last.size() == 10);
    // peers of BS 1 in acting order are (2, 0), matching the power slots
    CHECK(last[2] == doctest::Approx(-(100.0 + 20)));
    CHECK(last[4] == doctest::Approx(-(100.0 + 0)));
    CHECK(last[6] == doctest::Approx(0.5));
    CHECK(last[7] == doctest::Approx(1.0));
    CHECK(last[8] == doctest::Approx(0.25));
    CHECK(last[9] == 0.0);
  }
}

TEST_CASE("normalization statistics") {
  auto net = small_net(2, 1);
  Scenario sc(net);
  Rng rng(3);
  const auto norm = compute_normalization(Scheme::partial, sc, 3000, rng);
  REQUIRE(norm.dim() == agent_shape(Scheme::partial, net).state_dim);
  CHECK_NOTHROW(norm.validate());
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(norm.scale[i] > 1.0);
    CHECK(std::isfinite(norm.shift[i]));
  }
  // power slot untouched
  CHECK(norm.shift[2] == 0.0);
  CHECK(norm.scale[2] == 1.0);

  // encoded features over fresh draws are roughly standardized
  Rng r2(4);
  double m = 0.0, s2 = 0.0;
  const int n = 3000;
  for (int i = 0; i < n; ++i) {
    const auto f = encode_csi(sc.channels(r2), Scheme::full, 0, norm);
    m += f[0];
    s2 += f[0] * f[0];
  }
  m /= n;
  CHECK(std::abs(m) < 0.1);
  CHECK(s2 / n - m * m == doctest::Approx(1.0).epsilon(0.1));

  auto bad = NormalizationConstants::identity(3);
  bad.scale[1] = 0.0;
  CHECK_THROWS(bad.validate());
  CHECK_THROWS_AS(make_agent(Scheme::full, net, tiny_hidden(), NormalizationConstants::identity(5)),
                  ShapeError);
}

TEST_CASE("act produces feasible allocations and a consistent reward") {
  for (auto scheme : {Scheme::centralized, Scheme::partial, Scheme::full})
    for (auto mode : {ConstraintMode::per_user, ConstraintMode::sum_power}) {
      auto net = small_net(3, 2);
      const auto agent = make_agent(scheme, net, tiny_hidden(),
                                    NormalizationConstants::identity(agent_shape(scheme, net).state_dim));
      Rng init(1);
      auto theta = agent.ac.policy.init(init);
      // push the means well above pmax to exercise clamping and projection
      theta[theta.size() - 2 * agent.ac.policy.action_dim()] = 3.0 * net.pmax_watts();
      Scenario sc(net, mode);
      Rng rng(2);
      for (int rep = 0; rep < 20; ++rep) {
        const auto ep = rollout(agent, theta, sc, rng);
        CHECK(ep.steps.size() == (scheme == Scheme::centralized ? 1u : 3u));
        CHECK(is_feasible(ep.powers, net.pmax_watts(), mode, 1e-9));
        CHECK(ep.sum_rate == doctest::Approx(sum_rate(ep.channels, ep.powers, noise_power(net),
                                                      net.bandwidth_hz)));
        CHECK(ep.steps.back().reward == ep.sum_rate);
        for (std::size_t i = 0; i + 1 < ep.steps.size(); ++i) CHECK(ep.steps[i].reward == 0.0);
      }
    }
}

TEST_CASE("rollout scheme checks and act_local") {
  auto net = small_net(3, 1);
  const auto agent = make_agent(Scheme::full, net, tiny_hidden(),
                                NormalizationConstants::identity(3));
  Rng rng(5);
  const auto theta = agent.ac.policy.init(rng);
  Scenario sc(net);
  CHECK_THROWS_AS(rollout_centralized(agent, theta, sc, rng), ShapeError);
  CHECK_NOTHROW(rollout_full(agent, theta, sc, rng));

  // the full scheme is BS-by-BS act_local with one shared stream
  const auto h = sc.channels(rng);
  Rng a(9), b(9);
  const auto ep = act(agent, theta, h, ConstraintMode::per_user, a);
  for (std::size_t bs = 0; bs < 3; ++bs) {
    const auto s = act_local(agent, theta, h, bs, b);
    CHECK(s.action == ep.steps[bs].action);
  }
  const auto central = make_agent(Scheme::centralized, net, tiny_hidden(),
                                  NormalizationConstants::identity(9));
  CHECK_THROWS_AS(act_local(central, central.ac.policy.init(rng), h, 0, a), ShapeError);
}

TEST_CASE("output scale and sigma floor") {
  auto net = small_net(1, 1);
  const auto agent = make_agent(Scheme::full, net, tiny_hidden(),
                                NormalizationConstants::identity(1));
  Rng init(7);
  auto theta = agent.ac.policy.init(init);
  ChannelTensor hh(1, 1);
  hh(0, 0, 0) = 1e-6;
  ActOptions opts;
  opts.sigma_floor = true;
  Rng a(3), b(3);
  const auto s1 = act_local(agent, theta, hh, 0, a, opts);
  opts.output_scale = 0.5;
  opts.pmax_watts = 1e9;
  const auto s2 = act_local(agent, theta, hh, 0, b, opts);
  CHECK(s1.raw_action[0] == s2.raw_action[0]);
  CHECK(s2.action[0] == doctest::Approx(std::max(0.0, 0.5 * s1.raw_action[0])));
  CHECK(s1.log_std[0] == agent.ac.policy.log_std_min());
}

TEST_CASE("smoothing") {
  const std::vector<double> x{0.0, 1.0};
  const auto s = smooth_curve(x, 0.96);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == doctest::Approx(0.96));

  const std::vector<double> c(10, 3.5);
  for (double v : smooth_curve(c, 0.3)) CHECK(v == doctest::Approx(3.5));

  Rng rng(1);
  std::uniform_real_distribution<double> u(-2.0, 5.0);
  std::vector<double> r(200);
  for (auto& v : r) v = u(rng);
  CHECK(smooth_curve(r, 1.0) == r);
  const double lo = *std::min_element(r.begin(), r.end());
  const double hi = *std::max_element(r.begin(), r.end());
  for (double v : smooth_curve(r, 0.2)) {
    CHECK(v >= lo);
    CHECK(v <= hi);
  }
  CHECK(smooth_curve(std::vector<double>{}, 0.5).empty());
  CHECK_THROWS_AS(smooth_curve(r, 0.0), ConfigError);
  CHECK_THROWS_AS(smooth_curve(r, 1.5), ConfigError);
}

TEST_CASE("percentile and summary") {
  const std::vector<double> v{5.0, 1.0, 3.0, 2.0, 4.0};
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 5.0);
  CHECK(percentile(v, 0.5) == 3.0);
  CHECK(percentile(v, 0.05) == doctest::Approx(1.2));
  CHECK(percentile(v, 0.95) == doctest::Approx(4.8));
  const auto s = summarize(v, std::vector<double>(5, 2.0));
  CHECK(s.mean == 3.0);
  CHECK(s.stddev == doctest::Approx(std::sqrt(2.0)));
  CHECK(s.p50 == 3.0);
  CHECK(s.mean_decision_ms == 2.0);
}

TEST_CASE("training is deterministic and thread-count independent") {
  auto net = small_net(2, 1);
  Scenario sc(net);
  TrpoConfig t;
  t.episodes_per_iter = 32;
  TrainOptions o;
  o.iterations = 3;
  o.hidden = {8};
  o.seed = 42;
  o.norm_samples = 200;
  for (auto scheme : {Scheme::centralized, Scheme::partial, Scheme::full}) {
    set_worker_threads(1);
    const auto a = train(scheme, sc, t, o);
    set_worker_threads(4);
    const auto b = train(scheme, sc, t, o);
    set_worker_threads(0);
    CHECK(a.theta == b.theta);
    CHECK(a.phi == b.phi);
    REQUIRE(a.log.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a.log[i].mean_reward == b.log[i].mean_reward);
      CHECK(a.log[i].kl <= t.kl_bound);
      if (a.log[i].accepted) CHECK(a.log[i].surrogate >= 0.0);
    }
  }
  o.iterations = 0;
  const auto none = train(Scheme::full, sc, t, o);
  CHECK(none.log.empty());
  CHECK(none.theta.all_finite());
}

TEST_CASE("evaluation sees the same channels for every method") {
  auto net = small_net(2, 2);
  Scenario sc(net);
  const auto h1 = evaluation_channels(sc, 11, 4);
  const auto h2 = evaluation_channels(sc, 11, 4);
  const auto h3 = evaluation_channels(sc, 11, 5);
  CHECK(h1.data()[0] == h2.data()[0]);
  CHECK(h1.data()[0] != h3.data()[0]);

  const auto agent = make_agent(Scheme::full, net, tiny_hidden(), NormalizationConstants::identity(4));
  Rng init(1);
  const auto theta = agent.ac.policy.init(init);
  const auto e = evaluate(agent, theta, sc, 40, 11);
  REQUIRE(e.sum_rates.size() == 40);
  // replay realization 4 with its own policy stream
  Rng pr = make_rng(11, Stream::eval_policy, {4});
  ActOptions opts;
  opts.sigma_floor = true;
  const auto ep = act(agent, theta, h1, ConstraintMode::per_user, pr, opts);
  CHECK(e.sum_rates[4] == doctest::Approx(ep.sum_rate));
}
