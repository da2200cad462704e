// Exercises the shared library through pctrl.h only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "pctrl/pctrl.h"

namespace fs = std::filesystem;

namespace {

struct Config {
  pctrl_config* p = nullptr;
  Config() { REQUIRE(pctrl_config_create(&p) == PCTRL_OK); }
  ~Config() { pctrl_config_destroy(p); }
  void set(const char* k, const char* v) { REQUIRE(pctrl_config_set(p, k, v) == PCTRL_OK); }
  std::string get(const char* k) {
    size_t need = 0;
    char buf[256];
    REQUIRE(pctrl_config_get(p, k, buf, sizeof buf, &need) == PCTRL_OK);
    return buf;
  }
};

std::string scratch(const char* name) {
  const auto d = fs::temp_directory_path() / (std::string("pctrl_capi_") + name);
  fs::remove_all(d);
  return d.string();
}

void tiny(Config& c, const std::string& dir) {
  c.set("num_cells", "2");
  c.set("users_per_cell", "1");
  c.set("episodes_per_iter", "16");
  c.set("hidden_layers", "1");
  c.set("hidden_width", "8");
  c.set("norm_samples", "50");
  c.set("iterations", "2");
  c.set("eval_realizations", "10");
  c.set("timing_realizations", "4");
  c.set("pmax_sweep_dbm", "30,43");
  c.set("output_dir", dir.c_str());
  c.set("reproducible", "true");
}

}  // namespace

TEST_CASE("status strings and version") {
  CHECK(std::strlen(pctrl_version()) > 0);
  CHECK(std::string(pctrl_status_string(PCTRL_OK)) == "ok");
  CHECK(std::string(pctrl_status_string(PCTRL_ERR_CONFIG)) == "configuration error");
  CHECK(std::string(pctrl_status_string(static_cast<pctrl_status>(42))) == "unknown status");
}

TEST_CASE("argument checks") {
  CHECK(pctrl_config_create(nullptr) == PCTRL_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(pctrl_last_error()) > 0);
  CHECK(pctrl_train(nullptr, nullptr, nullptr, nullptr) == PCTRL_ERR_INVALID_ARGUMENT);
  pctrl_policy* pol = nullptr;
  CHECK(pctrl_policy_load(nullptr, &pol) == PCTRL_ERR_INVALID_ARGUMENT);
  pctrl_config_destroy(nullptr);
  pctrl_policy_destroy(nullptr);
}

TEST_CASE("config handle") {
  Config c;
  CHECK(pctrl_config_set(c.p, "not_a_key", "1") == PCTRL_ERR_CONFIG);
  CHECK(std::string(pctrl_last_error()).find("not_a_key") != std::string::npos);
  CHECK(pctrl_config_set(c.p, "num_cells", "-3") == PCTRL_ERR_CONFIG);
  c.set("scheme", "partial");
  CHECK(c.get("scheme") == "partial");

  size_t need = 0;
  char small[2];
  CHECK(pctrl_config_get(c.p, "scheme", small, sizeof small, &need) == PCTRL_ERR_INVALID_ARGUMENT);
  CHECK(need == std::strlen("partial") + 1);
  CHECK(pctrl_config_get(c.p, "scheme", nullptr, 0, &need) == PCTRL_ERR_INVALID_ARGUMENT);

  c.set("n_seeds", "0");
  CHECK(pctrl_config_validate(c.p) == PCTRL_ERR_CONFIG);
  c.set("n_seeds", "3");
  CHECK(pctrl_config_validate(c.p) == PCTRL_OK);

  const auto dir = scratch("cfg");
  fs::create_directories(dir);
  const auto path = dir + "/saved.cfg";
  REQUIRE(pctrl_config_save(c.p, path.c_str()) == PCTRL_OK);
  pctrl_config* back = nullptr;
  REQUIRE(pctrl_config_load(path.c_str(), &back) == PCTRL_OK);
  char buf[64];
  REQUIRE(pctrl_config_get(back, "n_seeds", buf, sizeof buf, nullptr) == PCTRL_OK);
  CHECK(std::string(buf) == "3");
  pctrl_config_destroy(back);
  CHECK(pctrl_config_load((dir + "/missing.cfg").c_str(), &back) == PCTRL_ERR_IO);
}

TEST_CASE("train, load and decide") {
  Config c;
  const auto dir = scratch("train");
  tiny(c, dir);
  c.set("scheme", "full");
  size_t calls = 0, failed = 99;
  auto cb = [](void* user, size_t, size_t, double, double, double kl, int) {
    CHECK(kl <= 0.01);
    ++*static_cast<size_t*>(user);
  };
  REQUIRE(pctrl_train(c.p, cb, &calls, &failed) == PCTRL_OK);
  CHECK(calls == 2);
  CHECK(failed == 0);
  const auto ckpt = dir + "/full_trpo_seed0.ckpt.json";
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(dir + "/manifest.json"));

  pctrl_policy* pol = nullptr;
  REQUIRE(pctrl_policy_load(ckpt.c_str(), &pol) == PCTRL_OK);
  size_t B = 0, K = 0;
  pctrl_scheme scheme = PCTRL_CENTRALIZED;
  REQUIRE(pctrl_policy_info(pol, &B, &K, &scheme) == PCTRL_OK);
  CHECK(B == 2);
  CHECK(K == 1);
  CHECK(scheme == PCTRL_FULL);

  std::vector<double> re(B * B * K, 1e-6), im(B * B * K, 0.0), p(B * K);
  re[1] = re[2] = 1e-8;  // weak cross links
  double rate = -1.0;
  REQUIRE(pctrl_policy_decide(pol, re.data(), im.data(), re.size(), 7, p.data(), p.size(),
                              &rate) == PCTRL_OK);
  const double pmax = std::pow(10.0, (43.0 - 30.0) / 10.0);
  for (double v : p) {
    CHECK(v >= 0.0);
    CHECK(v <= pmax * (1 + 1e-12));
  }
  // sum rate recomputed from the returned powers; h index is tx * B + cell when K = 1
  const double z = std::pow(10.0, (-150.0 + 10 * std::log10(20e6) + 9.0 - 30.0) / 10.0);
  double expect = 0.0;
  for (size_t b = 0; b < 2; ++b) {
    const size_t o = 1 - b;
    const double own = re[b * 2 + b] * re[b * 2 + b];
    const double cross = re[o * 2 + b] * re[o * 2 + b];
    expect += std::log2(1.0 + p[b] * own / (p[o] * cross + z));
  }
  CHECK(rate == doctest::Approx(20e6 * expect));
  std::vector<double> p2(B * K);
  double rate2 = 0.0;
  REQUIRE(pctrl_policy_decide(pol, re.data(), im.data(), re.size(), 7, p2.data(), p2.size(),
                              &rate2) == PCTRL_OK);
  CHECK(p == p2);
  CHECK(pctrl_policy_decide(pol, re.data(), im.data(), 3, 7, p.data(), p.size(), nullptr) ==
        PCTRL_ERR_SHAPE);
  pctrl_policy_destroy(pol);

  SUBCASE("evaluate, sweep and timing") {
    const char* list[] = {ckpt.c_str()};
    Config e;
    tiny(e, scratch("eval"));
    CHECK(pctrl_evaluate(e.p, list, 1) == PCTRL_OK);
    CHECK(fs::exists(e.get("output_dir") + "/evaluation.csv"));
    e.set("output_dir", scratch("sweep").c_str());
    CHECK(pctrl_sweep(e.p, list, 1) == PCTRL_OK);
    CHECK(fs::exists(e.get("output_dir") + "/sweep.csv"));
    e.set("output_dir", scratch("timing").c_str());
    CHECK(pctrl_timing(e.p, list, 1) == PCTRL_OK);
    CHECK(fs::exists(e.get("output_dir") + "/timing.csv"));

    e.set("users_per_cell", "2");
    CHECK(pctrl_evaluate(e.p, list, 1) == PCTRL_ERR_CONFIG);
    const char* bad[] = {"/nonexistent/x.ckpt.json"};
    e.set("users_per_cell", "1");
    CHECK(pctrl_evaluate(e.p, bad, 1) == PCTRL_ERR_IO);
    CHECK(pctrl_evaluate(e.p, nullptr, 1) == PCTRL_ERR_CONFIG);
  }
}

TEST_CASE("baselines and accounting") {
  Config c;
  tiny(c, scratch("base"));
  CHECK(pctrl_baselines(c.p) == PCTRL_OK);
  CHECK(fs::exists(c.get("output_dir") + "/trace_fp.csv"));
  c.set("output_dir", scratch("acct").c_str());
  CHECK(pctrl_accounting(c.p) == PCTRL_OK);
  CHECK(fs::exists(c.get("output_dir") + "/accounting.csv"));

  c.set("num_cells", "3");
  c.set("users_per_cell", "2");
  size_t total = 0;
  REQUIRE(pctrl_exchange_scalars(c.p, "centralized", &total) == PCTRL_OK);
  CHECK(total == 18 + 6);
  REQUIRE(pctrl_exchange_scalars(c.p, "partial", &total) == PCTRL_OK);
  CHECK(total == 6);
  REQUIRE(pctrl_exchange_scalars(c.p, "full", &total) == PCTRL_OK);
  CHECK(total == 0);
  CHECK(pctrl_exchange_scalars(c.p, "nope", &total) == PCTRL_ERR_CONFIG);
}

TEST_CASE("smoothing through the C API") {
  const double x[] = {0.0, 1.0};
  double s[2];
  REQUIRE(pctrl_smooth_curve(x, 2, 0.96, s) == PCTRL_OK);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == doctest::Approx(0.96));
  CHECK(pctrl_smooth_curve(x, 2, 0.0, s) == PCTRL_ERR_CONFIG);
  CHECK(pctrl_smooth_curve(nullptr, 0, 0.5, nullptr) == PCTRL_OK);
}
