// Command-line front end. Talks to the library only through pctrl.h.
#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "pctrl/pctrl.h"

namespace {

struct Options {
  std::string config_path;
  std::string output_dir;
  std::string scheme;
  long long seed = -1;
  long long iterations = -1;
  bool reproducible = false;
  bool quiet = false;
  std::vector<std::string> overrides;  // key=value
  std::vector<std::string> checkpoints;
};

int report(pctrl_status s) {
  if (s == PCTRL_OK) return 0;
  const char* detail = pctrl_last_error();
  if (*detail)
    std::fprintf(stderr, "error: %s: %s\n", pctrl_status_string(s), detail);
  else
    std::fprintf(stderr, "error: %s\n", pctrl_status_string(s));
  return 2;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config_path, "key = value config file");
  sub->add_option("-o,--output-dir", o.output_dir, "directory for results");
  sub->add_option("-s,--seed", o.seed, "master seed")->check(CLI::NonNegativeNumber);
  sub->add_option("--set", o.overrides, "extra key=value override (repeatable)")
      ->allow_extra_args(false);
  sub->add_flag("--reproducible", o.reproducible, "write wall-clock fields as 0");
}

pctrl_status build_config(const Options& o, pctrl_config** out) {
  pctrl_status s = o.config_path.empty() ? pctrl_config_create(out)
                                         : pctrl_config_load(o.config_path.c_str(), out);
  if (s != PCTRL_OK) return s;
  auto set = [&](const std::string& k, const std::string& v) {
    return s == PCTRL_OK ? (s = pctrl_config_set(*out, k.c_str(), v.c_str())) : s;
  };
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return PCTRL_ERR_INVALID_ARGUMENT;
    }
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.output_dir.empty()) set("output_dir", o.output_dir);
  if (!o.scheme.empty()) set("scheme", o.scheme);
  if (o.seed >= 0) set("master_seed", std::to_string(o.seed));
  if (o.iterations >= 0) set("iterations", std::to_string(o.iterations));
  if (o.reproducible) set("reproducible", "true");
  if (s == PCTRL_OK) s = pctrl_config_validate(*out);
  return s;
}

void print_progress(void* user, size_t seed_index, size_t iteration, double mean_reward,
                    double smoothed, double kl, int accepted) {
  if (*static_cast<const bool*>(user)) return;
  std::fprintf(stderr, "seed %zu  iter %4zu  reward %8.3f Mbps  smoothed %8.3f  kl %.2e%s\n",
               seed_index, iteration, mean_reward / 1e6, smoothed / 1e6, kl,
               accepted ? "" : "  (rejected)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Downlink power control with trust-region reinforcement learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pctrl_version());
  Options o;

  auto* train = app.add_subcommand("train", "train n_seeds policies");
  add_common(train, o);
  train->add_option("--scheme", o.scheme, "centralized, partial or full");
  train->add_option("-n,--iterations", o.iterations, "override the iteration count")
      ->check(CLI::NonNegativeNumber);
  train->add_flag("-q,--quiet", o.quiet, "no per-iteration progress");

  auto* evaluate = app.add_subcommand("evaluate", "compare policies and baselines");
  auto* sweep = app.add_subcommand("sweep", "evaluate across transmit powers");
  auto* timing = app.add_subcommand("timing", "single-thread decision latency");
  for (auto* sub : {evaluate, sweep, timing}) {
    add_common(sub, o);
    sub->add_option("checkpoints", o.checkpoints, "trained policy checkpoints");
  }
  auto* baselines = app.add_subcommand("baselines", "FP and WMMSE convergence traces");
  add_common(baselines, o);
  auto* accounting = app.add_subcommand("accounting", "information exchange per time slot");
  add_common(accounting, o);

  CLI11_PARSE(app, argc, argv);

  pctrl_config* cfg = nullptr;
  if (const auto s = build_config(o, &cfg); s != PCTRL_OK) {
    pctrl_config_destroy(cfg);
    return report(s);
  }

  std::vector<const char*> ckpts;
  for (const auto& c : o.checkpoints) ckpts.push_back(c.c_str());

  pctrl_status s = PCTRL_OK;
  int rc = 0;
  if (*train) {
    size_t failed = 0;
    s = pctrl_train(cfg, print_progress, &o.quiet, &failed);
    if (s == PCTRL_OK && failed > 0) {
      std::fprintf(stderr, "%zu run(s) failed; first: %s\n", failed, pctrl_last_error());
      rc = 1;
    }
  } else if (*evaluate) {
    s = pctrl_evaluate(cfg, ckpts.data(), ckpts.size());
  } else if (*sweep) {
    s = pctrl_sweep(cfg, ckpts.data(), ckpts.size());
  } else if (*timing) {
    s = pctrl_timing(cfg, ckpts.data(), ckpts.size());
  } else if (*baselines) {
    s = pctrl_baselines(cfg);
  } else if (*accounting) {
    s = pctrl_accounting(cfg);
  }
  pctrl_config_destroy(cfg);
  return s != PCTRL_OK ? report(s) : rc;
}
