#include "pctrl/pctrl.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "pctrl/harness.hpp"

struct pctrl_config {
  pctrl::ExperimentConfig cfg;
};

struct pctrl_policy {
  pctrl::Checkpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

pctrl_status fail(pctrl_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <class F>
pctrl_status wrap(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const pctrl::ConfigError& e) {
    return fail(PCTRL_ERR_CONFIG, e.what());
  } catch (const pctrl::ShapeError& e) {
    return fail(PCTRL_ERR_SHAPE, e.what());
  } catch (const pctrl::NumericalError& e) {
    return fail(PCTRL_ERR_NUMERICAL, e.what());
  } catch (const pctrl::TrainingError& e) {
    return fail(PCTRL_ERR_TRAINING, e.what());
  } catch (const pctrl::IoError& e) {
    return fail(PCTRL_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(PCTRL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PCTRL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PCTRL_ERR_INTERNAL, "unknown error");
  }
}

std::vector<std::string> paths(const char* const* checkpoints, size_t n) {
  if (n > 0 && !checkpoints) throw pctrl::ConfigError("checkpoint list is null");
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) {
    if (!checkpoints[i]) throw pctrl::ConfigError("checkpoint path is null");
    out.emplace_back(checkpoints[i]);
  }
  return out;
}

}  // namespace

#define PCTRL_REQUIRE(cond) \
  if (!(cond)) return fail(PCTRL_ERR_INVALID_ARGUMENT, "invalid argument: " #cond)

extern "C" {

const char* pctrl_version(void) { return pctrl::kVersion; }

const char* pctrl_status_string(pctrl_status status) {
  switch (status) {
    case PCTRL_OK: return "ok";
    case PCTRL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PCTRL_ERR_CONFIG: return "configuration error";
    case PCTRL_ERR_SHAPE: return "shape mismatch";
    case PCTRL_ERR_NUMERICAL: return "numerical error";
    case PCTRL_ERR_TRAINING: return "training error";
    case PCTRL_ERR_IO: return "i/o error";
    case PCTRL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pctrl_last_error(void) { return g_last_error.c_str(); }

pctrl_status pctrl_config_create(pctrl_config** out) {
  PCTRL_REQUIRE(out);
  return wrap([&] {
    *out = new pctrl_config{};
    return PCTRL_OK;
  });
}

pctrl_status pctrl_config_load(const char* path, pctrl_config** out) {
  PCTRL_REQUIRE(path && out);
  return wrap([&] {
    *out = new pctrl_config{pctrl::load_config(path)};
    return PCTRL_OK;
  });
}

void pctrl_config_destroy(pctrl_config* cfg) { delete cfg; }

pctrl_status pctrl_config_set(pctrl_config* cfg, const char* key, const char* value) {
  PCTRL_REQUIRE(cfg && key && value);
  return wrap([&] {
    pctrl::set_config_value(cfg->cfg, key, value);
    return PCTRL_OK;
  });
}

pctrl_status pctrl_config_get(const pctrl_config* cfg, const char* key, char* buf,
                              size_t buf_len, size_t* needed) {
  PCTRL_REQUIRE(cfg && key);
  return wrap([&] {
    const auto v = pctrl::get_config_value(cfg->cfg, key);
    if (needed) *needed = v.size() + 1;
    if (!buf || buf_len < v.size() + 1)
      return fail(PCTRL_ERR_INVALID_ARGUMENT, "buffer too small");
    std::memcpy(buf, v.c_str(), v.size() + 1);
    return PCTRL_OK;
  });
}

pctrl_status pctrl_config_validate(const pctrl_config* cfg) {
  PCTRL_REQUIRE(cfg);
  return wrap([&] {
    cfg->cfg.validate();
    return PCTRL_OK;
  });
}

pctrl_status pctrl_config_save(const pctrl_config* cfg, const char* path) {
  PCTRL_REQUIRE(cfg && path);
  return wrap([&] {
    std::FILE* f = std::fopen(path, "wb");
    if (!f) throw pctrl::IoError(std::string("cannot write '") + path + "'");
    const auto text = pctrl::format_config(cfg->cfg);
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    if (std::fclose(f) != 0 || !ok)
      throw pctrl::IoError(std::string("failed writing '") + path + "'");
    return PCTRL_OK;
  });
}

pctrl_status pctrl_train(const pctrl_config* cfg, pctrl_progress_fn progress, void* user,
                         size_t* failed_runs) {
  PCTRL_REQUIRE(cfg);
  return wrap([&] {
    pctrl::CampaignProgress cb;
    if (progress)
      cb = [&](std::size_t s, const pctrl::IterationLog& r) {
        progress(user, s, r.iteration, r.mean_reward, r.smoothed_reward, r.kl,
                 r.accepted ? 1 : 0);
      };
    const auto m = pctrl::run_training_campaign(cfg->cfg, cb);
    size_t failed = 0;
    std::string first;
    for (const auto& r : m.runs)
      if (!r.ok) {
        if (failed++ == 0) first = r.message;
      }
    if (failed_runs) *failed_runs = failed;
    if (failed > 0) g_last_error = first;
    return PCTRL_OK;
  });
}

pctrl_status pctrl_evaluate(const pctrl_config* cfg, const char* const* checkpoints,
                            size_t n_checkpoints) {
  PCTRL_REQUIRE(cfg);
  return wrap([&] {
    pctrl::run_evaluation(cfg->cfg, paths(checkpoints, n_checkpoints));
    return PCTRL_OK;
  });
}

pctrl_status pctrl_sweep(const pctrl_config* cfg, const char* const* checkpoints,
                         size_t n_checkpoints) {
  PCTRL_REQUIRE(cfg);
  return wrap([&] {
    pctrl::run_power_sweep(cfg->cfg, paths(checkpoints, n_checkpoints));
    return PCTRL_OK;
  });
}

pctrl_status pctrl_timing(const pctrl_config* cfg, const char* const* checkpoints,
                          size_t n_checkpoints) {
  PCTRL_REQUIRE(cfg);
  return wrap([&] {
    pctrl::run_timing(cfg->cfg, paths(checkpoints, n_checkpoints));
    return PCTRL_OK;
  });
}

pctrl_status pctrl_baselines(const pctrl_config* cfg) {
  PCTRL_REQUIRE(cfg);
  return wrap([&] {
    pctrl::run_baselines(cfg->cfg);
    return PCTRL_OK;
  });
}

pctrl_status pctrl_accounting(const pctrl_config* cfg) {
  PCTRL_REQUIRE(cfg);
  return wrap([&] {
    pctrl::run_accounting(cfg->cfg);
    return PCTRL_OK;
  });
}

pctrl_status pctrl_policy_load(const char* path, pctrl_policy** out) {
  PCTRL_REQUIRE(path && out);
  return wrap([&] {
    *out = new pctrl_policy{pctrl::load_checkpoint(path)};
    return PCTRL_OK;
  });
}

void pctrl_policy_destroy(pctrl_policy* policy) { delete policy; }

pctrl_status pctrl_policy_info(const pctrl_policy* policy, size_t* num_cells,
                               size_t* users_per_cell, pctrl_scheme* scheme) {
  PCTRL_REQUIRE(policy);
  const auto& a = policy->ckpt.agent;
  if (num_cells) *num_cells = a.net.num_cells;
  if (users_per_cell) *users_per_cell = a.net.users_per_cell;
  if (scheme) *scheme = static_cast<pctrl_scheme>(static_cast<int>(a.scheme));
  return PCTRL_OK;
}

pctrl_status pctrl_policy_decide(const pctrl_policy* policy, const double* h_re,
                                 const double* h_im, size_t h_len, uint64_t seed,
                                 double* powers, size_t powers_len, double* sum_rate_bps) {
  PCTRL_REQUIRE(policy && h_re && h_im && powers);
  return wrap([&] {
    const auto& a = policy->ckpt.agent;
    const std::size_t B = a.net.num_cells;
    const std::size_t K = a.net.users_per_cell;
    if (h_len != B * B * K || powers_len != B * K)
      throw pctrl::ShapeError("channel or power buffer has the wrong length");
    pctrl::ChannelTensor h(B, K);
    for (std::size_t i = 0; i < h_len; ++i) h.data()[i] = {h_re[i], h_im[i]};
    pctrl::Rng rng(seed);
    pctrl::ActOptions opts;
    opts.sigma_floor = true;
    const auto ep = pctrl::act(a, policy->ckpt.theta, h, pctrl::ConstraintMode::per_user, rng,
                               opts);
    for (std::size_t i = 0; i < powers_len; ++i) powers[i] = ep.powers.data()[i];
    if (sum_rate_bps) *sum_rate_bps = ep.sum_rate;
    return PCTRL_OK;
  });
}

pctrl_status pctrl_smooth_curve(const double* raw, size_t n, double w, double* out) {
  PCTRL_REQUIRE((raw && out) || n == 0);
  return wrap([&] {
    const auto s = pctrl::smooth_curve(std::span<const double>(raw, n), w);
    for (size_t i = 0; i < n; ++i) out[i] = s[i];
    return PCTRL_OK;
  });
}

pctrl_status pctrl_exchange_scalars(const pctrl_config* cfg, const char* method,
                                    size_t* total_scalars) {
  PCTRL_REQUIRE(cfg && method && total_scalars);
  return wrap([&] {
    *total_scalars = pctrl::exchange_accounting(cfg->cfg.net, method).total;
    return PCTRL_OK;
  });
}

}  // extern "C"
