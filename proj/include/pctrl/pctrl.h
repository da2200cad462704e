/* C interface to the pctrl power-control library. */
#ifndef PCTRL_H
#define PCTRL_H

#include <stddef.h>
#include <stdint.h>

#if defined(PCTRL_BUILDING_LIBRARY)
#define PCTRL_API __attribute__((visibility("default")))
#else
#define PCTRL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pctrl_status {
  PCTRL_OK = 0,
  PCTRL_ERR_INVALID_ARGUMENT = 1, /* null pointer, short buffer */
  PCTRL_ERR_CONFIG = 2,
  PCTRL_ERR_SHAPE = 3,
  PCTRL_ERR_NUMERICAL = 4,
  PCTRL_ERR_TRAINING = 5,
  PCTRL_ERR_IO = 6,
  PCTRL_ERR_INTERNAL = 7
} pctrl_status;

typedef enum pctrl_scheme {
  PCTRL_CENTRALIZED = 0,
  PCTRL_PARTIAL = 1,
  PCTRL_FULL = 2
} pctrl_scheme;

typedef struct pctrl_config pctrl_config;
typedef struct pctrl_policy pctrl_policy;

PCTRL_API const char* pctrl_version(void);
PCTRL_API const char* pctrl_status_string(pctrl_status status);
/* Message of the last failed call on this thread; "" if none. */
PCTRL_API const char* pctrl_last_error(void);

PCTRL_API pctrl_status pctrl_config_create(pctrl_config** out);
PCTRL_API pctrl_status pctrl_config_load(const char* path, pctrl_config** out);
PCTRL_API void pctrl_config_destroy(pctrl_config* cfg);
PCTRL_API pctrl_status pctrl_config_set(pctrl_config* cfg, const char* key, const char* value);
/* Copies the value with its terminator into buf. *needed receives the
   required size including the terminator, even when buf is too small. */
PCTRL_API pctrl_status pctrl_config_get(const pctrl_config* cfg, const char* key, char* buf,
                                        size_t buf_len, size_t* needed);
PCTRL_API pctrl_status pctrl_config_validate(const pctrl_config* cfg);
PCTRL_API pctrl_status pctrl_config_save(const pctrl_config* cfg, const char* path);

typedef void (*pctrl_progress_fn)(void* user, size_t seed_index, size_t iteration,
                                  double mean_reward_bps, double smoothed_reward_bps,
                                  double mean_kl, int accepted);

/* Runs n_seeds training runs into output_dir. A run that aborts is recorded as
   failed in the manifest and counted in *failed_runs (may be NULL). */
PCTRL_API pctrl_status pctrl_train(const pctrl_config* cfg, pctrl_progress_fn progress,
                                   void* user, size_t* failed_runs);
PCTRL_API pctrl_status pctrl_evaluate(const pctrl_config* cfg, const char* const* checkpoints,
                                      size_t n_checkpoints);
PCTRL_API pctrl_status pctrl_sweep(const pctrl_config* cfg, const char* const* checkpoints,
                                   size_t n_checkpoints);
PCTRL_API pctrl_status pctrl_timing(const pctrl_config* cfg, const char* const* checkpoints,
                                    size_t n_checkpoints);
PCTRL_API pctrl_status pctrl_baselines(const pctrl_config* cfg);
PCTRL_API pctrl_status pctrl_accounting(const pctrl_config* cfg);

PCTRL_API pctrl_status pctrl_policy_load(const char* path, pctrl_policy** out);
PCTRL_API void pctrl_policy_destroy(pctrl_policy* policy);
PCTRL_API pctrl_status pctrl_policy_info(const pctrl_policy* policy, size_t* num_cells,
                                         size_t* users_per_cell, pctrl_scheme* scheme);
/* Channels are laid out h[tx][cell][k], tx the transmitting base station,
   with B*B*K entries in each of h_re and h_im. powers receives B*K watts,
   row-major by cell. Uses the policy at its minimum exploration noise. */
PCTRL_API pctrl_status pctrl_policy_decide(const pctrl_policy* policy, const double* h_re,
                                           const double* h_im, size_t h_len, uint64_t seed,
                                           double* powers, size_t powers_len,
                                           double* sum_rate_bps);

/* s[0] = x[0], s[n] = w x[n] + (1 - w) s[n-1]. */
PCTRL_API pctrl_status pctrl_smooth_curve(const double* raw, size_t n, double w, double* out);
PCTRL_API pctrl_status pctrl_exchange_scalars(const pctrl_config* cfg, const char* method,
                                              size_t* total_scalars);

#ifdef __cplusplus
}
#endif

#endif /* PCTRL_H */
