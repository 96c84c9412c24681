#ifndef IROLLAN_H
#define IROLLAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IrvStatus {
  IRV_STATUS_OK = 0,
  IRV_STATUS_NULL_POINTER = 1,
  IRV_STATUS_INVALID_UTF8 = 2,
  IRV_STATUS_INVALID_ARGUMENT = 3,
  IRV_STATUS_UNKNOWN_AGENT = 4,
  IRV_STATUS_RUNTIME = 5,
  IRV_STATUS_PANIC = 6,
} IrvStatus;

// Opaque simulation handle.
typedef struct IrvSimulation IrvSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *irv_last_error(void);

// Creates a simulation from TOML configuration text; null means defaults.
//
// # Safety
// `config_toml` must be null or a valid C string; `out` must be writable.
enum IrvStatus irv_simulation_new(const char *config_toml, struct IrvSimulation **out);

// # Safety
// `sim` must be null or a handle from [`irv_simulation_new`] not yet freed.
void irv_simulation_free(struct IrvSimulation *sim);

// Advances one step. When `out_json` is non-null it receives the step's
// records as a JSON array.
//
// # Safety
// `sim` must be a live handle; `out_json` null or writable.
enum IrvStatus irv_simulation_step(struct IrvSimulation *sim, char **out_json);

// # Safety
// `sim` must be a live handle or null.
uint64_t irv_simulation_completed_steps(const struct IrvSimulation *sim);

// `{observation, action_space, revision}` for one agent.
//
// # Safety
// `sim` must be a live handle, `agent` a C string, `out_json` writable.
enum IrvStatus irv_simulation_observe(struct IrvSimulation *sim,
                                      const char *agent,
                                      char **out_json);

// Applies an action directly, without the resource gate. Parse and legality
// failures are reported in the returned `outcome`, not as error statuses.
//
// # Safety
// `sim` must be a live handle, `agent` and `action` C strings, `out_json`
// null or writable.
enum IrvStatus irv_simulation_act(struct IrvSimulation *sim,
                                  const char *agent,
                                  const char *action,
                                  char **out_json);

// Full world snapshot with revision, step count and resource balances.
//
// # Safety
// `sim` must be a live handle; `out_json` writable.
enum IrvStatus irv_simulation_state_json(struct IrvSimulation *sim, char **out_json);

// # Safety
// `sim` must be a live handle; `out_json` writable.
enum IrvStatus irv_simulation_metrics_json(struct IrvSimulation *sim, char **out_json);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void irv_string_free(char *s);

// Probability that an agent with `balance` resources acts.
double irv_act_probability(int64_t balance);

// Signed allocation for a 1-based `rank` among `n` agents.
//
// # Safety
// `out` must be writable.
enum IrvStatus irv_rank_to_allocation(size_t rank,
                                      size_t n,
                                      int64_t s_min,
                                      int64_t s_max,
                                      double *out);

// Topic of an area from `n` consecutive `(pleasure, arousal, dominance)`
// triples; 0 for an empty area.
//
// # Safety
// `pads` must point to `3 * n` doubles (or be null with `n == 0`); `out`
// must be writable.
enum IrvStatus irv_compute_topic(const double *pads, size_t n, double *out);

// Recency weight of the `n`-th of `t` moments; NaN unless `1 <= n < t`.
double irv_recency_weight(uint64_t n, uint64_t t);

// Spherical similarity with unit angular weights; angles are normalized.
double irv_spherical_similarity(double theta_a,
                                double phi_a,
                                double gamma_a,
                                double theta_b,
                                double phi_b,
                                double gamma_b);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IROLLAN_H */
