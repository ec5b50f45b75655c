#ifndef RSMIMO_H
#define RSMIMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsmimoStatus {
  RSMIMO_STATUS_OK = 0,
  RSMIMO_STATUS_NULL_POINTER = 1,
  RSMIMO_STATUS_INVALID_ARGUMENT = 2,
  RSMIMO_STATUS_BUFFER_TOO_SMALL = 3,
  RSMIMO_STATUS_DIMENSION = 4,
  RSMIMO_STATUS_DOMAIN = 5,
  RSMIMO_STATUS_NUMERICAL = 6,
  RSMIMO_STATUS_NON_CONVERGENCE = 7,
  RSMIMO_STATUS_PARSE = 8,
  RSMIMO_STATUS_IO = 9,
  RSMIMO_STATUS_PANIC = 10,
} RsmimoStatus;

typedef enum RsmimoCsit {
  RSMIMO_CSIT_PERFECT = 0,
  RSMIMO_CSIT_IMPERFECT = 1,
} RsmimoCsit;

typedef enum RsmimoStrategy {
  RSMIMO_STRATEGY_NO_RS = 0,
  RSMIMO_STRATEGY_RS = 1,
} RsmimoStrategy;

typedef enum RsmimoTopology {
  RSMIMO_TOPOLOGY_CLO = 0,
  RSMIMO_TOPOLOGY_SLO = 1,
} RsmimoTopology;

/**
 * Opaque system description: link configuration plus impairments.
 */
typedef struct RsmimoConfig RsmimoConfig;

/**
 * Full impairment profile. Variances are per slot; `xi_*` are relative to
 * the thermal noise floor.
 */
typedef struct RsmimoImpairments {
  double sigma_phi2;
  double sigma_varphi2;
  double kappa_t2_bs;
  double kappa_r2_bs;
  double kappa_t2_ue;
  double kappa_r2_ue;
  double xi_bs;
  double xi_ue;
} RsmimoImpairments;

/**
 * Scalar results of one evaluation.
 */
typedef struct RsmimoSummary {
  double sum_rate;
  double common_rate;
  /**
   * Fraction of the power given to the private streams.
   */
  double t;
  /**
   * 95% confidence half-width of the sum rate; zero for the DE engine.
   */
  double ci95;
  size_t users;
} RsmimoSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rsmimo_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rsmimo_version(void);

/**
 * Creates a configuration with imperfect CSIT, RS, `tau = users`, ideal
 * CLO hardware and seed 0. `rho` is the linear downlink SNR.
 *
 * # Safety
 * `out` must be a valid pointer; on success it receives a handle that must
 * be released with [`rsmimo_config_free`].
 */
enum RsmimoStatus rsmimo_config_new(size_t antennas,
                                    size_t users,
                                    size_t block_len,
                                    double rho,
                                    struct RsmimoConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from [`rsmimo_config_new`] not yet freed.
 */
void rsmimo_config_free(struct RsmimoConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum RsmimoStatus rsmimo_config_set_mode(struct RsmimoConfig *cfg,
                                         enum RsmimoCsit csit,
                                         enum RsmimoStrategy strategy,
                                         enum RsmimoTopology topology);

/**
 * Sets pilot length, uplink pilot power (linear) and the Monte Carlo seed.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum RsmimoStatus rsmimo_config_set_training(struct RsmimoConfig *cfg,
                                             size_t pilot_len,
                                             double rho_up,
                                             uint64_t seed);

/**
 * Shorthand profile: total phase-noise variance `delta` split evenly between
 * the BS and UE oscillators, one EVM factor `kappa2` for all distortions and
 * one amplified-noise level `xi`. Keeps the current topology.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum RsmimoStatus rsmimo_config_set_uniform_impairments(struct RsmimoConfig *cfg,
                                                        double delta,
                                                        double kappa2,
                                                        double xi);

/**
 * # Safety
 * `cfg` must be a live handle and `imp` a valid pointer.
 */
enum RsmimoStatus rsmimo_config_set_impairments(struct RsmimoConfig *cfg,
                                                const struct RsmimoImpairments *imp);

/**
 * Deterministic-equivalent rates.
 *
 * `private_rates` may be null; otherwise it must hold `len >= users` values.
 * `summary` may be null.
 *
 * # Safety
 * All non-null pointers must be valid for the stated sizes.
 */
enum RsmimoStatus rsmimo_de_rates(const struct RsmimoConfig *cfg,
                                  double *private_rates,
                                  size_t len,
                                  struct RsmimoSummary *summary);

/**
 * Monte Carlo rates over `trials` coherence blocks; `workers = 0` uses all cores.
 * Output conventions as in [`rsmimo_de_rates`].
 *
 * # Safety
 * All non-null pointers must be valid for the stated sizes.
 */
enum RsmimoStatus rsmimo_mc_rates(const struct RsmimoConfig *cfg,
                                  size_t trials,
                                  size_t workers,
                                  double *private_rates,
                                  size_t len,
                                  struct RsmimoSummary *summary);

/**
 * Runs a TOML manifest and writes the result table to `out_path`.
 * Rows whose engine failed are still written; their count goes to `failures`
 * when it is non-null.
 *
 * # Safety
 * `manifest_toml` and `out_path` must be NUL-terminated strings.
 */
enum RsmimoStatus rsmimo_run_manifest(const char *manifest_toml,
                                      const char *out_path,
                                      size_t workers,
                                      size_t *failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSMIMO_H */
