#ifndef RIS_SLAC_H
#define RIS_SLAC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_ARGUMENT = 2,
  RS_STATUS_DIMENSION_MISMATCH = 3,
  RS_STATUS_PARSE = 4,
  RS_STATUS_IO = 5,
  RS_STATUS_CONFIG = 6,
  RS_STATUS_GEOMETRY = 7,
  RS_STATUS_INTERNAL = 8,
} RsStatus;

/**
 * Pilot profile policy of a tradeoff point.
 */
typedef enum RsPolicy {
  RS_POLICY_RANDOM = 0,
  RS_POLICY_DIRECTIONAL = 1,
} RsPolicy;

/**
 * SISO localization model with its pilot slots.
 */
typedef struct RsLocModel RsLocModel;

/**
 * Result table of a tradeoff sweep.
 */
typedef struct RsTradeoff RsTradeoff;

/**
 * Trained or hand-set unfolded estimator parameters.
 */
typedef struct RsUnfolded RsUnfolded;

/**
 * One row of a tradeoff sweep. `peb_m` is infinite when the Fisher
 * information is singular.
 */
typedef struct RsTradeoffPoint {
  size_t ris_elements;
  enum RsPolicy policy;
  size_t t_p;
  double peb_m;
  double eff_se_bits;
} RsTradeoffPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length plus one, so a
 * caller can size the buffer by passing `len = 0`.
 */
size_t rs_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rs_version(void);

/**
 * (1 − t_p/t_c)·log2(1 + snr_linear).
 */
enum RsStatus rs_effective_se(double snr_linear, size_t t_p, size_t t_c, double *out);

/**
 * Builds a SISO model with a square `ris_side`×`ris_side` RIS centred at
 * `ris_center`, unit direct and RIS gains, unit power and noise variance
 * `10^(-element_snr_db/10)`. Positions are 3-vectors in meters.
 */
enum RsStatus rs_loc_model_new(const double *bs,
                               const double *user,
                               const double *ris_center,
                               size_t ris_side,
                               double spacing_m,
                               double wavelength_m,
                               double element_snr_db,
                               struct RsLocModel **out);

/**
 * Appends `count` slots with uniformly random RIS phases.
 */
enum RsStatus rs_loc_model_add_random_slots(struct RsLocModel *model, size_t count, uint64_t seed);

/**
 * Appends `count` slots focused on points drawn in a ball of `radius_m`
 * around `prior`, with elementwise phase dither of `dither_rad`.
 */
enum RsStatus rs_loc_model_add_focused_slots(struct RsLocModel *model,
                                             size_t count,
                                             const double *prior,
                                             double radius_m,
                                             double dither_rad,
                                             uint64_t seed);

/**
 * Number of pilot slots, or 0 for a null handle.
 */
size_t rs_loc_model_slot_count(const struct RsLocModel *model);

/**
 * Position error bound in meters over all slots. A positive `prior_sigma_m`
 * adds isotropic prior information on the position; pass 0 for none.
 * Singular information yields infinity with status Ok.
 */
enum RsStatus rs_loc_model_peb(const struct RsLocModel *model, double prior_sigma_m, double *out);

void rs_loc_model_free(struct RsLocModel *model);

/**
 * Creates an estimator from `depth` step sizes and thresholds.
 */
enum RsStatus rs_unfolded_new(size_t depth,
                              const double *alphas,
                              const double *lambdas,
                              struct RsUnfolded **out);

/**
 * Reads parameters written by [`rs_unfolded_save`] or the library.
 */
enum RsStatus rs_unfolded_load(const char *path, struct RsUnfolded **out);

enum RsStatus rs_unfolded_save(const struct RsUnfolded *est, const char *path);

/**
 * Layer count, or 0 for a null handle.
 */
size_t rs_unfolded_depth(const struct RsUnfolded *est);

/**
 * Copies the parameters into caller arrays of length `len`, which must
 * equal the depth.
 */
enum RsStatus rs_unfolded_params(const struct RsUnfolded *est,
                                 double *alphas,
                                 double *lambdas,
                                 size_t len);

void rs_unfolded_free(struct RsUnfolded *est);

/**
 * Runs the tradeoff sweep described by a TOML run configuration.
 * Configuration problems return `Config` with the offending key in the
 * error message.
 */
enum RsStatus rs_tradeoff_run(const char *config_toml, struct RsTradeoff **out);

/**
 * Number of rows, or 0 for a null handle.
 */
size_t rs_tradeoff_len(const struct RsTradeoff *result);

enum RsStatus rs_tradeoff_point(const struct RsTradeoff *result,
                                size_t index,
                                struct RsTradeoffPoint *out);

void rs_tradeoff_free(struct RsTradeoff *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIS_SLAC_H */
