#ifndef HYDROFCR_H
#define HYDROFCR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call. Zero means success.
 */
typedef enum HfStatus {
  HF_STATUS_OK = 0,
  HF_STATUS_NULL_POINTER = 1,
  HF_STATUS_INVALID_UTF8 = 2,
  HF_STATUS_OUT_OF_RANGE = 3,
  HF_STATUS_DOMAIN = 10,
  HF_STATUS_CONFIG = 11,
  HF_STATUS_FIT = 12,
  HF_STATUS_CAM = 13,
  HF_STATUS_PARSE = 14,
  HF_STATUS_LENGTH_MISMATCH = 15,
  HF_STATUS_EMPTY = 16,
  HF_STATUS_MISSING_BASELINE = 17,
  HF_STATUS_IO = 18,
  HF_STATUS_SERIALIZATION = 19,
  HF_STATUS_PANIC = 99,
} HfStatus;

/**
 * Outcomes of one batch run, one per configured mode.
 */
typedef struct HfBatch HfBatch;

/**
 * Scenario configuration.
 */
typedef struct HfConfig HfConfig;

/**
 * Fitted surrogate plus both CAM tables, reusable across batches.
 */
typedef struct HfPipeline HfPipeline;

/**
 * Headline KPIs of one scenario.
 */
typedef struct HfKpi {
  /**
   * 0 only_hydro, 1 hybrid_5kw, 2 hybrid_9kw, 3 var_speed.
   */
  uint32_t mode;
  uint64_t samples;
  double rms_te_w;
  double mileage_gvo_deg;
  double mileage_rba_deg;
  uint64_t nom_gvo;
  uint64_t nom_rba;
  double rbt_derivative_p95;
  double mean_eta_h;
  double mean_eta_g;
} HfKpi;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread; do not free it.
 */
const char *hf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hf_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void hf_string_free(char *s);

/**
 * Droop setpoint in W for frequency `f_hz`, using the default droop settings.
 */
double hf_fcr_setpoint(double p_disp_w, double f_hz);

/**
 * Speed coefficient for speed `n_rev_s`, runner diameter and head.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum HfStatus hf_speed_coefficient(double n_rev_s, double diameter_m, double head_m, double *out);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HfStatus hf_config_new(struct HfConfig **out);

/**
 * Configuration parsed from TOML text; missing keys take their defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HfStatus hf_config_from_toml(const char *toml, struct HfConfig **out);

/**
 * Configuration rendered as TOML; release with [`hf_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum HfStatus hf_config_to_toml(const struct HfConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum HfStatus hf_config_set_seed(struct HfConfig *cfg, uint64_t seed);

/**
 * Simulated duration in seconds. Checked by [`hf_config_validate`] and
 * again before a run.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum HfStatus hf_config_set_duration(struct HfConfig *cfg, double seconds);

/**
 * Restricts the batch to the modes in `modes[..len]`, given as indices
 * (see [`HfKpi::mode`]).
 *
 * # Safety
 * `cfg` must be a live handle and `modes` point to `len` integers.
 */
enum HfStatus hf_config_set_modes(struct HfConfig *cfg, const uint32_t *modes, uintptr_t len);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum HfStatus hf_config_validate(const struct HfConfig *cfg);

/**
 * # Safety
 * `cfg` must be null or a live handle; it is invalid afterwards.
 */
void hf_config_free(struct HfConfig *cfg);

/**
 * Samples the hill chart, fits the surrogate and builds the CAM tables.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum HfStatus hf_pipeline_build(const struct HfConfig *cfg, struct HfPipeline **out);

/**
 * # Safety
 * `p` must be null or a live handle; it is invalid afterwards.
 */
void hf_pipeline_free(struct HfPipeline *p);

/**
 * Runs every configured mode on the configured frequency series.
 *
 * # Safety
 * `cfg` and `pipeline` must be live handles and `out` a valid pointer.
 */
enum HfStatus hf_run_batch(const struct HfConfig *cfg,
                           const struct HfPipeline *pipeline,
                           struct HfBatch **out);

/**
 * Number of scenarios in the batch; 0 for a null handle.
 *
 * # Safety
 * `batch` must be null or a live handle.
 */
uintptr_t hf_batch_len(const struct HfBatch *batch);

/**
 * # Safety
 * `batch` must be a live handle and `out` a valid pointer.
 */
enum HfStatus hf_batch_kpi(const struct HfBatch *batch, uintptr_t index, struct HfKpi *out);

/**
 * Full KPI report as JSON; release with [`hf_string_free`].
 *
 * # Safety
 * `batch` must be a live handle and `out` a valid pointer.
 */
enum HfStatus hf_batch_kpi_json(const struct HfBatch *batch, uintptr_t index, char **out);

/**
 * Writes traces, KPI files and the comparison table into `dir`.
 *
 * # Safety
 * `batch` must be a live handle and `dir` a NUL-terminated path.
 */
enum HfStatus hf_batch_write(const struct HfBatch *batch, const char *dir);

/**
 * # Safety
 * `batch` must be null or a live handle; it is invalid afterwards.
 */
void hf_batch_free(struct HfBatch *batch);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYDROFCR_H */
