#ifndef CSTIRAP_H
#define CSTIRAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CstirapStatus {
  CSTIRAP_STATUS_OK = 0,
  /**
   * Invalid configuration, preset, parameter or argument.
   */
  CSTIRAP_STATUS_CONFIG = 1,
  /**
   * The integrator or the adiabatic frame failed.
   */
  CSTIRAP_STATUS_INTEGRATION = 2,
  CSTIRAP_STATUS_IO = 3,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  CSTIRAP_STATUS_INVALID_POINTER = 4,
  /**
   * Level or buffer size out of range.
   */
  CSTIRAP_STATUS_OUT_OF_RANGE = 5,
  /**
   * Internal panic caught at the boundary.
   */
  CSTIRAP_STATUS_PANIC = 6,
} CstirapStatus;

/**
 * A finished simulation.
 */
typedef struct CstirapRun CstirapRun;

/**
 * A resolved scenario: chain, grid and run options.
 */
typedef struct CstirapScenario CstirapScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty after a success. The
 * pointer stays valid until the next call into the library on this thread.
 */
const char *cstirap_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cstirap_version(void);

/**
 * Create a scenario from a built-in preset name.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CstirapStatus cstirap_scenario_from_preset(const char *name, struct CstirapScenario **out);

/**
 * Create a scenario from config-file JSON text.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CstirapStatus cstirap_scenario_from_config(const char *json, struct CstirapScenario **out);

/**
 * Apply a `key=value` override. On failure the scenario is unchanged.
 *
 * # Safety
 * `scenario` must come from this library; `key_value` must be a valid string.
 */
enum CstirapStatus cstirap_scenario_set(struct CstirapScenario *scenario, const char *key_value);

/**
 * Number of levels in the chain, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or come from this library.
 */
size_t cstirap_scenario_levels(const struct CstirapScenario *scenario);

/**
 * # Safety
 * `scenario` must be null or come from this library, and not be used afterwards.
 */
void cstirap_scenario_free(struct CstirapScenario *scenario);

/**
 * Run the density-matrix simulation of a scenario.
 *
 * # Safety
 * `scenario` must come from this library and `out` must be a valid pointer.
 */
enum CstirapStatus cstirap_simulate(const struct CstirapScenario *scenario,
                                    struct CstirapRun **out);

/**
 * Final population of the target level.
 *
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum CstirapStatus cstirap_run_efficiency(const struct CstirapRun *run, double *out);

/**
 * Number of output time points.
 *
 * # Safety
 * `run` must be null or come from this library.
 */
size_t cstirap_run_time_points(const struct CstirapRun *run);

/**
 * Number of levels.
 *
 * # Safety
 * `run` must be null or come from this library.
 */
size_t cstirap_run_levels(const struct CstirapRun *run);

/**
 * Copy the output times (s) into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `run` must come from this library and `buf` must hold `len` doubles.
 */
enum CstirapStatus cstirap_run_times(const struct CstirapRun *run, double *buf, size_t len);

/**
 * Copy the population of `level` at every output time into `buf`.
 *
 * # Safety
 * `run` must come from this library and `buf` must hold `len` doubles.
 */
enum CstirapStatus cstirap_run_population(const struct CstirapRun *run,
                                          size_t level,
                                          double *buf,
                                          size_t len);

/**
 * The transfer report as JSON. Release the string with [`cstirap_string_free`].
 *
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum CstirapStatus cstirap_run_report_json(const struct CstirapRun *run, char **out);

/**
 * # Safety
 * `s` must be null or come from [`cstirap_run_report_json`].
 */
void cstirap_string_free(char *s);

/**
 * # Safety
 * `run` must be null or come from this library, and not be used afterwards.
 */
void cstirap_run_free(struct CstirapRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSTIRAP_H */
