#ifndef SUPERCOOL_H
#define SUPERCOOL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  SC_STATUS_INVALID_CONFIG = 3,
  SC_STATUS_INVALID_INPUT = 4,
  SC_STATUS_IO = 5,
  SC_STATUS_BUFFER_TOO_SMALL = 6,
  SC_STATUS_INCONCLUSIVE = 7,
  SC_STATUS_PANIC = 8,
} ScStatus;

/**
 * Opaque solver configuration.
 */
typedef struct ScConfig ScConfig;

/**
 * Opaque result of a solver run.
 */
typedef struct ScRun ScRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length including the NUL,
 * or 0 if there is no error.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t sc_last_error_message(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sc_version(void);

/**
 * Parses and validates a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum ScStatus sc_config_from_toml(const char *toml, struct ScConfig **out);

/**
 * Applies a `key=value` override (dotted keys, TOML values) and revalidates.
 * The handle is unchanged on failure.
 *
 * # Safety
 * `config` must come from `sc_config_from_toml`; `assignment` must be NUL-terminated.
 */
enum ScStatus sc_config_set(struct ScConfig *config, const char *assignment);

/**
 * # Safety
 * `config` must be null or come from `sc_config_from_toml`, and not be used afterwards.
 */
void sc_config_free(struct ScConfig *config);

/**
 * Runs the particle system.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum ScStatus sc_particle_run(const struct ScConfig *config, struct ScRun **out);

/**
 * Runs the finite-difference solver.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum ScStatus sc_pde_run(const struct ScConfig *config, struct ScRun **out);

/**
 * Number of recorded frontier points.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ScStatus sc_run_len(const struct ScRun *run, size_t *out);

/**
 * Copies times and frontier values into caller buffers of length `cap`.
 * Returns `BufferTooSmall` (and copies nothing) if `cap < sc_run_len`.
 *
 * # Safety
 * `times` and `values` must point to `cap` writable doubles.
 */
enum ScStatus sc_run_frontier(const struct ScRun *run, double *times, double *values, size_t cap);

/**
 * Number of detected jumps.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ScStatus sc_run_jump_count(const struct ScRun *run, size_t *out);

/**
 * Time and size of jump `index`.
 *
 * # Safety
 * `run` must be a live handle; `time` and `size` must be writable.
 */
enum ScStatus sc_run_jump(const struct ScRun *run, size_t index, double *time, double *size);

/**
 * Largest conservation residual seen during the run.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ScStatus sc_run_residual(const struct ScRun *run, double *out);

/**
 * # Safety
 * `run` must be null or a live handle, and not be used afterwards.
 */
void sc_run_free(struct ScRun *run);

/**
 * Cascade on `m` sorted positions: frontier increment and absorbed count.
 *
 * # Safety
 * `positions` must point to `m` doubles (may be null when `m == 0`);
 * `increment` and `absorbed` must be writable.
 */
enum ScStatus sc_cascade_scan(const double *positions,
                              size_t m,
                              double alpha,
                              double particle_mass,
                              double *increment,
                              size_t *absorbed);

/**
 * Density at `y` of Brownian motion from `x0` killed at zero, at time `t`.
 *
 * # Safety
 * `out` must be writable.
 */
enum ScStatus sc_reflection_density(double t, double x0, double y, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUPERCOOL_H */
