#ifndef AVFRIC_H
#define AVFRIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum avf_status {
  AVF_STATUS_OK = 0,
  AVF_STATUS_NULL_POINTER = 1,
  AVF_STATUS_IO = 2,
  AVF_STATUS_PARSE = 3,
  AVF_STATUS_VALIDATION = 4,
  AVF_STATUS_NUMERIC = 5,
  AVF_STATUS_OUT_OF_GRID = 6,
  AVF_STATUS_INVALID_ARGUMENT = 7,
  AVF_STATUS_PANIC = 8,
} avf_status;

/**
 * Validated scenario.
 */
typedef struct avf_scenario_t avf_scenario_t;

/**
 * Integrated trajectory.
 */
typedef struct avf_trajectory_t avf_trajectory_t;

/**
 * Tabulated value function.
 */
typedef struct avf_value_table_t avf_value_table_t;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null after a success. The
 * pointer stays valid until the next call on the same thread.
 */
const char *avf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *avf_version(void);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum avf_status avf_scenario_load(const char *path, struct avf_scenario_t **out);

/**
 * Parses and validates a scenario from its text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum avf_status avf_scenario_parse(const char *text, struct avf_scenario_t **out);

/**
 * State dimension of a scenario, or 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live scenario handle.
 */
size_t avf_scenario_state_dim(const struct avf_scenario_t *s);

/**
 * Control dimension of a scenario, or 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live scenario handle.
 */
size_t avf_scenario_control_dim(const struct avf_scenario_t *s);

/**
 * # Safety
 * `s` must be null or a handle from this library not freed before.
 */
void avf_scenario_free(struct avf_scenario_t *s);

/**
 * Integrates from `(t0, x0)` to `t_end` under a piecewise-constant control.
 * `x0` must lie in the state box. `controls` holds `n_pieces` rows of the
 * control dimension, row `i` applied from `switch_times[i]` on, and
 * `switch_times[0]` must equal `t0`.
 *
 * # Safety
 * Array arguments must hold the stated number of elements; `out` must be
 * writable.
 */
enum avf_status avf_simulate(const struct avf_scenario_t *s,
                             double t0,
                             const double *x0,
                             size_t x0_len,
                             const double *switch_times,
                             const double *controls,
                             size_t n_pieces,
                             double t_end,
                             double h,
                             struct avf_trajectory_t **out);

/**
 * Number of nodes in a trajectory, or 0 for a null handle.
 *
 * # Safety
 * `tr` must be null or a live trajectory handle.
 */
size_t avf_trajectory_len(const struct avf_trajectory_t *tr);

/**
 * Time and state of node `i`; `x` receives `x_len` entries, which must equal
 * the state dimension.
 *
 * # Safety
 * `t` must be writable; `x` must hold `x_len` elements.
 */
enum avf_status avf_trajectory_node(const struct avf_trajectory_t *tr,
                                    size_t i,
                                    double *t,
                                    double *x,
                                    size_t x_len);

/**
 * # Safety
 * `tr` must be null or a handle from this library not freed before.
 */
void avf_trajectory_free(struct avf_trajectory_t *tr);

/**
 * Solves the value function on the scenario grid. Nonpositive `h` or
 * `delta` keeps the scenario's own setting.
 *
 * # Safety
 * `s` must be a live scenario handle; `out` must be writable.
 */
enum avf_status avf_value_solve(const struct avf_scenario_t *s,
                                double h,
                                double delta,
                                struct avf_value_table_t **out);

/**
 * Interpolated value at `(t, x)`. Unreachable points yield `+inf` with
 * status OK; points off the grid yield `AVF_STATUS_OUT_OF_GRID`.
 *
 * # Safety
 * `x` must hold `x_len` elements; `value` must be writable.
 */
enum avf_status avf_value_query(const struct avf_value_table_t *vt,
                                double t,
                                const double *x,
                                size_t x_len,
                                double *value);

/**
 * # Safety
 * `vt` must be null or a handle from this library not freed before.
 */
void avf_value_table_free(struct avf_value_table_t *vt);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVFRIC_H */
