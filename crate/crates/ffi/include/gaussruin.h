/* C ABI for the gaussruin library.
 *
 * Models are opaque handles created from the JSON wire format and freed with
 * gr_model_free. Every fallible call returns a GrStatus; on failure
 * gr_last_error_message yields a thread-local description. Structured results
 * come back either as UTF-8 JSON strings (free with gr_string_free) or as
 * flat structs.
 *
 * Pre-generated from the Rust sources; regenerate with
 *   cbindgen --config cbindgen.toml --crate gaussruin-ffi --output include/gaussruin.h
 */

#ifndef GAUSSRUIN_H
#define GAUSSRUIN_H

#include <stdbool.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every fallible entry point. */
typedef enum GrStatus {
  GR_STATUS_OK = 0,
  GR_STATUS_NULL_POINTER = 1,
  GR_STATUS_INVALID_ARGUMENT = 2,
  GR_STATUS_PARSE_ERROR = 3,
  GR_STATUS_ASSUMPTION_VIOLATED = 4,
  GR_STATUS_NUMERIC_ERROR = 5,
  GR_STATUS_INTERNAL_PANIC = 6,
} GrStatus;

/* Opaque model handle. */
typedef struct GrModel GrModel;

/* Monte Carlo configuration. refine_points = 0 disables endpoint
 * refinement; ess in the estimate is NaN for crude runs. */
typedef struct GrMcConfig {
  uint64_t n_samples;
  uint64_t grid_points;
  uint64_t seed;
  uint64_t batches;
  bool importance_sampling;
  double confidence_level;
  uint64_t refine_points;
  double refine_l;
} GrMcConfig;

/* Flat ruin-probability estimate. */
typedef struct GrMcEstimate {
  double p_hat;
  double std_err;
  double ci_lo;
  double ci_hi;
  uint64_t n;
  uint64_t m;
  uint64_t hits;
  double ess;
  bool importance;
  bool degenerate;
} GrMcEstimate;

/* Library version as a static NUL-terminated string. */
const char *gr_version(void);

/* Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread. */
const char *gr_last_error_message(void);

/* Free a string returned by any *_json entry point. */
void gr_string_free(char *s);

/* Parse a model from its JSON wire format. */
GrStatus gr_model_from_json(const char *json, GrModel **out);

/* Free a model handle. */
void gr_model_free(GrModel *model);

/* Model dimension, or 0 on a null handle. */
uint64_t gr_model_dim(const GrModel *model);

/* Assumption report as JSON ({"exact":{...},"bounds":{...}}). */
GrStatus gr_model_validate_json(const GrModel *model, char **out_json);

/* Quadratic-programming solution at time t (t <= 0 means the horizon) as
 * JSON {a_tilde, lambda, I, J, U, D} with 0-based index sets. */
GrStatus gr_qp_solve_json(const GrModel *model, double t, char **out_json);

/* Full asymptotic report at level u as JSON. */
GrStatus gr_asymptotics_json(const GrModel *model, double u, char **out_json);

/* The correction constant C >= 1. */
GrStatus gr_constant_c(const GrModel *model, double *out);

/* Finite-window constant C(L). */
GrStatus gr_constant_c_of_l(const GrModel *model, double l, double *out);

/* Uniform bounds at the level vector u*a. */
GrStatus gr_bounds(const GrModel *model, double u, double *out_lower, double *out_upper);

/* Monte Carlo estimate of the ruin probability at level u. */
GrStatus gr_estimate_ruin(const GrModel *model,
                          double u,
                          const GrMcConfig *cfg,
                          GrMcEstimate *out);

#ifdef __cplusplus
}
#endif

#endif /* GAUSSRUIN_H */
