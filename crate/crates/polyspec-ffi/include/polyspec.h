/* C interface for the polyspec decoding laboratory. */

#ifndef POLYSPEC_H
#define POLYSPEC_H

/* Generated by cbindgen from the polyspec-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call through the C interface.
 */
typedef enum {
  /**
   * The call succeeded.
   */
  POLYSPEC_STATUS_OK = 0,
  /**
   * An argument or configuration was rejected; see
   * `polyspec_last_error`.
   */
  POLYSPEC_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The call failed for an internal reason; see
   * `polyspec_last_error`.
   */
  POLYSPEC_STATUS_RUNTIME_ERROR = 2,
} PolyspecStatus;

/**
 * A loaded experiment: models, chain layout, decode policy, and
 * optional cost profile. Opaque to C.
 */
typedef struct PolyspecEngine PolyspecEngine;

/**
 * Inputs of the model-insertion analysis. Mirrors the JSON profile
 * accepted by the command line: times are per forward pass in any
 * consistent unit, acceptance lengths are mean tokens per event, and
 * `beta` is the drafting overhead ratio.
 */
typedef struct {
  /**
   * Per-pass time of the current verifier.
   */
  double t_current;
  /**
   * Per-pass time of the candidate model.
   */
  double t_new;
  /**
   * Per-pass time of the model below the insertion point.
   */
  double t_next;
  /**
   * Mean accepted tokens when the current verifier checks the
   * drafter directly.
   */
  double l_current;
  /**
   * Mean accepted tokens when the current verifier checks the
   * candidate.
   */
  double l_current_new;
  /**
   * Mean accepted tokens when the candidate checks the drafter.
   */
  double l_new;
  /**
   * Drafting overhead ratio of the deepest stage.
   */
  double beta;
} PolyspecInsertionQuery;

/**
 * One insertion condition: a measured ratio against its threshold.
 * The condition favors insertion when `margin` is negative.
 */
typedef struct {
  double value;
  double threshold;
  double margin;
} PolyspecConditionReport;

/**
 * Outcome of the insertion analysis, including predicted per-token
 * times and speedups for the chain with and without the candidate.
 */
typedef struct {
  PolyspecConditionReport condition1;
  PolyspecConditionReport condition2;
  /**
   * True when at least one condition favors inserting the
   * candidate.
   */
  bool insert;
  double two_chain_time_per_token;
  double three_chain_time_per_token;
  double two_chain_speedup;
  double three_chain_speedup;
} PolyspecPlanReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failed call on this thread, or null when
 * no call has failed yet. Valid until the next failing call on the
 * same thread; do not free it.
 */
const char *polyspec_last_error(void);

/**
 * Build an engine from an experiment configuration in JSON (the same
 * schema the command-line `decode` subcommand reads). Relative corpus
 * paths inside the configuration resolve against the process working
 * directory. On success `*out_engine` owns the engine.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string valid for reads and
 * `out_engine` must be valid for writes.
 */
PolyspecStatus polyspec_engine_new(const char *config_json, PolyspecEngine **out_engine);

/**
 * Release an engine created by [`polyspec_engine_new`]. A null handle
 * is a no-op.
 *
 * # Safety
 * `engine` must be null or a pointer previously returned by
 * [`polyspec_engine_new`] that has not been freed.
 */
void polyspec_engine_free(PolyspecEngine *engine);

/**
 * Decode `n_tokens` tokens at `seed` and return the trace report as
 * pretty-printed JSON in `*out_trace_json`. The prompt comes from the
 * configuration's run block (empty when none was given). When the
 * configuration carries a cost profile the report includes the
 * simulated time and speedup. Free the string with
 * [`polyspec_string_free`].
 *
 * # Safety
 * `engine` must be a live engine handle and `out_trace_json` must be
 * valid for writes.
 */
PolyspecStatus polyspec_engine_decode(const PolyspecEngine *engine,
                                      uint64_t n_tokens,
                                      uint64_t seed,
                                      char **out_trace_json);

/**
 * Release a string returned by this library. A null pointer is a
 * no-op.
 *
 * # Safety
 * `s` must be null or a string previously returned through one of
 * this library's out-parameters that has not been freed.
 */
void polyspec_string_free(char *s);

/**
 * Evaluate whether a candidate model is worth inserting between an
 * existing verifier and its drafter, writing the full report to
 * `*out_report`.
 *
 * # Safety
 * `query` must be valid for reads and `out_report` valid for writes.
 */
PolyspecStatus polyspec_insertion_gain(const PolyspecInsertionQuery *query,
                                       PolyspecPlanReport *out_report);

/**
 * Mean verified tokens per event when each position stops with
 * probability `p` and a block spans at most `n` tokens. `p` must lie
 * in (0, 1] and `n` must be at least 1.
 *
 * # Safety
 * `out_mean` must be valid for writes.
 */
PolyspecStatus polyspec_expected_acceptance(double p, uint64_t n, double *out_mean);

/**
 * Variance of the verified tokens per event under the same law as
 * [`polyspec_expected_acceptance`], computed by exact summation.
 *
 * # Safety
 * `out_variance` must be valid for writes.
 */
PolyspecStatus polyspec_acceptance_variance(double p, uint64_t n, double *out_variance);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* POLYSPEC_H */
