#ifndef BRT_H
#define BRT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every exported function.
 */
typedef enum BrtStatus {
  BRT_STATUS_OK = 0,
  BRT_STATUS_NULL_POINTER = 1,
  BRT_STATUS_INVALID_ARGUMENT = 2,
  BRT_STATUS_IO = 3,
  BRT_STATUS_SHAPE = 4,
  BRT_STATUS_DEGENERATE = 5,
  BRT_STATUS_NOT_FITTED = 6,
  BRT_STATUS_NON_FINITE = 7,
  BRT_STATUS_BUFFER_TOO_SMALL = 8,
  BRT_STATUS_INTERNAL = 9,
} BrtStatus;

/**
 * A trained market generator together with the dataset it conditions on.
 */
typedef struct BrtGenerator BrtGenerator;

/**
 * A trained trader: average policy, best-response network and belief network.
 */
typedef struct BrtPolicy BrtPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated, truncated to fit).
 * Returns the full message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t brt_last_error_message(char *buf, size_t len);

/**
 * Annualised return of a net-value curve spanning `trading_days` days.
 *
 * # Safety
 * `net_values` must point to `n` doubles; `out_value` must be writable.
 */
enum BrtStatus brt_arr(const double *net_values, size_t n, size_t trading_days, double *out_value);

/**
 * Mean over standard deviation of daily returns, not annualised.
 *
 * # Safety
 * `returns` must point to `n` doubles; `out_value` must be writable.
 */
enum BrtStatus brt_sharpe(const double *returns, size_t n, double *out_value);

/**
 * Largest peak-to-trough fall of a net-value curve, as a positive fraction.
 *
 * # Safety
 * `net_values` must point to `n` doubles; `out_value` must be writable.
 */
enum BrtStatus brt_max_drawdown(const double *net_values, size_t n, double *out_value);

/**
 * One-sided signed-rank test that paired differences tend to be positive.
 * `out_w_plus` may be null.
 *
 * # Safety
 * `diffs` must point to `n` doubles; `out_p` must be writable.
 */
enum BrtStatus brt_wilcoxon(const double *diffs, size_t n, double *out_p, double *out_w_plus);

/**
 * Load a generator checkpoint directory and the dataset JSON written by ingestion.
 *
 * # Safety
 * Paths must be NUL-terminated; `out_handle` must be writable. Free the handle with
 * `brt_generator_free`.
 */
enum BrtStatus brt_generator_load(const char *checkpoint_dir,
                                  const char *dataset_path,
                                  struct BrtGenerator **out_handle);

/**
 * Window length, series per day (instruments times features) and number of days.
 *
 * # Safety
 * `handle` must come from `brt_generator_load`; out-pointers must be writable.
 */
enum BrtStatus brt_generator_dims(const struct BrtGenerator *handle,
                                  size_t *out_window,
                                  size_t *out_series,
                                  size_t *out_days);

/**
 * Sample the window of days `[end_day - L + 1, end_day]` conditioned on the real history and
 * macro data before it. Writes `L x series` values in raw feature units, row-major by day.
 *
 * # Safety
 * `handle` must come from `brt_generator_load`; `out_values` must point to `out_len` doubles.
 */
enum BrtStatus brt_generator_sample(const struct BrtGenerator *handle,
                                    size_t end_day,
                                    uint64_t seed,
                                    double *out_values,
                                    size_t out_len);

/**
 * # Safety
 * `handle` must be null or come from `brt_generator_load`, and not be used afterwards.
 */
void brt_generator_free(struct BrtGenerator *handle);

/**
 * Load a trader checkpoint directory (the one holding `trader/` and `qbn/`).
 *
 * # Safety
 * `dir` must be NUL-terminated; `out_handle` must be writable. Free with `brt_policy_free`.
 */
enum BrtStatus brt_policy_load(const char *dir, struct BrtPolicy **out_handle);

/**
 * Observation sizes the policy expects: flat features, per-day sequence width, sequence length.
 *
 * # Safety
 * `handle` must come from `brt_policy_load`; out-pointers must be writable.
 */
enum BrtStatus brt_policy_layout(const struct BrtPolicy *handle,
                                 size_t *out_flat,
                                 size_t *out_seq_dim,
                                 size_t *out_seq_len);

/**
 * Greedy action for one observation. `sequence` is `seq_len x seq_dim`, oldest day first.
 * `best_response` selects the best-response network instead of the average policy.
 * The action is written as 0 = long, 1 = short, 2 = flat.
 *
 * # Safety
 * `handle` must come from `brt_policy_load`; arrays must hold the lengths given;
 * `out_action` must be writable.
 */
enum BrtStatus brt_policy_act(const struct BrtPolicy *handle,
                              const double *flat,
                              size_t flat_len,
                              const double *sequence,
                              size_t sequence_len,
                              bool best_response,
                              uint32_t *out_action);

/**
 * # Safety
 * `handle` must be null or come from `brt_policy_load`, and not be used afterwards.
 */
void brt_policy_free(struct BrtPolicy *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRT_H */
