#ifndef MTWIFI_H
#define MTWIFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MtwStatus {
  MTW_STATUS_OK = 0,
  MTW_STATUS_NULL_POINTER = 1,
  MTW_STATUS_INVALID_UTF8 = 2,
  MTW_STATUS_IO = 3,
  MTW_STATUS_PARSE = 4,
  MTW_STATUS_VALIDATION = 5,
  MTW_STATUS_SHAPE = 6,
  MTW_STATUS_DOMAIN = 7,
  MTW_STATUS_CHECKPOINT = 8,
  MTW_STATUS_CONFIG = 9,
  MTW_STATUS_DIVERGENCE = 10,
  MTW_STATUS_BUFFER_TOO_SMALL = 11,
  MTW_STATUS_PANIC = 12,
} MtwStatus;

/**
 * Role of a dataset being loaded.
 */
typedef enum MtwRole {
  MTW_ROLE_LABELED = 0,
  MTW_ROLE_UNLABELED = 1,
  MTW_ROLE_TEST = 2,
} MtwRole;

/**
 * Opaque fingerprint dataset.
 */
typedef struct MtwDataset MtwDataset;

/**
 * Opaque trained model (weights, AP mask and coordinate scaler).
 */
typedef struct MtwModel MtwModel;

/**
 * One decoded prediction; coordinates in the dataset's meter frame.
 */
typedef struct MtwPrediction {
  uint8_t building;
  uint8_t floor;
  double longitude;
  double latitude;
} MtwPrediction;

/**
 * Aggregate EvAAL metrics.
 */
typedef struct MtwEvalSummary {
  double evaal_error;
  double gamma;
  double b_miss;
  double f_miss;
  double mean_euc;
  size_t n;
} MtwEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *mtw_last_error(void);

/**
 * Loads a UJIIndoorLoc-format CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MtwStatus mtw_dataset_load(const char *path, enum MtwRole role, struct MtwDataset **out);

/**
 * Number of records, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle from [`mtw_dataset_load`].
 */
size_t mtw_dataset_len(const struct MtwDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void mtw_dataset_free(struct MtwDataset *dataset);

/**
 * Loads a checkpoint written by the `mtwifi` trainer.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MtwStatus mtw_model_load(const char *path, struct MtwModel **out);

/**
 * Number of selected APs the model consumes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle from [`mtw_model_load`].
 */
size_t mtw_model_input_width(const struct MtwModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void mtw_model_free(struct MtwModel *model);

/**
 * Predicts every record of `dataset` into `out[0..capacity]`.
 *
 * `out_len` always receives the record count; when `capacity` is smaller the
 * call returns `BufferTooSmall` and writes nothing, so callers can size the
 * buffer with a first call using `capacity = 0` and `out = NULL`.
 *
 * # Safety
 * Handles must be live; `out` must point to `capacity` writable elements.
 */
enum MtwStatus mtw_model_predict(const struct MtwModel *model,
                                 const struct MtwDataset *dataset,
                                 struct MtwPrediction *out,
                                 size_t capacity,
                                 size_t *out_len);

/**
 * EvAAL report of `model` on a labeled or test dataset.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum MtwStatus mtw_model_evaluate(const struct MtwModel *model,
                                  const struct MtwDataset *dataset,
                                  struct MtwEvalSummary *out);

/**
 * Relative improvement in percent of `error_prop` over `error_ref`.
 *
 * # Safety
 * `out_eta` must be a valid pointer.
 */
enum MtwStatus mtw_improvement(double error_ref, double error_prop, double *out_eta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTWIFI_H */
