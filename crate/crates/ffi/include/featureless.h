#ifndef FEATURELESS_H
#define FEATURELESS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FtlStatus {
  FTL_STATUS_OK = 0,
  FTL_STATUS_NULL_POINTER = 1,
  FTL_STATUS_INVALID_ARGUMENT = 2,
  FTL_STATUS_IO = 3,
  FTL_STATUS_FORMAT = 4,
  FTL_STATUS_SHAPE = 5,
  FTL_STATUS_BUFFER_TOO_SMALL = 6,
  FTL_STATUS_PANIC = 7,
} FtlStatus;

/**
 * A loaded dataset file.
 */
typedef struct FtlDataset FtlDataset;

/**
 * A loaded checkpoint.
 */
typedef struct FtlModel FtlModel;

/**
 * Header offsets of one frame; absent layers are -1.
 */
typedef struct FtlDissection {
  int64_t cap_len;
  int64_t eth_end;
  int64_t ip_start;
  int64_t ip_end;
  int64_t transport_start;
  int64_t payload_start;
  /**
   * 4, 6, or 0 for non-IP.
   */
  uint8_t ip_version;
  /**
   * IP protocol number, or -1.
   */
  int16_t proto;
} FtlDissection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *ftl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ftl_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FtlStatus ftl_model_load(const char *path, struct FtlModel **out);

/**
 * # Safety
 * `model` must come from `ftl_model_load` and not be used afterwards.
 */
void ftl_model_free(struct FtlModel *model);

/**
 * Sample length the model expects, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ftl_model_input_len(const struct FtlModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ftl_model_class_count(const struct FtlModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
uint32_t ftl_model_best_epoch(const struct FtlModel *model);

/**
 * Classifies one raw sample of exactly `ftl_model_input_len` bytes.
 * `probs` may be null; otherwise it receives `min(probs_len, classes)`
 * output values.
 *
 * # Safety
 * Pointers must be valid for the given lengths.
 */
enum FtlStatus ftl_model_predict(const struct FtlModel *model,
                                 const uint8_t *sample,
                                 size_t sample_len,
                                 uint32_t *out_class,
                                 float *probs,
                                 size_t probs_len);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FtlStatus ftl_dataset_load(const char *path, struct FtlDataset **out);

/**
 * # Safety
 * `ds` must come from `ftl_dataset_load` and not be used afterwards.
 */
void ftl_dataset_free(struct FtlDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t ftl_dataset_len(const struct FtlDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t ftl_dataset_sample_len(const struct FtlDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t ftl_dataset_class_count(const struct FtlDataset *ds);

/**
 * Copies sample `index` into `out` (capacity `cap`, at least the sample
 * length) and its label into `out_label`.
 *
 * # Safety
 * Pointers must be valid; `out` must hold `cap` bytes.
 */
enum FtlStatus ftl_dataset_sample(const struct FtlDataset *ds,
                                  size_t index,
                                  uint16_t *out_label,
                                  uint8_t *out,
                                  size_t cap);

/**
 * Class name `class` copied as a NUL-terminated string into `out`.
 *
 * # Safety
 * `out` must hold `cap` bytes.
 */
enum FtlStatus ftl_dataset_class_name(const struct FtlDataset *ds,
                                      size_t class_,
                                      char *out,
                                      size_t cap);

/**
 * # Safety
 * `data` must hold `len` bytes and `out` be a valid pointer.
 */
enum FtlStatus ftl_dissect(const uint8_t *data, size_t len, struct FtlDissection *out);

/**
 * Frame bytes left after applying header category `category`
 * (0 all headers, 1 only Ethernet, 2 without Ethernet, 3 no headers).
 * `out_len` always receives the required length; a short buffer returns
 * `BufferTooSmall` without writing.
 *
 * # Safety
 * `data` must hold `len` bytes and `out` must hold `cap` bytes.
 */
enum FtlStatus ftl_strip_headers(const uint8_t *data,
                                 size_t len,
                                 uint8_t category,
                                 uint8_t *out,
                                 size_t cap,
                                 size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEATURELESS_H */
