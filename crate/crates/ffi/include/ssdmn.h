#ifndef SSDMN_H
#define SSDMN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum SsdmnStatus {
  SSDMN_STATUS_OK = 0,
  SSDMN_STATUS_NULL_POINTER = 1,
  SSDMN_STATUS_INVALID_UTF8 = 2,
  SSDMN_STATUS_IO = 3,
  SSDMN_STATUS_PARSE = 4,
  SSDMN_STATUS_CHECKPOINT = 5,
  SSDMN_STATUS_CONFIG = 6,
  SSDMN_STATUS_DIMENSION = 7,
  SSDMN_STATUS_UNKNOWN_LABEL = 8,
  SSDMN_STATUS_INTERNAL = 9,
} SsdmnStatus;

// A loaded model. Opaque to C.
typedef struct SsdmnModel SsdmnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Load a checkpoint file. On success `*out` owns a model to be released
// with [`ssdmn_model_free`].
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SsdmnStatus ssdmn_model_load(const char *path, struct SsdmnModel **out);

// Release a model. Null is ignored.
//
// # Safety
// `model` must come from [`ssdmn_model_load`] and not be used afterwards.
void ssdmn_model_free(struct SsdmnModel *model);

// JSON description of a model: variant, dimensions, slots, labels.
//
// # Safety
// `model` must be a live model; `out_json` must be writable.
enum SsdmnStatus ssdmn_model_info(const struct SsdmnModel *model, char **out_json);

// Tag every turn of one dialog given as a JSON object
// (`{id, domain, turns: [{sys_slots, sys_text, user}]}`). The result is the
// same dialog with `labels` filled in; with `dump_attention` non-zero each
// turn also carries its attention weights.
//
// # Safety
// `model` must be a live model, `dialog_json` NUL-terminated, `out_json` writable.
enum SsdmnStatus ssdmn_tag_dialog(const struct SsdmnModel *model,
                                  const char *dialog_json,
                                  int dump_attention,
                                  char **out_json);

// Chunk precision, recall and F1 (percent) of aligned label sequences, each
// given as a JSON array of arrays of label strings.
//
// # Safety
// String arguments must be NUL-terminated; output pointers writable.
enum SsdmnStatus ssdmn_chunk_f1(const char *gold_json,
                                const char *pred_json,
                                double *out_precision,
                                double *out_recall,
                                double *out_f1);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void ssdmn_string_free(char *s);

// Message of the last failed call on this thread, empty after a success.
// Valid until the next call into the library on this thread.
const char *ssdmn_last_error(void);

// Library version, a static string.
const char *ssdmn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSDMN_H */
