#ifndef EEGBENCH_H
#define EEGBENCH_H

/* Generated by cbindgen from eegbench-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Operation status. Matches the CLI exit-code convention where one
 exists (config 2, audit 3, io 4).
 */
typedef enum EbStatus {
  EB_STATUS_OK = 0,
  EB_STATUS_ERROR = 1,
  EB_STATUS_CONFIG = 2,
  EB_STATUS_AUDIT = 3,
  EB_STATUS_IO = 4,
  EB_STATUS_NULL_POINTER = 5,
  EB_STATUS_INVALID_UTF8 = 6,
} EbStatus;

/*
 Opaque epoch-set handle.
 */
typedef struct EbEpochs EbEpochs;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Crate version as a static string.
 */
const char *eb_version(void);

/*
 Message of the most recent error on this thread (empty if none). The
 pointer stays valid until the next failing call on the same thread.
 */
const char *eb_last_error(void);

/*
 Generate a synthetic epoch set from the `[synth]` section of a TOML
 config document. On success writes a handle into `out`.

 # Safety
 `config_toml` must be a valid NUL-terminated string and `out` a valid
 pointer to writable storage.
 */
enum EbStatus eb_synth_generate(const char *config_toml, struct EbEpochs **out);

/*
 Load an epoch archive written by the engine (`<prefix>.json` +
 `<prefix>.f32`).

 # Safety
 Pointer contracts as in [`eb_synth_generate`].
 */
enum EbStatus eb_epochs_load(const char *prefix, struct EbEpochs **out);

/*
 Save an epoch set as an archive under `prefix`.

 # Safety
 `handle` must come from this library; `prefix` must be a valid string.
 */
enum EbStatus eb_epochs_save(const struct EbEpochs *handle, const char *prefix);

/*
 Trial count of a handle (0 for null).
 */
uintptr_t eb_epochs_trials(const struct EbEpochs *handle);

/*
 Channel count of a handle (0 for null).
 */
uintptr_t eb_epochs_channels(const struct EbEpochs *handle);

/*
 Samples per epoch of a handle (0 for null).
 */
uintptr_t eb_epochs_samples(const struct EbEpochs *handle);

/*
 Copy one trial's samples (row-major channel × sample) into `buffer`.
 `len` must be at least channels × samples.

 # Safety
 `buffer` must point to `len` writable doubles.
 */
enum EbStatus eb_epochs_copy_trial(const struct EbEpochs *handle,
                                   uintptr_t trial,
                                   double *buffer,
                                   uintptr_t len);

/*
 Class label of one trial; returns usize::MAX on error.
 */
uintptr_t eb_epochs_label(const struct EbEpochs *handle, uintptr_t trial);

/*
 Release a handle obtained from this library. Null is a no-op.

 # Safety
 `handle` must be a pointer previously returned by this library and not
 freed before.
 */
void eb_epochs_free(struct EbEpochs *handle);

/*
 Run the full benchmark described by a TOML config document, writing
 result files under `out_dir`. Blocking; returns when the run is done.

 # Safety
 Both arguments must be valid NUL-terminated strings.
 */
enum EbStatus eb_run(const char *config_toml, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EEGBENCH_H */
