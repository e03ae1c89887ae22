#ifndef VAPBC_H
#define VAPBC_H

/* Generated by cbindgen from vapbc-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API function.
 */
typedef enum VapbcStatus {
  VAPBC_STATUS_OK = 0,
  /**
   * File could not be read or written.
   */
  VAPBC_STATUS_IO = 1,
  /**
   * The checkpoint is malformed or of an unsupported version.
   */
  VAPBC_STATUS_BAD_CHECKPOINT = 2,
  /**
   * An argument was null, out of range, or inconsistent.
   */
  VAPBC_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The session was closed.
   */
  VAPBC_STATUS_SESSION_CLOSED = 4,
  /**
   * Unexpected internal failure (a panic was caught at the boundary).
   */
  VAPBC_STATUS_INTERNAL = 5,
} VapbcStatus;

/**
 * Opaque model handle (a loaded checkpoint).
 */
typedef struct VapbcModel VapbcModel;

/**
 * Opaque streaming session handle.
 */
typedef struct VapbcSession VapbcSession;

/**
 * One emitted prediction frame. Fields that do not exist for the loaded
 * checkpoint (for example `p_continuer` on a binary-task model) are -1.
 */
typedef struct VapbcPrediction {
  /**
   * Frame start time in seconds.
   */
  double t;
  /**
   * Backchannel probability.
   */
  double p_bc;
  double p_continuer;
  double p_assessment;
  /**
   * Current voice-activity probability per channel.
   */
  double p_vad[2];
  /**
   * Backchannel score read directly off the projection distribution.
   */
  double zero_shot;
  /**
   * Most likely future-activity state (0-255), or -1.
   */
  int32_t vap_top_state;
} VapbcPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a checkpoint from `path` into a new model handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out_model` a valid
 * pointer; the returned handle must be released with [`vapbc_model_free`].
 */
enum VapbcStatus vapbc_model_load(const char *path, struct VapbcModel **out_model);

/**
 * Release a model handle. Safe to call with null.
 *
 * # Safety
 * `model` must come from [`vapbc_model_load`] and not be used afterwards.
 */
void vapbc_model_free(struct VapbcModel *model);

/**
 * Model frame rate in Hz (0 for a null handle).
 *
 * # Safety
 * `model` must be a live handle from [`vapbc_model_load`].
 */
uint32_t vapbc_model_frame_rate(const struct VapbcModel *model);

/**
 * Number of backchannel classes of the loaded head (0 = none, 2 = timing,
 * 3 = type). Returns 0 for a null handle.
 *
 * # Safety
 * `model` must be a live handle from [`vapbc_model_load`].
 */
uint32_t vapbc_model_bc_classes(const struct VapbcModel *model);

/**
 * Open a streaming session over `model` with a trailing context window of
 * `context_secs` seconds. `listener` is the channel whose backchannels are
 * predicted (0 or 1).
 *
 * # Safety
 * `model` must be a live handle and `out_session` a valid pointer; release
 * the session with [`vapbc_session_free`].
 */
enum VapbcStatus vapbc_session_new(const struct VapbcModel *model,
                                   double context_secs,
                                   uint32_t listener,
                                   struct VapbcSession **out_session);

/**
 * Release a session handle. Safe to call with null.
 *
 * # Safety
 * `session` must come from [`vapbc_session_new`] and not be used afterwards.
 */
void vapbc_session_free(struct VapbcSession *session);

/**
 * Clear all session state; the next pushed sample restarts at t = 0.
 *
 * # Safety
 * `session` must be a live handle from [`vapbc_session_new`].
 */
enum VapbcStatus vapbc_session_reset(struct VapbcSession *session);

/**
 * Push `len` samples per channel (16 kHz, [-1, 1]); completed frames are
 * queued for [`vapbc_session_poll`]. Chunks of any size are accepted.
 *
 * # Safety
 * `pcm0` and `pcm1` must point to at least `len` readable floats, and
 * `session` must be a live handle.
 */
enum VapbcStatus vapbc_session_push(struct VapbcSession *session,
                                    const float *pcm0,
                                    const float *pcm1,
                                    size_t len);

/**
 * Drain up to `max_frames` queued predictions into `out_frames`; the number
 * written is stored in `out_count`.
 *
 * # Safety
 * `out_frames` must point to at least `max_frames` writable slots and
 * `out_count` must be a valid pointer.
 */
enum VapbcStatus vapbc_session_poll(struct VapbcSession *session,
                                    struct VapbcPrediction *out_frames,
                                    size_t max_frames,
                                    size_t *out_count);

/**
 * Number of predictions waiting in the session queue.
 *
 * # Safety
 * `session` must be a live handle from [`vapbc_session_new`].
 */
size_t vapbc_session_pending(const struct VapbcSession *session);

/**
 * Copy the thread-local message for the last failure into `buf` (always
 * NUL-terminated when `len > 0`) and return the full message length.
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes (or be null with
 * `len == 0` to query the length).
 */
size_t vapbc_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VAPBC_H */
