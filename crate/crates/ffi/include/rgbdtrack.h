#ifndef RGBDTRACK_H
#define RGBDTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RgbdMode {
  RGBD_MODE_RGB = 0,
  RGBD_MODE_RGBD = 1,
  RGBD_MODE_RGB_OCC = 2,
  RGBD_MODE_RGBD_OCC = 3,
} RgbdMode;

typedef enum RgbdStatus {
  RGBD_STATUS_OK = 0,
  RGBD_STATUS_NULL_POINTER = 1,
  RGBD_STATUS_INVALID_ARGUMENT = 2,
  RGBD_STATUS_INVALID_CONFIG = 3,
  RGBD_STATUS_INIT_FAILED = 4,
  RGBD_STATUS_FRAME_MISMATCH = 5,
  RGBD_STATUS_PANIC = 6,
  RGBD_STATUS_INTERNAL = 7,
} RgbdStatus;

// Opaque tracker handle.
typedef struct RgbdTracker RgbdTracker;

// A box that may be absent (`present == 0`), in which case the
// coordinates are meaningless.
typedef struct RgbdBox {
  uint8_t present;
  double x;
  double y;
  double w;
  double h;
} RgbdBox;

// Per-frame tracker output.
typedef struct RgbdFrameResult {
  struct RgbdBox bbox;
  // 1 while the target is considered occluded.
  uint8_t occluded;
  // 1 when the appearance and depth models were updated.
  uint8_t updated;
} RgbdFrameResult;

// Failure-type fractions of a tracked stream against ground truth.
typedef struct RgbdErrorRates {
  double type_i;
  double type_ii;
  double type_iii;
} RgbdErrorRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Writes the last error message of the calling thread into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
// message length in bytes (excluding the terminator).
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t rgbd_last_error_message(char *buf, size_t len);

// Creates a tracker from the first frame and the target box.
//
// `config` is a NUL-terminated `key = value` text, or null for defaults.
// On success `*out` owns a tracker to be released with
// [`rgbd_tracker_free`].
//
// # Safety
// Image buffers as in [`rgbd_tracker_step`]; `config` null or a valid C
// string; `out` a valid pointer.
enum RgbdStatus rgbd_tracker_new(uint32_t width,
                                 uint32_t height,
                                 const uint8_t *rgb,
                                 const uint16_t *depth,
                                 uint64_t index,
                                 struct RgbdBox init,
                                 enum RgbdMode mode,
                                 const char *config,
                                 struct RgbdTracker **out);

// Processes the next frame, whose `index` must follow the previous one.
//
// # Safety
// `tracker` from [`rgbd_tracker_new`]; `rgb` points to `3 * width *
// height` bytes of interleaved RGB; `depth` to `width * height`
// millimeter values (0 = invalid); `out` a valid pointer.
enum RgbdStatus rgbd_tracker_step(struct RgbdTracker *tracker,
                                  uint32_t width,
                                  uint32_t height,
                                  const uint8_t *rgb,
                                  const uint16_t *depth,
                                  uint64_t index,
                                  struct RgbdFrameResult *out);

// Releases a tracker. Null is ignored.
//
// # Safety
// `tracker` must come from [`rgbd_tracker_new`] and not be used again.
void rgbd_tracker_free(struct RgbdTracker *tracker);

// Overlap ratio of a tracker box and a ground-truth box: intersection
// over union when both are present, 1 when both are absent, -1 otherwise.
// Writes the ratio to `*out`.
//
// # Safety
// `out` must be a valid pointer.
enum RgbdStatus rgbd_overlap(struct RgbdBox tracked, struct RgbdBox truth, double *out);

// Fraction of the `n` overlap ratios strictly above `r_t`.
//
// # Safety
// `ratios` must point to `n` values; `out` must be a valid pointer.
enum RgbdStatus rgbd_success_rate(const double *ratios, size_t n, double r_t, double *out);

// Classifies `n` frames into failure types at threshold `r_t`.
//
// # Safety
// `tracked` and `truth` must point to `n` boxes; `out` must be valid.
enum RgbdStatus rgbd_error_rates(const struct RgbdBox *tracked,
                                 const struct RgbdBox *truth,
                                 size_t n,
                                 double r_t,
                                 struct RgbdErrorRates *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RGBDTRACK_H */
