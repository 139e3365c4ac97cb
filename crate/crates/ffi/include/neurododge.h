#ifndef NEURODODGE_H
#define NEURODODGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum NdStatus {
  ND_STATUS_OK = 0,
  ND_STATUS_NULL_POINTER = 1,
  ND_STATUS_INVALID_ARGUMENT = 2,
  ND_STATUS_IO = 3,
  ND_STATUS_PARSE = 4,
  ND_STATUS_SHAPE = 5,
  ND_STATUS_NUMERIC = 6,
  ND_STATUS_BUFFER_TOO_SMALL = 7,
  ND_STATUS_PANIC = 8,
} NdStatus;

/**
 * Opaque event stream.
 */
typedef struct NdEventStream NdEventStream;

/**
 * Opaque network checkpoint.
 */
typedef struct NdNetwork NdNetwork;

/**
 * One event. `p` is 1 for ON and 0 for OFF.
 */
typedef struct NdEvent {
  uint32_t t_us;
  uint16_t x;
  uint16_t y;
  uint8_t p;
} NdEvent;

/**
 * Key-event filter settings; start from [`nd_kep_config_default`].
 */
typedef struct NdKepConfig {
  double radius;
  double lambda1;
  double lambda2;
  size_t trials;
  size_t cells;
  uint64_t seed;
} NdKepConfig;

/**
 * Decoded avoidance command.
 */
typedef struct NdAction {
  /**
   * Channel with the most output spikes: 0 approach from the left, 1 from the right.
   */
  uint32_t approach;
  double speed;
} NdAction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *nd_last_error(void);

/**
 * Reads an EVS1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NdStatus nd_stream_read(const char *path, struct NdEventStream **out);

/**
 * Writes a stream as EVS1.
 *
 * # Safety
 * `stream` must come from this library; `path` must be NUL-terminated.
 */
enum NdStatus nd_stream_write(const struct NdEventStream *stream, const char *path);

/**
 * Builds a stream from `len` events, validating bounds.
 *
 * # Safety
 * `events` must point to `len` readable events (it may be null when `len`
 * is 0) and `out` must be valid.
 */
enum NdStatus nd_stream_from_events(const struct NdEvent *events,
                                    size_t len,
                                    uint16_t width,
                                    uint16_t height,
                                    uint32_t window_us,
                                    struct NdEventStream **out);

/**
 * Number of events; 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or come from this library.
 */
size_t nd_stream_len(const struct NdEventStream *stream);

/**
 * Copies the events into `buf`, which must hold at least
 * [`nd_stream_len`] entries.
 *
 * # Safety
 * `buf` must point to `capacity` writable events.
 */
enum NdStatus nd_stream_events(const struct NdEventStream *stream,
                               struct NdEvent *buf,
                               size_t capacity);

/**
 * Releases a stream. Null is ignored.
 *
 * # Safety
 * `stream` must be null or an unreleased handle from this library.
 */
void nd_stream_free(struct NdEventStream *stream);

struct NdKepConfig nd_kep_config_default(void);

/**
 * Runs the key-event filter and returns the key stream as a new handle.
 *
 * # Safety
 * Pointers must be valid; `config` may be null for defaults.
 */
enum NdStatus nd_kep_filter(const struct NdEventStream *stream,
                            const struct NdKepConfig *config,
                            struct NdEventStream **out);

/**
 * Loads an SNN1 checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum NdStatus nd_network_load(const char *path, struct NdNetwork **out);

/**
 * Time steps the network runs; 0 for a null handle.
 *
 * # Safety
 * `net` must be null or come from this library.
 */
size_t nd_network_steps(const struct NdNetwork *net);

/**
 * Output channels of the network; 0 for a null handle.
 *
 * # Safety
 * `net` must be null or come from this library.
 */
size_t nd_network_outputs(const struct NdNetwork *net);

/**
 * Releases a network. Null is ignored.
 *
 * # Safety
 * `net` must be null or an unreleased handle from this library.
 */
void nd_network_free(struct NdNetwork *net);

/**
 * Event-driven inference. Writes per-channel spike counts to `counts`
 * (which must hold [`nd_network_outputs`] entries) and the decoded action.
 * Either output may be null.
 *
 * # Safety
 * Handles must come from this library; `counts` must point to `capacity`
 * writable values.
 */
enum NdStatus nd_network_infer(const struct NdNetwork *net,
                               const struct NdEventStream *stream,
                               uint32_t *counts,
                               size_t capacity,
                               struct NdAction *action);

/**
 * Address of pixel `(x, y)` with polarity `p` on a `width` x `height` sensor.
 *
 * # Safety
 * `out` must be valid.
 */
enum NdStatus nd_encode_address(uint16_t x,
                                uint16_t y,
                                uint8_t p,
                                uint16_t width,
                                uint16_t height,
                                uint32_t *out);

/**
 * Snaps an integer-domain weight to the grid of interval `sigma`. Sets
 * `clamped` (if non-null) when the value fell outside the 8-bit range.
 *
 * # Safety
 * `out` must be valid; `clamped` may be null.
 */
enum NdStatus nd_quantize(double weight, double sigma, double *out, bool *clamped);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEURODODGE_H */
