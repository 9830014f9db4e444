#ifndef DYNLAT_H
#define DYNLAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Fuse the spatial masker into the first 1x1 convolution.
 */
#define DYNLAT_FUSE_MASKER 1

/**
 * Fuse the gather into the 3x3 convolution.
 */
#define DYNLAT_FUSE_GATHER 2

/**
 * Fuse the scatter into the residual add.
 */
#define DYNLAT_FUSE_SCATTER 4

#define DYNLAT_FUSE_ALL 7

/**
 * Result of every fallible call.
 */
typedef enum DynlatStatus {
  DYNLAT_STATUS_OK = 0,
  DYNLAT_STATUS_NULL_POINTER = 1,
  DYNLAT_STATUS_INVALID_UTF8 = 2,
  DYNLAT_STATUS_UNKNOWN_DEVICE = 3,
  DYNLAT_STATUS_UNKNOWN_NETWORK = 4,
  /**
   * Configuration rejected by validation (granularity, rate, shape).
   */
  DYNLAT_STATUS_INVALID = 5,
  DYNLAT_STATUS_PARSE = 6,
  DYNLAT_STATUS_IO = 7,
  DYNLAT_STATUS_PANIC = 8,
} DynlatStatus;

typedef enum DynlatParadigm {
  DYNLAT_PARADIGM_SPATIAL = 0,
  DYNLAT_PARADIGM_CHANNEL = 1,
  DYNLAT_PARADIGM_LAYER = 2,
  DYNLAT_PARADIGM_STATIC = 3,
} DynlatParadigm;

/**
 * Opaque device description.
 */
typedef struct DynlatHardware DynlatHardware;

/**
 * Opaque network description.
 */
typedef struct DynlatNetwork DynlatNetwork;

/**
 * Latency of one block in microseconds.
 */
typedef struct DynlatLatency {
  double data_us;
  double compute_us;
  double const_us;
  double total_us;
  /**
   * Dynamic over static latency.
   */
  double r_ell;
} DynlatLatency;

/**
 * Network MACs, stem and classifier included.
 */
typedef struct DynlatFlops {
  double dynamic_macs;
  double static_macs;
  double ratio;
} DynlatFlops;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Looks up a device preset (V100, RTX3090, RTX3060, TX2, Nano).
 *
 * # Safety
 * `name` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum DynlatStatus dynlat_hardware_preset(const char *name, struct DynlatHardware **out);

/**
 * Loads a device description file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum DynlatStatus dynlat_hardware_from_file(const char *path, struct DynlatHardware **out);

/**
 * # Safety
 * `hw` must come from a `dynlat_hardware_*` constructor, or be null.
 */
void dynlat_hardware_free(struct DynlatHardware *hw);

/**
 * Builds a shipped network by name or loads an architecture file.
 *
 * # Safety
 * `name_or_path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum DynlatStatus dynlat_network_build(const char *name_or_path, struct DynlatNetwork **out);

/**
 * # Safety
 * `net` must come from `dynlat_network_build`, or be null.
 */
void dynlat_network_free(struct DynlatNetwork *net);

/**
 * Number of residual blocks, or 0 for a null handle.
 *
 * # Safety
 * `net` must be a live handle or null.
 */
size_t dynlat_network_block_count(const struct DynlatNetwork *net);

/**
 * Predicts one block. `stage` is 1-based, `index` 0-based within the
 * stage. `granularity` is S or G and is ignored for the layer and static
 * paradigms. `batch` of 0 picks the device default.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum DynlatStatus dynlat_predict_block(const struct DynlatHardware *hw,
                                       const struct DynlatNetwork *net,
                                       size_t stage,
                                       size_t index,
                                       enum DynlatParadigm paradigm,
                                       size_t granularity,
                                       double rate,
                                       size_t batch,
                                       uint32_t fuse,
                                       struct DynlatLatency *out);

/**
 * Network MACs with one granularity for every stage and one activation
 * rate for every block.
 *
 * # Safety
 * `net` must be live and `out` a valid pointer.
 */
enum DynlatStatus dynlat_network_flops(const struct DynlatNetwork *net,
                                       enum DynlatParadigm paradigm,
                                       size_t granularity,
                                       double rate,
                                       struct DynlatFlops *out);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call on the same thread.
 */
const char *dynlat_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *dynlat_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNLAT_H */
