#ifndef MXSIM_H
#define MXSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum MxsimStatus {
  MXSIM_STATUS_OK = 0,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  MXSIM_STATUS_NULL_OR_INVALID_ARGUMENT = 1,
  MXSIM_STATUS_INVALID_VALUE = 2,
  MXSIM_STATUS_SHAPE = 3,
  MXSIM_STATUS_CONFIG = 4,
  MXSIM_STATUS_RANGE = 5,
  MXSIM_STATUS_PARSE = 6,
  MXSIM_STATUS_INVARIANT = 7,
  MXSIM_STATUS_IO = 8,
  /**
   * The library panicked; this is a bug.
   */
  MXSIM_STATUS_INTERNAL = 9,
} MxsimStatus;

/**
 * Result of [`mxsim_simulate_json`].
 */
typedef struct MxsimReport MxsimReport;

/**
 * Precision schedule.
 */
typedef struct MxsimSchedule MxsimSchedule;

/**
 * Stage map produced by [`mxsim_stage_map_build`].
 */
typedef struct MxsimStageMap MxsimStageMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call on the same thread.
 */
const char *mxsim_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void mxsim_string_free(char *s);

/**
 * Quantizes 32 doubles into one block.
 *
 * # Safety
 * `values` must point to 32 doubles and `out_elements` to 32 bytes.
 */
enum MxsimStatus mxsim_quantize_block(const double *values,
                                      uint8_t precision_bits,
                                      int8_t *out_elements,
                                      uint8_t *out_shared_exp);

/**
 * Decodes one block into 32 doubles.
 *
 * # Safety
 * `elements` must point to 32 bytes and `out_values` to 32 doubles.
 */
enum MxsimStatus mxsim_dequantize_block(const int8_t *elements,
                                        uint8_t shared_exp,
                                        uint8_t precision_bits,
                                        double *out_values);

/**
 * Bit-serial product of an activation block with an MXINT8 weight block.
 * The bfloat16 result is widened to float exactly.
 *
 * # Safety
 * `act` and `wgt` must point to 32 bytes each.
 */
enum MxsimStatus mxsim_block_dot(const int8_t *act,
                                 uint8_t act_exp,
                                 uint8_t act_bits,
                                 const int8_t *wgt,
                                 uint8_t wgt_exp,
                                 float *out_value,
                                 uint32_t *out_cycles);

/**
 * Builds a stage map from a row-major 0/1 mask.
 *
 * # Safety
 * `mask` must point to `height * width` bytes.
 */
enum MxsimStatus mxsim_stage_map_build(const uint8_t *mask,
                                       size_t height,
                                       size_t width,
                                       size_t conv_count,
                                       size_t stage1_extra,
                                       struct MxsimStageMap **out_map);

/**
 * # Safety
 * `map` must come from [`mxsim_stage_map_build`] and not have been freed.
 */
void mxsim_stage_map_free(struct MxsimStageMap *map);

/**
 * # Safety
 * `map` must be a live stage map.
 */
enum MxsimStatus mxsim_stage_map_dims(const struct MxsimStageMap *map,
                                      size_t *out_height,
                                      size_t *out_width);

/**
 * Copies the stage numbers, row-major, into `out_codes` of length `len`,
 * which must equal height * width.
 *
 * # Safety
 * `map` must be a live stage map; `out_codes` must hold `len` bytes.
 */
enum MxsimStatus mxsim_stage_map_codes(const struct MxsimStageMap *map,
                                       uint8_t *out_codes,
                                       size_t len);

/**
 * Lifts Stage 0 tokens flagged in the 0/1 `promote` mask to Stage 1, in place.
 *
 * # Safety
 * `map` must be a live stage map; `promote` must hold `len` bytes.
 */
enum MxsimStatus mxsim_stage_map_update_semantic(struct MxsimStageMap *map,
                                                 const uint8_t *promote,
                                                 size_t len);

/**
 * The 50-step schedule with downgrades at timesteps 9 and 18.
 *
 * # Safety
 * `out_schedule` must be a valid pointer.
 */
enum MxsimStatus mxsim_schedule_default(struct MxsimSchedule **out_schedule);

/**
 * Parses and validates a schedule; absent fields take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_schedule` a valid pointer.
 */
enum MxsimStatus mxsim_schedule_from_json(const char *json, struct MxsimSchedule **out_schedule);

/**
 * # Safety
 * `schedule` must come from this library and not have been freed.
 */
void mxsim_schedule_free(struct MxsimSchedule *schedule);

/**
 * Element width in bits for `stage` at `timestep`.
 *
 * # Safety
 * `schedule` must be a live schedule; `out_bits` a valid pointer.
 */
enum MxsimStatus mxsim_schedule_precision_at(const struct MxsimSchedule *schedule,
                                             uint32_t timestep,
                                             uint8_t stage,
                                             uint8_t *out_bits);

/**
 * Runs a full simulation. `mask` is PBM text or a JSON array of 0/1 rows;
 * `hardware_json` and `schedule` may be null for the defaults.
 *
 * # Safety
 * String arguments must be NUL-terminated; `schedule`, when non-null, a live
 * schedule; `out_report` a valid pointer.
 */
enum MxsimStatus mxsim_simulate_json(const char *graph_json,
                                     const char *mask,
                                     const char *hardware_json,
                                     const struct MxsimSchedule *schedule,
                                     struct MxsimReport **out_report);

/**
 * # Safety
 * `report` must come from this library and not have been freed.
 */
void mxsim_report_free(struct MxsimReport *report);

/**
 * Latency and matrix-unit speedups over the uniform-MXINT8 baseline.
 *
 * # Safety
 * `report` must be a live report; outputs valid pointers.
 */
enum MxsimStatus mxsim_report_speedup(const struct MxsimReport *report,
                                      double *out_latency_speedup,
                                      double *out_compute_speedup);

/**
 * Serializes the report as JSON; free the string with [`mxsim_string_free`].
 *
 * # Safety
 * `report` must be a live report; `out_json` a valid pointer.
 */
enum MxsimStatus mxsim_report_to_json(const struct MxsimReport *report, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MXSIM_H */
