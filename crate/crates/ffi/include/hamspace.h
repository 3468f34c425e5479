#ifndef HAMSPACE_H
#define HAMSPACE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Values 2 to 5 match the command-line exit
 * codes.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_USAGE = 2,
  HS_STATUS_FORMAT = 3,
  HS_STATUS_CONTRACT = 4,
  HS_STATUS_NUMERIC = 5,
  /**
   * The output buffer is too small; the required length was written.
   */
  HS_STATUS_BUFFER_TOO_SMALL = 6,
  HS_STATUS_PANIC = 7,
} HsStatus;

/**
 * Opaque multi-index hashing index.
 */
typedef struct HsIndex HsIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *hs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Number of differing bits between two codes of width `bits`.
 *
 * # Safety
 * `a` and `b` must each point to `bits / 8` readable bytes; `out` must be
 * writable.
 */
enum HsStatus hs_hamming_distance(const uint8_t *a, const uint8_t *b, uint32_t bits, uint32_t *out);

/**
 * Number of bits set in the user code `u` and clear in the item code `i`.
 *
 * # Safety
 * As for [`hs_hamming_distance`].
 */
enum HsStatus hs_projected_hamming(const uint8_t *u,
                                   const uint8_t *i,
                                   uint32_t bits,
                                   uint32_t *out);

/**
 * Builds an index over `count` codes of width `bits` stored back to back,
 * split into `m` substrings. The handle must be released with
 * [`hs_index_free`].
 *
 * # Safety
 * `codes` must point to `count * bits / 8` readable bytes; `out` must be
 * writable.
 */
enum HsStatus hs_index_build(const uint8_t *codes,
                             size_t count,
                             uint32_t bits,
                             uint32_t m,
                             struct HsIndex **out);

/**
 * Loads an index written by [`hs_index_save`] or the command line.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HsStatus hs_index_load(const char *path, struct HsIndex **out);

/**
 * Writes the index and its sidecar.
 *
 * # Safety
 * `index` must be a live handle; `path` a NUL-terminated string.
 */
enum HsStatus hs_index_save(const struct HsIndex *index, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `index` must be null or a handle not yet freed.
 */
void hs_index_free(struct HsIndex *index);

/**
 * Number of stored codes; 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
size_t hs_index_len(const struct HsIndex *index);

/**
 * Code width in bits; 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
uint32_t hs_index_bits(const struct HsIndex *index);

/**
 * Number of substring tables; 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
uint32_t hs_index_substrings(const struct HsIndex *index);

/**
 * Exact k nearest neighbours of `query`, ordered by distance then id.
 * Writes up to `capacity` hits and the hit count to `out_len`; returns
 * `BufferTooSmall` when `capacity` is short.
 *
 * # Safety
 * `index` must be a live handle, `query` must point to `bits / 8` bytes,
 * `ids` and `distances` must hold `capacity` slots and `out_len` must be
 * writable.
 */
enum HsStatus hs_index_knn(const struct HsIndex *index,
                           const uint8_t *query,
                           size_t k,
                           uint32_t *ids,
                           uint32_t *distances,
                           size_t capacity,
                           size_t *out_len);

/**
 * Every stored code within Hamming distance `r` of `query`, ordered by
 * distance then id. Buffer handling as for [`hs_index_knn`].
 *
 * # Safety
 * As for [`hs_index_knn`].
 */
enum HsStatus hs_index_radius(const struct HsIndex *index,
                              const uint8_t *query,
                              uint32_t r,
                              uint32_t *ids,
                              uint32_t *distances,
                              size_t capacity,
                              size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAMSPACE_H */
