#ifndef APK_H
#define APK_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every call. Values match the exit codes of the `apk` binary
// where the two overlap.
typedef enum ApkStatus {
  APK_STATUS_OK = 0,
  // A verification ran and its verdict is negative.
  APK_STATUS_VERDICT_FAILED = 1,
  APK_STATUS_BUDGET_EXCEEDED = 2,
  APK_STATUS_CERTIFICATION_FAILED = 3,
  // Malformed JSON or I/O failure.
  APK_STATUS_INVALID_INPUT = 4,
  // A required pointer argument was null.
  APK_STATUS_NULL_POINTER = 5,
  // A Rust panic was caught at the boundary.
  APK_STATUS_PANIC = 6,
  APK_STATUS_INVALID_PARAMETER = 64,
} ApkStatus;

// Membership answer of [`apk_set_contains`].
typedef enum ApkMembership {
  APK_MEMBERSHIP_OUTSIDE = 0,
  APK_MEMBERSHIP_ORIGIN = 1,
  APK_MEMBERSHIP_PIECE = 2,
} ApkMembership;

// A certified approximate arithmetic patch.
typedef struct ApkAp ApkAp;

// A truncated Saito-type set.
typedef struct ApkSet ApkSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *apk_last_error(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void apk_string_free(char *s);

// Builds `K` truncated at `depth`: segments when `diamonds` is false (then
// `m` must be 1), otherwise m-dimensional diamonds.
//
// # Safety
// `out` must be valid for writes.
enum ApkStatus apk_set_build(size_t d,
                             size_t m,
                             uint64_t depth,
                             bool diamonds,
                             struct ApkSet **out);

// Parses a set from its JSON form.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be valid for writes.
enum ApkStatus apk_set_from_json(const char *json, struct ApkSet **out);

// Serializes a set; free the result with [`apk_string_free`].
//
// # Safety
// `set` must be a live handle; `out` must be valid for writes.
enum ApkStatus apk_set_to_json(const struct ApkSet *set, char **out);

// Number of pieces (the origin not counted).
//
// # Safety
// `set` must be a live handle; `out` must be valid for writes.
enum ApkStatus apk_set_piece_count(const struct ApkSet *set, size_t *out);

// Locates `point` (length `d`) within distance `tol`. On `Piece`, `level`
// receives the smallest matching level.
//
// # Safety
// `set` must be a live handle; `point` must hold `d` values; `kind` and
// `level` must be valid for writes.
enum ApkStatus apk_set_contains(const struct ApkSet *set,
                                const double *point,
                                size_t d,
                                double tol,
                                enum ApkMembership *kind,
                                uint64_t *level);

// Releases a set. Null is ignored.
//
// # Safety
// `set` must come from this library and not have been freed.
void apk_set_free(struct ApkSet *set);

// Finds a certified (k, eps, E)-AP. With `m = 1` and a unit row the patch
// lies on the segment set; otherwise on the m-dimensional diamond set, with
// the default tuple search.
//
// # Safety
// `orientation` must hold `m * d` values, row-major; `out` must be valid for writes.
enum ApkStatus apk_ap_find(size_t d,
                           size_t m,
                           const double *orientation_rows,
                           size_t k,
                           double eps,
                           struct ApkAp **out);

// Parses a patch from its JSON form.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be valid for writes.
enum ApkStatus apk_ap_from_json(const char *json, struct ApkAp **out);

// Serializes a patch; free the result with [`apk_string_free`].
//
// # Safety
// `ap` must be a live handle; `out` must be valid for writes.
enum ApkStatus apk_ap_to_json(const struct ApkAp *ap, char **out);

// Re-verifies a patch at `eps`. Returns `VerdictFailed` when the check runs
// but fails; `worst_ratio` is written in both cases.
//
// # Safety
// `ap` must be a live handle; `worst_ratio` must be valid for writes.
enum ApkStatus apk_ap_verify(const struct ApkAp *ap, double eps, double *worst_ratio);

// Number of points `k^m` and their dimension.
//
// # Safety
// `ap` must be a live handle; `count` and `d` must be valid for writes.
enum ApkStatus apk_ap_shape(const struct ApkAp *ap, size_t *count, size_t *d);

// Copies the points, row-major, into `buf` of length `len`, which must be at
// least `count * d` from [`apk_ap_shape`].
//
// # Safety
// `ap` must be a live handle; `buf` must be valid for `len` writes.
enum ApkStatus apk_ap_points(const struct ApkAp *ap, double *buf, size_t len);

// Level of the piece holding the patch, or `-1` when unknown.
//
// # Safety
// `ap` must be a live handle; `out` must be valid for writes.
enum ApkStatus apk_ap_level(const struct ApkAp *ap, int64_t *out);

// Frame of the stored coordinates and scale.
//
// # Safety
// `ap` must be a live handle; `out` must be valid for writes.
enum ApkStatus apk_ap_frame_shift(const struct ApkAp *ap, int64_t *out);

// Releases a patch. Null is ignored.
//
// # Safety
// `ap` must come from this library and not have been freed.
void apk_ap_free(struct ApkAp *ap);

// Lower-bound certificates for each `ks[i]`, writing the certified exponent
// to `exponents[i]`.
//
// # Safety
// `orientation` must hold `m * d` values; `ks` and `exponents` must hold `n` values.
enum ApkStatus apk_certify_lower_bound(size_t d,
                                       size_t m,
                                       const double *orientation_rows,
                                       bool diamonds,
                                       double eps,
                                       const size_t *ks,
                                       size_t n,
                                       double *exponents);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APK_H */
