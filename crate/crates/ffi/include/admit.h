#ifndef ADMIT_H
#define ADMIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdmitStatus {
  ADMIT_STATUS_OK = 0,
  ADMIT_STATUS_NULL_POINTER = 1,
  ADMIT_STATUS_INVALID_UTF8 = 2,
  ADMIT_STATUS_INVALID_JSON = 3,
  ADMIT_STATUS_INVALID_INPUT = 4,
  ADMIT_STATUS_INTERNAL = 5,
} AdmitStatus;

/**
 * Result of one compilation: decision plus certificate.
 */
typedef struct AdmitCompilation AdmitCompilation;

/**
 * Validated governance specification.
 */
typedef struct AdmitGovernance AdmitGovernance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread; do not free.
 */
const char *admit_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void admit_string_free(char *s);

/**
 * Parses and validates a governance spec from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum AdmitStatus admit_governance_from_json(const char *json, struct AdmitGovernance **out);

/**
 * The built-in reference governance.
 *
 * # Safety
 * `out` must be writable.
 */
enum AdmitStatus admit_governance_reference(struct AdmitGovernance **out);

/**
 * SHA-256 of the canonical governance bytes, lowercase hex.
 *
 * # Safety
 * `gov` must be a live handle; `out` must be writable.
 */
enum AdmitStatus admit_governance_hash(const struct AdmitGovernance *gov, char **out);

/**
 * # Safety
 * `gov` must be null or a handle from this library, freed at most once.
 */
void admit_governance_free(struct AdmitGovernance *gov);

/**
 * Runs a full evaluation from a run-config JSON and returns the report
 * JSON (without timing information).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum AdmitStatus admit_evaluate_config_json(const char *config_json, char **out);

/**
 * Compiles a decision from a JSON array of `{"id", "metrics"}` entries.
 * `escalation_id` may be null.
 *
 * # Safety
 * Pointers must be valid as documented; `out` must be writable.
 */
enum AdmitStatus admit_compile_json(const struct AdmitGovernance *gov,
                                    const char *candidates_json,
                                    const char *escalation_id,
                                    struct AdmitCompilation **out);

/**
 * Verdict code: 0 act, 2 escalate, 3 abort; -1 for a null handle.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
int admit_compilation_verdict(const struct AdmitCompilation *c);

/**
 * Selected policy id, or null in `*out` when the verdict is not act.
 *
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
enum AdmitStatus admit_compilation_selected(const struct AdmitCompilation *c, char **out);

/**
 * Canonical certificate bytes as a string.
 *
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
enum AdmitStatus admit_compilation_certificate_json(const struct AdmitCompilation *c, char **out);

/**
 * # Safety
 * `c` must be null or a handle from this library, freed at most once.
 */
void admit_compilation_free(struct AdmitCompilation *c);

/**
 * Replays a certificate. `*valid` is set to 1 when it matches a fresh
 * compilation byte for byte, else 0.
 *
 * # Safety
 * Pointers must be valid as documented; `valid` must be writable.
 */
enum AdmitStatus admit_verify_json(const struct AdmitGovernance *gov,
                                   const char *certificate_json,
                                   const char *candidates_json,
                                   int *valid);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADMIT_H */
