#ifndef SPROVER_H
#define SPROVER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum SproverCode {
  SPROVER_CODE_OK = 0,
  SPROVER_CODE_NULL_POINTER = 1,
  SPROVER_CODE_INVALID_UTF8 = 2,
  SPROVER_CODE_OUT_OF_RANGE = 3,
  /**
   * The document has errors outside proofs.
   */
  SPROVER_CODE_DOCUMENT = 4,
  /**
   * A proof failed.
   */
  SPROVER_CODE_PROOF = 5,
  SPROVER_CODE_IO = 6,
  SPROVER_CODE_QUEUE = 7,
  SPROVER_CODE_PANIC = 8,
} SproverCode;

typedef enum SproverSpanState {
  SPROVER_SPAN_STATE_UNKNOWN = 0,
  SPROVER_SPAN_STATE_PROCESSING = 1,
  SPROVER_SPAN_STATE_PROCESSED = 2,
  SPROVER_SPAN_STATE_FAILED = 3,
} SproverSpanState;

/**
 * An interactive document.
 */
typedef struct SproverSession SproverSession;

typedef struct SproverSpan {
  int64_t id;
  /**
   * In characters.
   */
  size_t offset;
  size_t length;
  enum SproverSpanState state;
} SproverSpan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *sprover_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call on the same thread.
 */
const char *sprover_last_error(void);

/**
 * # Safety
 * `s` is NULL or a string returned by this library, not yet freed.
 */
void sprover_string_free(char *s);

/**
 * Creates a session. `workers` = 0 checks proofs in the calling thread.
 *
 * # Safety
 * `out` points to writable storage for a handle.
 */
enum SproverCode sprover_session_new(uint32_t workers, struct SproverSession **out);

/**
 * # Safety
 * `session` is NULL or a live handle; it is invalid afterwards.
 */
void sprover_session_free(struct SproverSession *session);

/**
 * Replaces the document text. Unchanged leading spans keep their ids.
 *
 * # Safety
 * `session` is a live handle, `text` a NUL-terminated string.
 */
enum SproverCode sprover_session_set_text(struct SproverSession *session, const char *text_ptr);

/**
 * Checks the document with the given spans in view, then waits up to
 * `timeout_ms` for delegated proofs.
 *
 * # Safety
 * `session` is a live handle; `span_ids` points to `len` ids (may be NULL
 * when `len` is 0).
 */
enum SproverCode sprover_session_run(struct SproverSession *session,
                                     const int64_t *span_ids,
                                     size_t len,
                                     uint64_t timeout_ms);

/**
 * # Safety
 * `session` is NULL or a live handle.
 */
size_t sprover_session_span_count(const struct SproverSession *session);

/**
 * # Safety
 * `session` is a live handle, `out` writable.
 */
enum SproverCode sprover_session_span(const struct SproverSession *session,
                                      size_t index,
                                      struct SproverSpan *out);

/**
 * Takes the feedback produced since the last call, as a JSON array of
 * protocol feedback objects.
 *
 * # Safety
 * `session` is a live handle, `out` writable.
 */
enum SproverCode sprover_session_feedback_json(struct SproverSession *session, char **out);

/**
 * Runs a query after `span_id`. The answer, or the error, goes to `out`
 * in both cases.
 *
 * # Safety
 * `session` is a live handle, `query` a NUL-terminated string, `out`
 * writable.
 */
enum SproverCode sprover_session_query(struct SproverSession *session,
                                       int64_t span_id,
                                       const char *query,
                                       char **out);

/**
 * Compiles a `.v` file to `.vo`, or to `.vio` when `quick`. `include` is
 * NULL or a colon-separated search path. `exit_code`, when not NULL,
 * receives the command-line exit status.
 *
 * # Safety
 * `path` is a NUL-terminated string; `include` NULL or one.
 */
enum SproverCode sprover_compile(const char *path,
                                 uint32_t workers,
                                 bool quick,
                                 const char *include,
                                 int32_t *exit_code);

/**
 * Completes a `.vio` file into a `.vo`.
 *
 * # Safety
 * `path` is a NUL-terminated string.
 */
enum SproverCode sprover_vio2vo(const char *path, uint32_t workers, int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPROVER_H */
