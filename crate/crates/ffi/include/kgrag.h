#ifndef KGRAG_H
#define KGRAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KgragStatus {
  KGRAG_STATUS_OK = 0,
  KGRAG_STATUS_INVALID_ARGUMENT = 1,
  KGRAG_STATUS_NOT_FOUND = 2,
  KGRAG_STATUS_GRAPH_NOT_BUILT = 3,
  KGRAG_STATUS_CONFLICT = 4,
  KGRAG_STATUS_PROVIDER_FAILED = 5,
  KGRAG_STATUS_IO = 6,
  KGRAG_STATUS_INTERNAL = 7,
  KGRAG_STATUS_PANIC = 8,
} KgragStatus;

/**
 * Opaque engine handle.
 */
typedef struct KgragEngine KgragEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens (or creates) a data directory.
 *
 * # Safety
 * `data_dir` must be a NUL-terminated string; `out` must be writable.
 */
enum KgragStatus kgrag_engine_open(const char *data_dir, struct KgragEngine **out);

/**
 * # Safety
 * `engine` must come from [`kgrag_engine_open`] and not be used afterwards.
 */
void kgrag_engine_free(struct KgragEngine *engine);

/**
 * # Safety
 * Pointers must be valid NUL-terminated strings and a live engine.
 */
enum KgragStatus kgrag_ingest_text(const struct KgragEngine *engine,
                                   const char *doc_id,
                                   const char *text,
                                   char **out_json);

/**
 * Ingests a file or directory of `.txt`/`.md` files.
 *
 * # Safety
 * Pointers must be valid NUL-terminated strings and a live engine.
 */
enum KgragStatus kgrag_ingest_path(const struct KgragEngine *engine,
                                   const char *path,
                                   char **out_json);

/**
 * Extracts triples. With a non-null `canned_dir`, replays `<chunk_id>.txt`
 * files from it instead of calling the configured provider.
 *
 * # Safety
 * `canned_dir` may be null; other pointers must be valid.
 */
enum KgragStatus kgrag_extract(const struct KgragEngine *engine,
                               const char *canned_dir,
                               char **out_json);

/**
 * Replaces the triple store with a reviewed CSV document.
 *
 * # Safety
 * Pointers must be valid NUL-terminated strings and a live engine.
 */
enum KgragStatus kgrag_import_triples(const struct KgragEngine *engine,
                                      const char *csv,
                                      char **out_json);

/**
 * Approves (`approve != 0`) or rejects a pending triple.
 *
 * # Safety
 * `engine` must be live.
 */
enum KgragStatus kgrag_review(const struct KgragEngine *engine, size_t triple_id, int approve);

/**
 * # Safety
 * Pointers must be valid and `engine` live.
 */
enum KgragStatus kgrag_build_graph(const struct KgragEngine *engine, char **out_json);

/**
 * Answers a question. `mode` is `llm_only`, `rag` or `kgrag` (null means
 * `kgrag`).
 *
 * # Safety
 * Pointers must be valid NUL-terminated strings (or null for `mode`).
 */
enum KgragStatus kgrag_ask(const struct KgragEngine *engine,
                           const char *query,
                           const char *mode,
                           int use_cache,
                           char **out_json);

/**
 * Neighborhood of an entity as graph JSON. A negative `depth` means
 * unbounded.
 *
 * # Safety
 * Pointers must be valid and `engine` live.
 */
enum KgragStatus kgrag_neighborhood(const struct KgragEngine *engine,
                                    const char *entity,
                                    int32_t depth,
                                    char **out_json);

/**
 * # Safety
 * Pointers must be valid and `engine` live.
 */
enum KgragStatus kgrag_health(const struct KgragEngine *engine, char **out_json);

/**
 * Estimated USD cost from the bundled cost table.
 *
 * # Safety
 * `provider` must be a valid string and `out` writable.
 */
enum KgragStatus kgrag_cost_estimate(const char *provider,
                                     uint64_t n_queries,
                                     double cache_hit_rate,
                                     double *out);

/**
 * # Safety
 * Both labels must be valid strings and `out` writable.
 */
enum KgragStatus kgrag_cost_ratio(const char *a, const char *b, double *out);

/**
 * # Safety
 * `a` and `b` must each point to `len` doubles; `out` must be writable.
 */
enum KgragStatus kgrag_cosine_similarity(const double *a, const double *b, size_t len, double *out);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next kgrag call on the same thread.
 */
const char *kgrag_last_error_message(void);

/**
 * # Safety
 * `s` must come from a kgrag `out_json` parameter, or be null.
 */
void kgrag_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGRAG_H */
