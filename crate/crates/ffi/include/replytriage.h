#ifndef REPLYTRIAGE_H
#define REPLYTRIAGE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtStatus {
  RT_STATUS_OK = 0,
  RT_STATUS_NULL_POINTER = 1,
  RT_STATUS_INVALID_ARGUMENT = 2,
  RT_STATUS_IO = 3,
  RT_STATUS_SCHEMA = 4,
  RT_STATUS_INTEGRITY = 5,
  RT_STATUS_BACKEND = 6,
  RT_STATUS_INTERNAL = 7,
} RtStatus;

typedef enum RtCategory {
  RT_CATEGORY_C1 = 1,
  RT_CATEGORY_C2 = 2,
  RT_CATEGORY_C3 = 3,
  RT_CATEGORY_C4 = 4,
  RT_CATEGORY_PENDING = 5,
} RtCategory;

/**
 * Opaque loaded corpus.
 */
typedef struct RtCorpus RtCorpus;

typedef struct RtMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  bool precision_undefined;
  bool recall_undefined;
} RtMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rt_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void rt_string_free(char *s);

/**
 * Loads and validates a corpus JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RtStatus rt_corpus_load(const char *path, struct RtCorpus **out);

/**
 * # Safety
 * `corpus` must be NULL or a handle from [`rt_corpus_load`] not yet freed.
 */
void rt_corpus_free(struct RtCorpus *corpus);

/**
 * # Safety
 * `corpus` must be a live handle; each out pointer must be NULL or writable.
 */
enum RtStatus rt_corpus_counts(const struct RtCorpus *corpus,
                               size_t *posts,
                               size_t *articles,
                               size_t *replies);

enum RtCategory rt_categorize(bool toxic, bool relevant);

/**
 * # Safety
 * `out` must be writable.
 */
enum RtStatus rt_is_toxic(double value, double threshold, bool *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum RtStatus rt_confusion_metrics(uint64_t tp,
                                   uint64_t fp,
                                   uint64_t fn_,
                                   uint64_t tn,
                                   struct RtMetrics *out);

/**
 * # Safety
 * `a` and `b` must each point to `n` readable bools; `out` must be writable.
 */
enum RtStatus rt_cohen_kappa(const bool *a, const bool *b, size_t n, double *out);

/**
 * Collapses five 1 to 5 ratings to a binary toxicity label.
 *
 * # Safety
 * `ratings` must point to 5 readable bytes; `out` must be writable.
 */
enum RtStatus rt_collapse_likert(const uint8_t *ratings, bool *out);

/**
 * Classifies every reply with the bundled lexicon scorer and keyword
 * relevance. Results are cached in `cache_path` when it is not NULL.
 * `*summary_json` receives the run summary as JSON. When `source_date_epoch`
 * is non-negative it fixes every written timestamp.
 *
 * # Safety
 * `corpus` must be a live handle, `cache_path` NULL or a NUL-terminated
 * string, and `summary_json` writable.
 */
enum RtStatus rt_classify_keyword(const struct RtCorpus *corpus,
                                  const char *cache_path,
                                  int64_t source_date_epoch,
                                  char **summary_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPLYTRIAGE_H */
