#ifndef NOTEMINE_H
#define NOTEMINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NmStatus {
  NM_STATUS_OK = 0,
  NM_STATUS_NULL_POINTER = 1,
  NM_STATUS_INVALID_UTF8 = 2,
  NM_STATUS_IO = 3,
  NM_STATUS_PARSE = 4,
  NM_STATUS_INVALID_ARGUMENT = 5,
  NM_STATUS_PIPELINE = 6,
  NM_STATUS_PANIC = 7,
} NmStatus;

/**
 * Fitted topic model.
 */
typedef struct NmModel NmModel;

/**
 * Negation detector with its trigger lexicon.
 */
typedef struct NmNegator NmNegator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *nm_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into the library on the same thread.
 */
const char *nm_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void nm_string_free(char *s);

/**
 * Run the whole pipeline from a config file.
 *
 * # Safety
 * `config_path` must be a valid NUL-terminated string.
 */
enum NmStatus nm_run_pipeline(const char *config_path, bool resume);

/**
 * Create a negation detector. A null `lexicon_path` selects the bundled
 * lexicon; `window` 0 selects the default of 5.
 *
 * # Safety
 * `lexicon_path` must be null or a valid string; `out` must be writable.
 */
enum NmStatus nm_negator_new(const char *lexicon_path, size_t window, struct NmNegator **out);

/**
 * # Safety
 * `negator` must be null or a handle from [`nm_negator_new`].
 */
void nm_negator_free(struct NmNegator *negator);

/**
 * Tokenize one sentence and fuse negated spans. Writes the tokens joined by
 * single spaces into `*out`.
 *
 * # Safety
 * Pointers must be valid; `*out` must be released with [`nm_string_free`].
 */
enum NmStatus nm_negate(const struct NmNegator *negator, const char *sentence, char **out);

/**
 * Pearson chi-square for a 2×k presence table.
 *
 * # Safety
 * `present` and `totals` must each point to `k` values; outputs must be writable.
 */
enum NmStatus nm_chi_square(const uint64_t *present,
                            const uint64_t *totals,
                            size_t k,
                            double *chi2,
                            size_t *dof,
                            double *p_value);

/**
 * Upper tail probability of the chi-square distribution.
 *
 * # Safety
 * `p_value` must be writable.
 */
enum NmStatus nm_chi2_sf(double x, size_t dof, double *p_value);

/**
 * Load a model file written by the pipeline.
 *
 * # Safety
 * `path` must be a valid string; `out` must be writable.
 */
enum NmStatus nm_model_load(const char *path, struct NmModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`nm_model_load`].
 */
void nm_model_free(struct NmModel *model);

/**
 * Number of topics, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nm_model_num_topics(const struct NmModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nm_model_num_docs(const struct NmModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nm_model_vocab_size(const struct NmModel *model);

/**
 * Copy the topic mixture of document `doc` into `out` (`len` = number of topics).
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum NmStatus nm_model_theta(const struct NmModel *model, size_t doc, double *out, size_t len);

/**
 * Copy the word distribution of `topic` into `out` (`len` = vocabulary size).
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum NmStatus nm_model_phi(const struct NmModel *model, size_t topic, double *out, size_t len);

/**
 * Dominant topic (0-based) and its contribution for document `doc`.
 *
 * # Safety
 * Output pointers must be writable.
 */
enum NmStatus nm_model_dominant_topic(const struct NmModel *model,
                                      size_t doc,
                                      size_t *topic,
                                      double *contribution);

/**
 * Term string for vocabulary id `term`.
 *
 * # Safety
 * `*out` must be released with [`nm_string_free`].
 */
enum NmStatus nm_model_term(const struct NmModel *model, size_t term, char **out);

/**
 * Note id of document `doc`.
 *
 * # Safety
 * `*out` must be released with [`nm_string_free`].
 */
enum NmStatus nm_model_note_id(const struct NmModel *model, size_t doc, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOTEMINE_H */
