#ifndef COLEARN_H
#define COLEARN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ColearnStatus {
  COLEARN_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  COLEARN_STATUS_NULL_POINTER = 1,
  /**
   * Out-of-range value, invalid UTF-8 or unknown name.
   */
  COLEARN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Shapes or lengths that do not fit together.
   */
  COLEARN_STATUS_DIMENSION = 3,
  /**
   * Malformed file contents.
   */
  COLEARN_STATUS_FORMAT = 4,
  COLEARN_STATUS_IO = 5,
  /**
   * Invalid experiment config; the message names the offending key.
   */
  COLEARN_STATUS_CONFIG = 6,
  /**
   * Training diverged or produced non-finite values.
   */
  COLEARN_STATUS_TRAINING = 7,
  /**
   * A Rust panic was caught at the boundary (a bug).
   */
  COLEARN_STATUS_PANIC = 8,
} ColearnStatus;

/**
 * Opaque image dataset with clean and (possibly) noisy labels.
 */
typedef struct ColearnDataset ColearnDataset;

/**
 * Opaque trained network together with its input normalization.
 */
typedef struct ColearnModel ColearnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *colearn_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful one. The pointer stays valid until the next `colearn_*` call
 * on the same thread.
 */
const char *colearn_last_error_message(void);

/**
 * Generates the class-balanced synthetic train and test splits.
 *
 * # Safety
 * `out_train` and `out_test` must be valid pointers to writable handles.
 */
enum ColearnStatus colearn_dataset_synthetic(size_t num_classes,
                                             size_t n_train,
                                             size_t n_test,
                                             size_t side,
                                             uint64_t seed,
                                             struct ColearnDataset **out_train,
                                             struct ColearnDataset **out_test);

/**
 * Loads and concatenates CIFAR-10 binary batch files.
 *
 * # Safety
 * `paths` must point to `n_paths` NUL-terminated strings; `out` must be writable.
 */
enum ColearnStatus colearn_dataset_load_cifar10(const char *const *paths,
                                                size_t n_paths,
                                                struct ColearnDataset **out);

/**
 * Reads a dataset stored in the CLDS format.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ColearnStatus colearn_dataset_load(const char *path, struct ColearnDataset **out);

/**
 * Writes a dataset (pixels, clean and noisy labels) in the CLDS format.
 *
 * # Safety
 * `ds` must be a live handle and `path` a NUL-terminated string.
 */
enum ColearnStatus colearn_dataset_save(const struct ColearnDataset *ds, const char *path);

/**
 * Number of images, or 0 for a NULL handle.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
size_t colearn_dataset_len(const struct ColearnDataset *ds);

/**
 * Number of classes, or 0 for a NULL handle.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
size_t colearn_dataset_num_classes(const struct ColearnDataset *ds);

/**
 * Bytes per image (height × width × channels), or 0 for a NULL handle.
 *
 * # Safety
 * `ds` must be NULL or a live handle.
 */
size_t colearn_dataset_image_len(const struct ColearnDataset *ds);

/**
 * Copies the clean (`noisy == false`) or observed noisy labels into `out`,
 * which must hold exactly `colearn_dataset_len(ds)` entries.
 *
 * # Safety
 * `ds` must be a live handle and `out` valid for `len` writes.
 */
enum ColearnStatus colearn_dataset_labels(const struct ColearnDataset *ds,
                                          bool noisy,
                                          uint32_t *out,
                                          size_t len);

/**
 * Fraction of samples whose noisy label differs from the clean one.
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum ColearnStatus colearn_dataset_noise_fraction(const struct ColearnDataset *ds, double *out);

/**
 * New dataset whose noisy labels are drawn from the symmetric transition
 * matrix with flip rate `rate`. With `include_true_class` the rate is
 * spread over all classes including the true one.
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum ColearnStatus colearn_dataset_corrupt_symmetric(const struct ColearnDataset *ds,
                                                     double rate,
                                                     bool include_true_class,
                                                     uint64_t seed,
                                                     struct ColearnDataset **out);

/**
 * Releases a dataset handle; NULL is ignored.
 *
 * # Safety
 * `ds` must be NULL or a handle not yet freed.
 */
void colearn_dataset_free(struct ColearnDataset *ds);

/**
 * Trains `method` (e.g. `"colearning"`, `"standard_ce"`) on the noisy
 * labels of `train` with default hyperparameters, `epochs` epochs and
 * `seed`. `test` is evaluated after every epoch with its clean labels.
 *
 * # Safety
 * `train` and `test` must be live handles, `method` a NUL-terminated
 * string and `out` writable.
 */
enum ColearnStatus colearn_model_train(const struct ColearnDataset *train,
                                       const struct ColearnDataset *test,
                                       const char *method,
                                       size_t epochs,
                                       uint64_t seed,
                                       struct ColearnModel **out);

/**
 * Loads a CLMP checkpoint. Inputs are standardized with the per-channel
 * statistics of `reference` (the training split the model was trained
 * on), or left unscaled when `reference` is NULL.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `reference` NULL or a live
 * handle and `out` writable.
 */
enum ColearnStatus colearn_model_load(const char *path,
                                      const struct ColearnDataset *reference,
                                      struct ColearnModel **out);

/**
 * Writes the model parameters as a CLMP checkpoint.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum ColearnStatus colearn_model_save(const struct ColearnModel *model, const char *path);

/**
 * Number of output classes, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t colearn_model_num_classes(const struct ColearnModel *model);

/**
 * Writes the argmax class of every image of `ds` into `out`, which must
 * hold exactly `colearn_dataset_len(ds)` entries.
 *
 * # Safety
 * `model` and `ds` must be live handles and `out` valid for `len` writes.
 */
enum ColearnStatus colearn_model_predict(const struct ColearnModel *model,
                                         const struct ColearnDataset *ds,
                                         uint32_t *out,
                                         size_t len);

/**
 * Accuracy of the model against the clean labels of `ds`.
 *
 * # Safety
 * `model` and `ds` must be live handles and `out` writable.
 */
enum ColearnStatus colearn_model_accuracy(const struct ColearnModel *model,
                                          const struct ColearnDataset *ds,
                                          double *out);

/**
 * Releases a model handle; NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void colearn_model_free(struct ColearnModel *model);

/**
 * Runs every (method, seed) cell of a TOML experiment config, like
 * `colearn run`. `output_dir` may be NULL to use the config's own;
 * `resume` skips finished cells; `jobs` cells train in parallel.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string and `output_dir` NULL or one.
 */
enum ColearnStatus colearn_run_experiment(const char *config_path,
                                          const char *output_dir,
                                          bool resume,
                                          size_t jobs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLEARN_H */
