#ifndef SVMLLAB_H
#define SVMLLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define SVMLLAB_OK 0

/*
 A required pointer argument was null.
 */
#define SVMLLAB_ERR_NULL 1

/*
 An argument was out of range or malformed.
 */
#define SVMLLAB_ERR_INVALID 2

/*
 Input data was rejected (shape, labels, parse failure).
 */
#define SVMLLAB_ERR_DATA 3

/*
 A solver or optimizer failed.
 */
#define SVMLLAB_ERR_FIT 4

/*
 File or network access failed.
 */
#define SVMLLAB_ERR_IO 5

/*
 A Rust panic was caught.
 */
#define SVMLLAB_ERR_PANIC 6

#define SVMLLAB_SHAPE_FULL 0

#define SVMLLAB_SHAPE_DIAGONAL 1

#define SVMLLAB_SHAPE_SPHERICAL 2

/*
 Rectangular `r×d`; `r` is passed separately.
 */
#define SVMLLAB_SHAPE_RECTANGULAR 3

/*
 Labelled examples with ±1 labels.
 */
typedef struct SvmlDataset SvmlDataset;

/*
 A fitted RBF-kernel SVM together with its metric.
 */
typedef struct SvmlModel SvmlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null after a
 success. Valid until the next call into the library from this thread.
 */
const char *svmllab_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *svmllab_version(void);

/*
 Copy `n` row-major rows of `d` features and their ±1 labels into a new
 dataset.

 # Safety
 `x` must point to `n*d` doubles and `y` to `n` doubles; `out` must be
 writable.
 */
int svmllab_dataset_new(const double *x,
                        size_t n,
                        size_t d,
                        const double *y,
                        struct SvmlDataset **out);

/*
 Load a bundled dataset id (`haber`, `credit`, ...) or a CSV file whose
 last column is the label with positive class `positive_label`.

 # Safety
 `source` and `positive_label` must be NUL-terminated strings; `out` must
 be writable.
 */
int svmllab_dataset_load(const char *source, const char *positive_label, struct SvmlDataset **out);

/*
 # Safety
 `ds` must be a live dataset handle; `out` must be writable.
 */
int svmllab_dataset_shape(const struct SvmlDataset *ds, size_t *n, size_t *d);

/*
 Release a dataset. Null is ignored.

 # Safety
 `ds` must be null or a handle not yet freed.
 */
void svmllab_dataset_free(struct SvmlDataset *ds);

/*
 Fit an SVM with kernel `exp(−‖x − x'‖²/σ²)` and penalty `c`.

 # Safety
 `train` must be a live dataset handle; `out` must be writable.
 */
int svmllab_svm_fit(const struct SvmlDataset *train,
                    double sigma_sq,
                    double c,
                    struct SvmlModel **out);

/*
 Learn a metric of the given shape (and C) on `train` against `val`,
 early-stopping on `holdout`. `config_json` may be null or a JSON object
 with SVML configuration keys; the shape argument overrides its `shape`.

 # Safety
 Dataset arguments must be live handles, `config_json` null or a
 NUL-terminated string, and `out` writable.
 */
int svmllab_svml_fit(const struct SvmlDataset *train,
                     const struct SvmlDataset *val,
                     const struct SvmlDataset *holdout,
                     int shape,
                     size_t rank,
                     const char *config_json,
                     struct SvmlModel **out);

/*
 Decision values `h(x)` for `n` row-major rows of the model's dimension.

 # Safety
 `model` must be live, `x` must hold `n*d` doubles and `h` room for `n`.
 */
int svmllab_model_decision(const struct SvmlModel *model, const double *x, size_t n, double *h);

/*
 Fraction of `eval` misclassified.

 # Safety
 Handles must be live and `out` writable.
 */
int svmllab_model_error_rate(const struct SvmlModel *model,
                             const struct SvmlDataset *eval,
                             double *out);

/*
 Number of support vectors, `C`, and the metric shape code.

 # Safety
 `model` must be live; out pointers must be writable.
 */
int svmllab_model_info(const struct SvmlModel *model, size_t *num_support, double *c, int *shape);

/*
 The explicit `r×d` matrix `L`, row-major. `len` receives `r*d`; when
 `cap` is smaller nothing is copied and `SVMLLAB_ERR_INVALID` is returned.

 # Safety
 `model` must be live, `buf` must hold `cap` doubles, `len` writable.
 */
int svmllab_model_metric(const struct SvmlModel *model,
                         double *buf,
                         size_t cap,
                         size_t *rows,
                         size_t *len);

/*
 The model as JSON (`alpha`, `b`, `support_idx`, `C`, `metric`). Release
 the string with [`svmllab_string_free`].

 # Safety
 `model` must be live and `out` writable.
 */
int svmllab_model_to_json(const struct SvmlModel *model, char **out);

/*
 Release a model. Null is ignored.

 # Safety
 `model` must be null or a handle not yet freed.
 */
void svmllab_model_free(struct SvmlModel *model);

/*
 Release a string returned by the library. Null is ignored.

 # Safety
 `s` must be null or a string from this library not yet freed.
 */
void svmllab_string_free(char *s);

/*
 Finite-difference check of the SVML gradient on a random support-stable
 problem. `max_rel_error` receives the largest relative disagreement.

 # Safety
 `max_rel_error` must be writable.
 */
int svmllab_gradcheck(uint64_t seed,
                      int shape,
                      size_t rank,
                      double a,
                      bool learn_c,
                      double *max_rel_error);

/*
 Default starting metric `I/√d` of the given shape, as an `r×d` row-major
 matrix written to `buf` (room for `d*d` values suffices).

 # Safety
 `buf` must hold `cap` doubles and `rows` must be writable.
 */
int svmllab_default_metric(int shape, size_t rank, size_t d, double *buf, size_t cap, size_t *rows);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SVMLLAB_H */
