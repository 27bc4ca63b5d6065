#ifndef VBDC_H
#define VBDC_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum VbdcAlgorithm {
  VBDC_ALGORITHM_KMEANS = 0,
  VBDC_ALGORITHM_KHM = 1,
} VbdcAlgorithm;

typedef enum VbdcConstraint {
  VBDC_CONSTRAINT_NORMALIZED = 0,
  VBDC_CONSTRAINT_RAW = 1,
} VbdcConstraint;

typedef enum VbdcStatus {
  VBDC_STATUS_OK = 0,
  VBDC_STATUS_NULL_POINTER = 1,
  VBDC_STATUS_INVALID_ARGUMENT = 2,
  VBDC_STATUS_DIMENSION_MISMATCH = 3,
  VBDC_STATUS_IO = 4,
  VBDC_STATUS_PARSE = 5,
  VBDC_STATUS_NUMERICAL = 6,
  VBDC_STATUS_PANIC = 7,
} VbdcStatus;

// Opaque dataset handle.
typedef struct VbdcDataset VbdcDataset;

// Opaque run result handle.
typedef struct VbdcRun VbdcRun;

// Pipeline settings. Obtain defaults from `vbdc_run_options_default`.
typedef struct VbdcRunOptions {
  uintptr_t sites;
  // Sub-clusters requested at every site.
  uintptr_t local_k;
  enum VbdcAlgorithm algorithm;
  uintptr_t max_iterations;
  double convergence_tol;
  double khm_power;
  uint64_t seed;
  enum VbdcConstraint constraint;
  double sigma_factor;
  double border_fraction;
  double multi_attr_epsilon;
  uintptr_t max_perturbation_passes;
  uintptr_t merging_site;
  // Split rows into consecutive blocks instead of random sites.
  bool contiguous_partition;
} VbdcRunOptions;

typedef struct VbdcLedger {
  uint64_t total_numbers_sent;
  uint64_t wire_numbers_sent;
  uint64_t paper_model_elements;
  uint64_t bytes_at_64bit;
} VbdcLedger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next `vbdc_*` call on the same thread.
const char *vbdc_last_error(void);

struct VbdcRunOptions vbdc_run_options_default(void);

// Copies `rows * dim` row-major values into a new dataset.
//
// # Safety
// `values` must point to `rows * dim` readable doubles; `out` must be a
// valid location for a handle.
enum VbdcStatus vbdc_dataset_new(const double *values,
                                 uintptr_t rows,
                                 uintptr_t dim,
                                 struct VbdcDataset **out);

// Loads a numeric CSV file. `label_column < 0` means no label column.
//
// # Safety
// `path` must be a NUL-terminated string; `out` a valid handle location.
enum VbdcStatus vbdc_dataset_from_csv(const char *path,
                                      bool has_header,
                                      intptr_t label_column,
                                      struct VbdcDataset **out);

// # Safety
// `ds` must be a live handle or NULL.
uintptr_t vbdc_dataset_rows(const struct VbdcDataset *ds);

// # Safety
// `ds` must be a live handle or NULL.
uintptr_t vbdc_dataset_dim(const struct VbdcDataset *ds);

// # Safety
// `ds` must come from `vbdc_dataset_new`/`vbdc_dataset_from_csv` and not be
// used afterwards. NULL is ignored.
void vbdc_dataset_free(struct VbdcDataset *ds);

// Runs the full pipeline on `ds`.
//
// # Safety
// `ds` and `opts` must be valid pointers; `out` a valid handle location.
enum VbdcStatus vbdc_run(const struct VbdcDataset *ds,
                         const struct VbdcRunOptions *opts,
                         struct VbdcRun **out);

// Runs a named preset (`"synthetic3"` or `"iris"`).
//
// # Safety
// `name` must be NUL-terminated; `out` a valid handle location.
enum VbdcStatus vbdc_run_preset(const char *name, uint64_t seed, struct VbdcRun **out);

// # Safety
// `run` must be a live handle or NULL (returns 0).
uintptr_t vbdc_run_k_global(const struct VbdcRun *run);

// # Safety
// `run` must be a live handle or NULL (returns NaN).
double vbdc_run_total_sse(const struct VbdcRun *run);

// Number of points labelled by the run.
//
// # Safety
// `run` must be a live handle or NULL (returns 0).
uintptr_t vbdc_run_point_count(const struct VbdcRun *run);

// Copies the global label of every point, in dataset order, into `labels`.
//
// # Safety
// `labels` must have room for `len` values; `len` must be at least
// `vbdc_run_point_count(run)`.
enum VbdcStatus vbdc_run_copy_labels(const struct VbdcRun *run, uintptr_t *labels, uintptr_t len);

// # Safety
// `run` must be a live handle; `out` writable.
enum VbdcStatus vbdc_run_ledger(const struct VbdcRun *run, struct VbdcLedger *out);

// The run serialized as JSON (the same document as `result.json`). Free the
// string with `vbdc_string_free`. Returns NULL on failure.
//
// # Safety
// `run` must be a live handle or NULL.
char *vbdc_run_to_json(const struct VbdcRun *run);

// The merge trace, one event per line. Free with `vbdc_string_free`.
//
// # Safety
// `run` must be a live handle or NULL.
char *vbdc_run_trace(const struct VbdcRun *run);

// # Safety
// `run` must come from `vbdc_run`/`vbdc_run_preset` and not be used
// afterwards. NULL is ignored.
void vbdc_run_free(struct VbdcRun *run);

// # Safety
// `s` must come from this library and not be freed twice. NULL is ignored.
void vbdc_string_free(char *s);

// `n_a n_b / (n_a + n_b) * |c_a - c_b|^2`.
//
// # Safety
// Both centers must point to `dim` readable doubles; `out` must be writable.
enum VbdcStatus vbdc_variance_increase(uint64_t count_a,
                                       const double *center_a,
                                       uint64_t count_b,
                                       const double *center_b,
                                       uintptr_t dim,
                                       double *out);

// Merges two cluster summaries. `out_center` receives `dim` values.
//
// # Safety
// Centers must point to `dim` readable doubles; outputs must be writable
// (`out_center` for `dim` doubles).
enum VbdcStatus vbdc_merge_stats(uint64_t count_a,
                                 const double *center_a,
                                 double sse_a,
                                 uint64_t count_b,
                                 const double *center_b,
                                 double sse_b,
                                 uintptr_t dim,
                                 uint64_t *out_count,
                                 double *out_center,
                                 double *out_sse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VBDC_H */
