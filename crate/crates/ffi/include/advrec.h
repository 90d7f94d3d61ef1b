#ifndef ADVREC_H
#define ADVREC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdvrecStatus {
  ADVREC_STATUS_OK = 0,
  // Bad argument, null pointer, shape mismatch or undersized buffer.
  ADVREC_STATUS_USAGE = 1,
  // I/O, format, checksum or version problem.
  ADVREC_STATUS_DATA = 2,
  // Non-finite values or divergence.
  ADVREC_STATUS_NUMERICAL = 3,
  ADVREC_STATUS_PANIC = 4,
} AdvrecStatus;

// Outcome of one attack on one phantom.
typedef struct AdvrecAttackResult AdvrecAttackResult;

// A list of phantoms.
typedef struct AdvrecDataset AdvrecDataset;

// A reconstruction operator.
typedef struct AdvrecModel AdvrecModel;

// Summary numbers of an attack, filled by [`advrec_result_metrics`].
typedef struct AdvrecMetrics {
  double ssim_base;
  double ssim_adv;
  double psnr_base;
  double psnr_adv;
  double objective_base;
  double objective_adv;
  // Chosen angle in degrees for rotation attacks, 0 for noise attacks.
  double theta;
} AdvrecMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next failing call.
const char *advrec_last_error(void);

// Library version as a static nul-terminated string.
const char *advrec_version(void);

// Generates `n` square phantoms; phantom `i` uses seed `seed + i`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum AdvrecStatus advrec_dataset_generate(size_t n,
                                          size_t size,
                                          size_t coils,
                                          uint64_t seed,
                                          struct AdvrecDataset **out);

// # Safety
// `path` must be a nul-terminated string and `out` a valid handle slot.
enum AdvrecStatus advrec_dataset_load(const char *path, struct AdvrecDataset **out);

// # Safety
// `ds` must be a live dataset handle and `path` a nul-terminated string.
enum AdvrecStatus advrec_dataset_save(const struct AdvrecDataset *ds, const char *path);

// Number of phantoms, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t advrec_dataset_len(const struct AdvrecDataset *ds);

// Height, width and coil count of one phantom.
//
// # Safety
// `ds` must be a live dataset handle; the output pointers must be valid.
enum AdvrecStatus advrec_dataset_dims(const struct AdvrecDataset *ds,
                                      size_t index,
                                      size_t *height,
                                      size_t *width,
                                      size_t *coils);

// Copies the row-major reference image of one phantom into `buf`.
//
// # Safety
// `ds` must be a live dataset handle and `buf` must hold `len` doubles.
enum AdvrecStatus advrec_dataset_image(const struct AdvrecDataset *ds,
                                       size_t index,
                                       double *buf,
                                       size_t len);

// # Safety
// `ds` must be null or a handle not yet freed.
void advrec_dataset_free(struct AdvrecDataset *ds);

// # Safety
// `out` must be a valid handle slot.
enum AdvrecStatus advrec_model_zero_filled(struct AdvrecModel **out);

// # Safety
// `path` must be a nul-terminated string and `out` a valid handle slot.
enum AdvrecStatus advrec_model_load(const char *path, struct AdvrecModel **out);

// # Safety
// `model` must be a live model handle and `path` a nul-terminated string.
enum AdvrecStatus advrec_model_save(const struct AdvrecModel *model, const char *path);

// # Safety
// `model` must be null or a handle not yet freed.
void advrec_model_free(struct AdvrecModel *model);

// Reconstructs phantom `index` from k-space undersampled at `acceleration`
// with the phantom's own mask seed, writing `height·width` doubles to `buf`.
//
// # Safety
// Handles must be live and `buf` must hold `len` doubles.
enum AdvrecStatus advrec_reconstruct(const struct AdvrecModel *model,
                                     const struct AdvrecDataset *ds,
                                     size_t index,
                                     uint32_t acceleration,
                                     double *buf,
                                     size_t len);

// Projected gradient attack with per-coil budget `eta` (relative to each
// coil's k-space norm). The objective covers the annotation box, or the
// whole image when `full_region` is nonzero.
//
// # Safety
// Handles must be live and `out` a valid handle slot.
enum AdvrecStatus advrec_noise_attack(const struct AdvrecModel *model,
                                      const struct AdvrecDataset *ds,
                                      size_t index,
                                      uint32_t acceleration,
                                      int full_region,
                                      double eta,
                                      size_t steps,
                                      uint64_t seed,
                                      struct AdvrecAttackResult **out);

// Worst-case rotation in `[-theta_max, theta_max]` degrees on a grid of `grid_step`.
//
// # Safety
// Handles must be live and `out` a valid handle slot.
enum AdvrecStatus advrec_rotation_attack(const struct AdvrecModel *model,
                                         const struct AdvrecDataset *ds,
                                         size_t index,
                                         uint32_t acceleration,
                                         int full_region,
                                         double theta_max,
                                         double grid_step,
                                         struct AdvrecAttackResult **out);

// # Safety
// `res` must be a live result handle and `metrics` a valid pointer.
enum AdvrecStatus advrec_result_metrics(const struct AdvrecAttackResult *res,
                                        struct AdvrecMetrics *metrics);

// Copies an image of the result: 0 = baseline, 1 = attacked, 2 = |attacked − baseline|.
//
// # Safety
// `res` must be a live result handle and `buf` must hold `len` doubles.
enum AdvrecStatus advrec_result_image(const struct AdvrecAttackResult *res,
                                      int which,
                                      double *buf,
                                      size_t len);

// # Safety
// `res` must be null or a handle not yet freed.
void advrec_result_free(struct AdvrecAttackResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADVREC_H */
