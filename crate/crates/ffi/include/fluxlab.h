#ifndef FLUXLAB_H
#define FLUXLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FluxlabStatus {
  FLUXLAB_STATUS_OK = 0,
  FLUXLAB_STATUS_NULL_POINTER = 1,
  FLUXLAB_STATUS_INVALID_ARGUMENT = 2,
  FLUXLAB_STATUS_DOMAIN = 3,
  FLUXLAB_STATUS_NO_CONVERGENCE = 4,
  FLUXLAB_STATUS_CONFIG = 5,
  FLUXLAB_STATUS_IO = 6,
  /**
   * The output buffer is too small; the required length was written.
   */
  FLUXLAB_STATUS_BUFFER_TOO_SMALL = 7,
  FLUXLAB_STATUS_VERIFY_FAILED = 8,
  FLUXLAB_STATUS_PANIC = 9,
} FluxlabStatus;

/**
 * An assembled channel Hamiltonian.
 */
typedef struct FluxlabModel FluxlabModel;

/**
 * A radial flux profile.
 */
typedef struct FluxlabProfile FluxlabProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null if none. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *fluxlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fluxlab_version(void);

/**
 * `Φ(r) = λ r^σ`.
 */
enum FluxlabStatus fluxlab_profile_power_law(double lambda,
                                             double sigma,
                                             struct FluxlabProfile **out);

/**
 * `Φ(r) = λ r`.
 */
enum FluxlabStatus fluxlab_profile_linear(double lambda, struct FluxlabProfile **out);

/**
 * Constant field `B₀`, `Φ(r) = B₀ r²/2`.
 */
enum FluxlabStatus fluxlab_profile_uniform_field(double b0, struct FluxlabProfile **out);

/**
 * # Safety
 * `p` must be null or a handle from a profile constructor, freed once.
 */
void fluxlab_profile_free(struct FluxlabProfile *p);

/**
 * Flux at radius `r`.
 *
 * # Safety
 * `p` must be a live profile handle and `out` writable.
 */
enum FluxlabStatus fluxlab_profile_eval(const struct FluxlabProfile *p, double r, double *out);

/**
 * Assembles the Hamiltonian on `n_r` nodes in `(0, r_max)` with channels
 * `|j| ≤ j_max` and the perturbation `amp·e^{−rate·r}` times a Poisson
 * kernel with parameter `q`; `amp = 0` gives the unperturbed operator.
 *
 * # Safety
 * `profile` must be a live profile handle and `out` writable.
 */
enum FluxlabStatus fluxlab_model_new(const struct FluxlabProfile *profile,
                                     size_t n_r,
                                     double r_max,
                                     int64_t j_max,
                                     double amp,
                                     double rate,
                                     double q,
                                     struct FluxlabModel **out);

/**
 * # Safety
 * `m` must be null or a handle from [`fluxlab_model_new`], freed once.
 */
void fluxlab_model_free(struct FluxlabModel *m);

/**
 * Matrix dimension `n_r·(2 j_max + 1)`, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live model handle.
 */
size_t fluxlab_model_dim(const struct FluxlabModel *m);

/**
 * Eigenvalues in `[lo, hi]`, ascending. `count` receives how many there
 * are; if that exceeds `cap`, nothing is copied and the status is
 * `BufferTooSmall`. `buf` may be null when `cap` is 0.
 *
 * # Safety
 * `m` must be a live model handle, `count` writable and `buf` valid for
 * `cap` doubles.
 */
enum FluxlabStatus fluxlab_model_eigenvalues(const struct FluxlabModel *m,
                                             double lo,
                                             double hi,
                                             double *buf,
                                             size_t cap,
                                             size_t *count);

/**
 * `ξ(a, ζ) = Σ_m e^{−(a/2)|m|^ζ}`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FluxlabStatus fluxlab_xi_constant(double a, double zeta, double *out);

/**
 * Runs a CLI subcommand (`"spectrum"`, `"evolve"`, …) on a config file,
 * writing artifacts to `out_dir`; with `check` nonzero the artifacts are
 * re-verified afterwards.
 *
 * # Safety
 * All strings must be valid NUL-terminated UTF-8.
 */
enum FluxlabStatus fluxlab_run(const char *subcommand,
                               const char *config_path,
                               const char *out_dir,
                               int32_t check);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUXLAB_H */
