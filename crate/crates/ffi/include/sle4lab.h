#ifndef SLE4LAB_H
#define SLE4LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum sle4_status {
  SLE4_STATUS_OK = 0,
  SLE4_STATUS_NULL_POINTER = 1,
  SLE4_STATUS_BUFFER_LENGTH = 2,
  SLE4_STATUS_INVALID_SIZE = 3,
  SLE4_STATUS_DOMAIN = 4,
  SLE4_STATUS_NUMERICAL = 5,
  SLE4_STATUS_TIE = 6,
  SLE4_STATUS_PRECONDITION = 7,
  SLE4_STATUS_SWALLOWED = 8,
  SLE4_STATUS_INVALID_PATH = 9,
  SLE4_STATUS_HULL_COLLAPSE = 10,
  SLE4_STATUS_SUPPORT = 11,
  SLE4_STATUS_REFINE = 12,
  SLE4_STATUS_INPUT = 13,
  SLE4_STATUS_SEED_REQUIRED = 14,
  SLE4_STATUS_RESAMPLE = 15,
  SLE4_STATUS_CONFIG = 16,
  SLE4_STATUS_IO = 17,
  SLE4_STATUS_PANIC = 18,
} sle4_status;

/**
 * Lattice domain with its marked arcs.
 */
typedef struct Sle4Domain Sle4Domain;

/**
 * Driving function on a capacity grid.
 */
typedef struct Sle4Driving Sle4Driving;

/**
 * Vertex values of a field on a domain.
 */
typedef struct Sle4Field Sle4Field;

/**
 * Conformal map of a domain onto the upper half-plane.
 */
typedef struct Sle4Map Sle4Map;

/**
 * Interface between the two arcs.
 */
typedef struct Sle4Path Sle4Path;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. Valid until
 * the next failing call on the same thread.
 */
const char *sle4_last_error(void);

/**
 * Library version, including the git description when built from a checkout.
 */
const char *sle4_version(void);

/**
 * The boundary height `√(π/8)`.
 */
double sle4_lambda_critical(void);

/**
 * Rhombus of side `side_n` with arcs split at the corner nearest `split_fraction`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum sle4_status sle4_domain_rhombus(size_t side_n, double split_fraction, struct Sle4Domain **out);

/**
 * # Safety
 * `d` must be null or a handle from `sle4_domain_rhombus` not yet freed.
 */
void sle4_domain_free(struct Sle4Domain *d);

/**
 * Vertex count, or 0 for a null handle.
 *
 * # Safety
 * `d` must be null or a live domain handle.
 */
size_t sle4_domain_num_vertices(const struct Sle4Domain *d);

/**
 * Interior vertex count, or 0 for a null handle.
 *
 * # Safety
 * `d` must be null or a live domain handle.
 */
size_t sle4_domain_num_interior(const struct Sle4Domain *d);

/**
 * Planar position of vertex `v`.
 *
 * # Safety
 * `d` must be a live domain handle; `x`, `y` valid writable pointers.
 */
enum sle4_status sle4_domain_position(const struct Sle4Domain *d, size_t v, double *x, double *y);

/**
 * Covariance of the zero-boundary field at interior vertices `u`, `v`.
 *
 * # Safety
 * `d` must be a live domain handle; `out` a valid writable pointer.
 */
enum sle4_status sle4_discrete_green(const struct Sle4Domain *d, size_t u, size_t v, double *out);

/**
 * Field with `±lambda` on the arcs plus a zero-boundary DGFF drawn from `seed`.
 *
 * # Safety
 * `d` must be a live domain handle; `out` valid storage for one handle.
 */
enum sle4_status sle4_field_sample(const struct Sle4Domain *d,
                                   double lambda,
                                   uint64_t seed,
                                   struct Sle4Field **out);

/**
 * # Safety
 * `f` must be null or a live field handle.
 */
void sle4_field_free(struct Sle4Field *f);

/**
 * Copies the vertex values; `len` must equal the vertex count.
 *
 * # Safety
 * `f` must be a live field handle; `buf` must hold `len` doubles.
 */
enum sle4_status sle4_field_values(const struct Sle4Field *f, double *buf, size_t len);

/**
 * Zero level interface of `f` on `d`.
 *
 * # Safety
 * `d`, `f` must be live handles, `f` sampled on `d`; `out` valid storage.
 */
enum sle4_status sle4_trace(const struct Sle4Domain *d,
                            const struct Sle4Field *f,
                            struct Sle4Path **out);

/**
 * # Safety
 * `p` must be null or a live path handle.
 */
void sle4_path_free(struct Sle4Path *p);

/**
 * Number of dual points, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live path handle.
 */
size_t sle4_path_len(const struct Sle4Path *p);

/**
 * Copies the dual points; both buffers must hold `sle4_path_len` values.
 *
 * # Safety
 * `p` must be a live path handle; `xs`, `ys` must hold `len` doubles.
 */
enum sle4_status sle4_path_points(const struct Sle4Path *p, double *xs, double *ys, size_t len);

/**
 * Map of `d` onto H with `densify` boundary points per edge (even, ≥ 2).
 *
 * # Safety
 * `d` must be a live domain handle; `out` valid storage for one handle.
 */
enum sle4_status sle4_map_new(const struct Sle4Domain *d, size_t densify, struct Sle4Map **out);

/**
 * # Safety
 * `m` must be null or a live map handle.
 */
void sle4_map_free(struct Sle4Map *m);

/**
 * `φ(x + iy)` for an interior point.
 *
 * # Safety
 * `m` must be a live map handle; `u`, `v` valid writable pointers.
 */
enum sle4_status sle4_map_eval(const struct Sle4Map *m, double x, double y, double *u, double *v);

/**
 * `φ⁻¹(u + iv)` for a point of the open half-plane.
 *
 * # Safety
 * `m` must be a live map handle; `x`, `y` valid writable pointers.
 */
enum sle4_status sle4_map_inverse(const struct Sle4Map *m,
                                  double u,
                                  double v,
                                  double *x,
                                  double *y);

/**
 * `2 × Brownian motion` sampled every `dt` up to `horizon`.
 *
 * # Safety
 * `out` must be valid storage for one handle.
 */
enum sle4_status sle4_driving_sample(double horizon,
                                     double dt,
                                     uint64_t seed,
                                     struct Sle4Driving **out);

/**
 * Driving function of the polygon through `(xs[k], ys[k])`, starting on
 * the real line, with capacity steps at most `max_increment`.
 *
 * # Safety
 * `xs`, `ys` must hold `len` doubles; `out` valid storage for one handle.
 */
enum sle4_status sle4_extract_driving(const double *xs,
                                      const double *ys,
                                      size_t len,
                                      double max_increment,
                                      struct Sle4Driving **out);

/**
 * # Safety
 * `w` must be null or a live driving handle.
 */
void sle4_driving_free(struct Sle4Driving *w);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `w` must be null or a live driving handle.
 */
size_t sle4_driving_len(const struct Sle4Driving *w);

/**
 * Copies times and values; both buffers must hold `sle4_driving_len` values.
 *
 * # Safety
 * `w` must be a live driving handle; `times`, `values` must hold `len` doubles.
 */
enum sle4_status sle4_driving_samples(const struct Sle4Driving *w,
                                      double *times,
                                      double *values,
                                      size_t len);

/**
 * `g_t(x + iy)` under the Loewner flow driven by `w`.
 *
 * # Safety
 * `w` must be a live driving handle; `u`, `v` valid writable pointers.
 */
enum sle4_status sle4_solve_forward(const struct Sle4Driving *w,
                                    double x,
                                    double y,
                                    double t,
                                    double *u,
                                    double *v);

/**
 * Copies the last error message for callers that prefer an owned string.
 * Returns the message length without the terminator; writes at most
 * `cap − 1` bytes plus a terminator when `buf` is non-null.
 *
 * # Safety
 * `buf` must be null or hold `cap` bytes.
 */
size_t sle4_last_error_copy(char *buf, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLE4LAB_H */
