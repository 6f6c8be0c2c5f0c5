#ifndef ADAPTIVE_POOL_H
#define ADAPTIVE_POOL_H

/* Generated by cbindgen from the adaptive-pool-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call in this ABI.
 */
typedef enum ApStatus {
  /**
   * The call succeeded and all out params are populated.
   */
  AP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  AP_STATUS_NULL_POINTER = 1,
  /**
   * An argument failed validation (bad extents, malformed JSON, offset
   * count mismatch, non-discretized grid where one is required, ...).
   */
  AP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The operation itself failed (I/O, divergence, unsupported data).
   */
  AP_STATUS_RUNTIME_ERROR = 3,
  /**
   * A bug: an internal panic was caught at the boundary.
   */
  AP_STATUS_INTERNAL_PANIC = 4,
} ApStatus;

/**
 * An owned pooling grid.
 */
typedef struct ApGrid ApGrid;

/**
 * An owned image: `channels` interleaved f64 samples per pixel, row-major.
 */
typedef struct ApImage ApImage;

/**
 * An owned pooled map: one f64 per cell and channel, row-major.
 */
typedef struct ApPooled ApPooled;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the calling thread's most recent error message as a fresh
 * heap-allocated string, or null if no call on this thread has failed.
 * Release the result with `ap_string_free`.
 */
char *ap_last_error_message(void);

/**
 * Releases a string obtained from this library. Null is a no-op.
 *
 * # Safety
 * `s` must have come from this library and not have been freed already.
 */
void ap_string_free(char *s);

/**
 * Builds an image from `len == width * height * channels` interleaved
 * row-major samples and writes the handle to `out`.
 *
 * # Safety
 * `data` must point to `len` readable doubles; `out` must be writable.
 */
enum ApStatus ap_image_new(size_t width,
                           size_t height,
                           size_t channels,
                           const double *data,
                           size_t len,
                           struct ApImage **out);

/**
 * Releases an image handle. Null is a no-op.
 *
 * # Safety
 * `img` must have come from this library and not have been freed already.
 */
void ap_image_free(struct ApImage *img);

/**
 * Width in pixels; 0 if `img` is null.
 *
 * # Safety
 * `img` must be null or a live image handle.
 */
size_t ap_image_width(const struct ApImage *img);

/**
 * Height in pixels; 0 if `img` is null.
 *
 * # Safety
 * `img` must be null or a live image handle.
 */
size_t ap_image_height(const struct ApImage *img);

/**
 * Samples per pixel; 0 if `img` is null.
 *
 * # Safety
 * `img` must be null or a live image handle.
 */
size_t ap_image_channels(const struct ApImage *img);

/**
 * Copies the image's `width * height * channels` samples into `out`.
 * `len` must be exactly that count.
 *
 * # Safety
 * `img` must be a live image handle; `out` must hold `len` doubles.
 */
enum ApStatus ap_image_data(const struct ApImage *img, double *out, size_t len);

/**
 * Builds a uniform `k_cols x k_rows` grid over a `width x height` image
 * and writes the handle to `out`. Borders land on fractional positions
 * when the extent does not divide evenly; see `ap_grid_discretize`.
 *
 * # Safety
 * `out` must be writable.
 */
enum ApStatus ap_grid_uniform(size_t width,
                              size_t height,
                              size_t k_cols,
                              size_t k_rows,
                              struct ApGrid **out);

/**
 * Parses a grid from its JSON form and writes the handle to `out`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ApStatus ap_grid_from_json(const char *json, struct ApGrid **out);

/**
 * Serializes the grid to JSON and writes a heap-allocated string to
 * `out`. Release it with `ap_string_free`.
 *
 * # Safety
 * `grid` must be a live grid handle; `out` must be writable.
 */
enum ApStatus ap_grid_to_json(const struct ApGrid *grid, char **out);

/**
 * Releases a grid handle. Null is a no-op.
 *
 * # Safety
 * `grid` must have come from this library and not have been freed already.
 */
void ap_grid_free(struct ApGrid *grid);

/**
 * Cells per row; 0 if `grid` is null.
 *
 * # Safety
 * `grid` must be null or a live grid handle.
 */
size_t ap_grid_k_cols(const struct ApGrid *grid);

/**
 * Cells per column; 0 if `grid` is null.
 *
 * # Safety
 * `grid` must be null or a live grid handle.
 */
size_t ap_grid_k_rows(const struct ApGrid *grid);

/**
 * True when every border sits on an integer pixel position, as pooling
 * requires; false also if `grid` is null.
 *
 * # Safety
 * `grid` must be null or a live grid handle.
 */
bool ap_grid_is_discretized(const struct ApGrid *grid);

/**
 * Copies the `k_cols + 1` column border positions into `out`; `len` must
 * be exactly that count.
 *
 * # Safety
 * `grid` must be a live grid handle; `out` must hold `len` doubles.
 */
enum ApStatus ap_grid_col_borders(const struct ApGrid *grid, double *out, size_t len);

/**
 * Copies the `k_rows + 1` row border positions into `out`; `len` must be
 * exactly that count.
 *
 * # Safety
 * `grid` must be a live grid handle; `out` must hold `len` doubles.
 */
enum ApStatus ap_grid_row_borders(const struct ApGrid *grid, double *out, size_t len);

/**
 * Displaces the interior borders: `col` holds `k_cols - 1` offsets, `row`
 * holds `k_rows - 1`, in pixels. Offsets that would push a border within
 * one pixel of a neighbor are clamped; if `overpass_fraction` is non-null
 * it receives the clamped share of movable borders. The adjusted grid is
 * written to `out`; the input grid is untouched.
 *
 * # Safety
 * `grid` must be a live grid handle; `col`/`row` must hold the stated
 * counts; `overpass_fraction` must be null or writable; `out` writable.
 */
enum ApStatus ap_grid_apply_offsets(const struct ApGrid *grid,
                                    const double *col,
                                    size_t col_len,
                                    const double *row,
                                    size_t row_len,
                                    double *overpass_fraction,
                                    struct ApGrid **out);

/**
 * Snaps every border to an integer pixel position (half-up, keeping the
 * one-pixel minimum gap) and writes the result to `out`.
 *
 * # Safety
 * `grid` must be a live grid handle; `out` must be writable.
 */
enum ApStatus ap_grid_discretize(const struct ApGrid *grid, struct ApGrid **out);

/**
 * Average-pools `img` over the cells of a discretized `grid` and writes
 * the pooled map to `out`.
 *
 * # Safety
 * `img` and `grid` must be live handles; `out` must be writable.
 */
enum ApStatus ap_pool_forward(const struct ApImage *img,
                              const struct ApGrid *grid,
                              struct ApPooled **out);

/**
 * Releases a pooled-map handle. Null is a no-op.
 *
 * # Safety
 * `pooled` must have come from this library and not been freed already.
 */
void ap_pooled_free(struct ApPooled *pooled);

/**
 * Cells per row; 0 if `pooled` is null.
 *
 * # Safety
 * `pooled` must be null or a live pooled-map handle.
 */
size_t ap_pooled_k_cols(const struct ApPooled *pooled);

/**
 * Cells per column; 0 if `pooled` is null.
 *
 * # Safety
 * `pooled` must be null or a live pooled-map handle.
 */
size_t ap_pooled_k_rows(const struct ApPooled *pooled);

/**
 * Samples per cell; 0 if `pooled` is null.
 *
 * # Safety
 * `pooled` must be null or a live pooled-map handle.
 */
size_t ap_pooled_channels(const struct ApPooled *pooled);

/**
 * Copies the pooled map's `k_rows * k_cols * channels` values into `out`,
 * row-major with interleaved channels. `len` must be exactly that count.
 *
 * # Safety
 * `pooled` must be a live pooled-map handle; `out` must hold `len`
 * doubles.
 */
enum ApStatus ap_pooled_data(const struct ApPooled *pooled, double *out, size_t len);

/**
 * Compresses `img` to `k_cols x k_rows` cells sized by a region-of-
 * interest spec (the JSON form of the library's RoiSpec): an importance
 * map is built from the spec, an equal-mass grid is derived from it, and
 * the image is pooled over that grid. Writes the pooled map to
 * `out_pooled` and the discretized grid to `out_grid`.
 *
 * # Safety
 * `img` must be a live image handle; `rois_json` must be a
 * NUL-terminated string; both out pointers must be writable.
 */
enum ApStatus ap_compress_with_rois(const struct ApImage *img,
                                    const char *rois_json,
                                    size_t k_cols,
                                    size_t k_rows,
                                    struct ApPooled **out_pooled,
                                    struct ApGrid **out_grid);

/**
 * Renders a discretized grid as a single-channel image: each cell is
 * shaded by its area, lighter meaning smaller. Writes the image to `out`.
 *
 * # Safety
 * `grid` must be a live grid handle; `out` must be writable.
 */
enum ApStatus ap_render_grid(const struct ApGrid *grid, struct ApImage **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ADAPTIVE_POOL_H */
