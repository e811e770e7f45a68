#ifndef UVTEX_H
#define UVTEX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum UvtexStatus {
  UVTEX_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  UVTEX_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was out of range, mis-sized or inconsistent.
   */
  UVTEX_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read or written.
   */
  UVTEX_STATUS_IO = 3,
  /**
   * A file or string could not be parsed.
   */
  UVTEX_STATUS_FORMAT = 4,
  /**
   * A solve failed: underdetermined fit, indefinite system, missing
   * boundary or no convergence.
   */
  UVTEX_STATUS_NUMERICAL = 5,
  /**
   * The library panicked; this is a bug.
   */
  UVTEX_STATUS_PANIC = 6,
} UvtexStatus;

/**
 * Float image with values in `[0, 1]`.
 */
typedef struct UvtexImage UvtexImage;

/**
 * Morphable model loaded from a binary container.
 */
typedef struct UvtexModel UvtexModel;

/**
 * Shape coefficients and pose of one face.
 */
typedef struct UvtexParams UvtexParams;

/**
 * Square UV map with a per-texel validity flag.
 */
typedef struct UvtexUvMap UvtexUvMap;

/**
 * Image comparison metrics.
 */
typedef struct UvtexMetrics {
  double l1;
  double ssim;
} UvtexMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none failed.
 * The string stays valid until the next failing call on the same thread.
 */
const char *uvtex_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *uvtex_version(void);

/**
 * Load a morphable model container.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum UvtexStatus uvtex_model_load(const char *path_, struct UvtexModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`uvtex_model_load`] not yet freed.
 */
void uvtex_model_free(struct UvtexModel *model);

/**
 * Vertex count, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t uvtex_model_vertex_count(const struct UvtexModel *model);

/**
 * Triangle count, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t uvtex_model_triangle_count(const struct UvtexModel *model);

/**
 * Load a `.png` (8-bit) or `.pfm` image.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum UvtexStatus uvtex_image_load(const char *path_, struct UvtexImage **out);

/**
 * Copy a row-major, interleaved RGB image of `width * height * 3` values.
 *
 * # Safety
 * `data` must point to `width * height * 3` readable doubles and `out` must
 * be a writable pointer.
 */
enum UvtexStatus uvtex_image_from_rgb(size_t width,
                                      size_t height,
                                      const double *data,
                                      struct UvtexImage **out);

/**
 * # Safety
 * `image` must be null or a live handle.
 */
void uvtex_image_free(struct UvtexImage *image);

/**
 * Width in pixels, or 0 for a null handle.
 *
 * # Safety
 * `image` must be null or a live handle.
 */
size_t uvtex_image_width(const struct UvtexImage *image);

/**
 * Height in pixels, or 0 for a null handle.
 *
 * # Safety
 * `image` must be null or a live handle.
 */
size_t uvtex_image_height(const struct UvtexImage *image);

/**
 * Load a face parameter file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum UvtexStatus uvtex_params_load(const char *path_, struct UvtexParams **out);

/**
 * # Safety
 * `params` must be null or a live handle.
 */
void uvtex_params_free(struct UvtexParams *params);

/**
 * Sample the texture visible in `image` into a `resolution`-square UV map.
 * A negative `erosion_radius` selects the default for the image width.
 *
 * # Safety
 * All handles must be live and `out` a writable pointer.
 */
enum UvtexStatus uvtex_make_uv_gt(const struct UvtexModel *model,
                                  const struct UvtexImage *image,
                                  const struct UvtexParams *params,
                                  size_t resolution,
                                  int32_t erosion_radius,
                                  struct UvtexUvMap **out);

/**
 * Build the sampled, fitted and blended UV maps with default settings at
 * the given resolution. Any of the three outputs may be null to skip it.
 *
 * # Safety
 * All handles must be live; non-null outputs must be writable.
 */
enum UvtexStatus uvtex_pseudo_uv(const struct UvtexModel *model,
                                 const struct UvtexImage *image,
                                 const struct UvtexParams *params,
                                 size_t resolution,
                                 struct UvtexUvMap **out_gt,
                                 struct UvtexUvMap **out_bfm,
                                 struct UvtexUvMap **out_bl);

/**
 * # Safety
 * `map` must be null or a live handle.
 */
void uvtex_uvmap_free(struct UvtexUvMap *map);

/**
 * Side length in texels, or 0 for a null handle.
 *
 * # Safety
 * `map` must be null or a live handle.
 */
size_t uvtex_uvmap_resolution(const struct UvtexUvMap *map);

/**
 * Channels per texel, or 0 for a null handle.
 *
 * # Safety
 * `map` must be null or a live handle.
 */
size_t uvtex_uvmap_channels(const struct UvtexUvMap *map);

/**
 * Copy texel values (row-major, interleaved, `resolution^2 * channels`
 * doubles) and validity flags (`resolution^2` bytes, 1 = valid). Either
 * destination may be null; the given lengths must match exactly.
 *
 * # Safety
 * `map` must be live; non-null destinations must hold the stated lengths.
 */
enum UvtexStatus uvtex_uvmap_read(const struct UvtexUvMap *map,
                                  double *data,
                                  size_t data_len,
                                  uint8_t *valid,
                                  size_t valid_len);

/**
 * Write the map as a PFM file plus an 8-bit PNG and its validity mask next
 * to it (`<stem>.png`, `<stem>_valid.png`).
 *
 * # Safety
 * `map` must be live and `path` a nul-terminated string ending in `.pfm`.
 */
enum UvtexStatus uvtex_uvmap_save(const struct UvtexUvMap *map, const char *path_);

/**
 * L1 distance and SSIM of two images of equal size.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum UvtexStatus uvtex_metrics(const struct UvtexImage *a,
                               const struct UvtexImage *b,
                               struct UvtexMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UVTEX_H */
