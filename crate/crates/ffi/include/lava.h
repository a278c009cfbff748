#ifndef LAVA_H
#define LAVA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum LavaStatus {
  LAVA_STATUS_OK = 0,
  LAVA_STATUS_NULL_ARGUMENT = 1,
  LAVA_STATUS_INVALID_ARGUMENT = 2,
  LAVA_STATUS_IO = 3,
  LAVA_STATUS_CODEC = 4,
  LAVA_STATUS_RENDER = 5,
  LAVA_STATUS_BUFFER_TOO_SMALL = 6,
  LAVA_STATUS_PANIC = 7,
} LavaStatus;

typedef enum LavaBlendMode {
  LAVA_BLEND_MODE_PREBAKED = 0,
  LAVA_BLEND_MODE_FUSED = 1,
} LavaBlendMode;

/*
 Loaded asset.
 */
typedef struct LavaAsset LavaAsset;

/*
 Rendered frame: RGB8 pixels plus per-pixel transmittance.
 */
typedef struct LavaFrame LavaFrame;

typedef struct LavaAssetInfo {
  uint32_t layers;
  uint32_t warp_basis;
  uint32_t tex_basis;
  uint32_t params;
  uint32_t grid_rows;
  uint32_t grid_cols;
  uint32_t tex_res;
  uint32_t warp_res;
  bool has_specular;
  float scene_center[3];
} LavaAssetInfo;

/*
 Pinhole camera. `fov_y_deg` is the vertical field of view in degrees.
 */
typedef struct LavaCamera {
  double position[3];
  double target[3];
  double up[3];
  double fov_y_deg;
  uint32_t width;
  uint32_t height;
  double near_plane;
  double far_plane;
} LavaCamera;

/*
 Camera pose for server-blend packets: translation and an `(x, y, z, w)`
 quaternion.
 */
typedef struct LavaPose {
  float translation[3];
  float rotation[4];
} LavaPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failure on this thread, or NULL. The pointer stays
 valid until the next failing call on this thread.
 */
const char *lava_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *lava_version(void);

/*
 Decodes a `.lava` file from disk into `*out`.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LavaStatus lava_asset_load(const char *path, struct LavaAsset **out);

/*
 Decodes a `.lava` image held in memory into `*out`.

 # Safety
 `bytes` must point to `len` readable bytes; `out` must be writable.
 */
enum LavaStatus lava_asset_decode(const uint8_t *bytes, size_t len, struct LavaAsset **out);

/*
 # Safety
 `asset` must be NULL or a handle from this library not yet freed.
 */
void lava_asset_free(struct LavaAsset *asset);

/*
 # Safety
 `asset` must be a live handle; `out` must be writable.
 */
enum LavaStatus lava_asset_info(const struct LavaAsset *asset, struct LavaAssetInfo *out);

/*
 Renders one frame for `param_count` expression values into `*out`.

 # Safety
 `asset` must be a live handle, `params` must point to `param_count`
 floats, `cam` must be readable and `out` writable.
 */
enum LavaStatus lava_render(const struct LavaAsset *asset,
                            const float *params,
                            size_t param_count,
                            const struct LavaCamera *cam,
                            enum LavaBlendMode mode,
                            struct LavaFrame **out);

/*
 # Safety
 `frame` must be NULL or a handle from this library not yet freed.
 */
void lava_frame_free(struct LavaFrame *frame);

/*
 Writes the frame size; either pointer may be NULL.

 # Safety
 `frame` must be a live handle.
 */
enum LavaStatus lava_frame_size(const struct LavaFrame *frame, uint32_t *width, uint32_t *height);

/*
 Copies the row-major RGB8 pixels (`width * height * 3` bytes).

 # Safety
 `frame` must be a live handle; `buf` must hold `len` writable bytes.
 */
enum LavaStatus lava_frame_copy_rgb(const struct LavaFrame *frame, uint8_t *buf, size_t len);

/*
 Copies the per-pixel residual transmittance (`width * height` floats).

 # Safety
 `frame` must be a live handle; `buf` must hold `len` writable floats.
 */
enum LavaStatus lava_frame_copy_transmittance(const struct LavaFrame *frame,
                                              float *buf,
                                              size_t len);

/*
 Encodes a frame packet into `buf`; `*written` receives its length.
 `pose` may be NULL.

 # Safety
 `params` must point to `param_count` floats, `buf` to `len` writable
 bytes, and `written` must be writable.
 */
enum LavaStatus lava_encode_frame_packet(uint32_t frame_index,
                                         const float *params,
                                         size_t param_count,
                                         const struct LavaPose *pose,
                                         uint8_t *buf,
                                         size_t len,
                                         size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAVA_H */
