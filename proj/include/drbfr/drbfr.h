/* Copyright 2026 The drbfr Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to drbfr: degradation-representation guided blind face
 * restoration at desk scale.
 *
 * Every fallible call returns a drbfr_status. On failure the message is
 * available from drbfr_last_error() on the calling thread until the next call.
 * Strings returned through char** are owned by the caller and released with
 * drbfr_string_free().
 */
#ifndef DRBFR_DRBFR_H_
#define DRBFR_DRBFR_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DRBFR_API __declspec(dllexport)
#else
#define DRBFR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum drbfr_status {
  DRBFR_OK = 0,
  DRBFR_ERR_ARGUMENT = 1,
  DRBFR_ERR_DECODE = 2,
  DRBFR_ERR_FORMAT = 3,
  DRBFR_ERR_DATA = 4,
  DRBFR_ERR_DEGRADATION = 5,
  DRBFR_ERR_CONFIG = 6,
  DRBFR_ERR_HASH_MISMATCH = 7,
  DRBFR_ERR_IO = 8,
  DRBFR_ERR_USAGE = 9,
  DRBFR_ERR_INTERNAL = 10
} drbfr_status;

typedef struct drbfr_context drbfr_context;
typedef struct drbfr_image drbfr_image;

typedef void (*drbfr_log_fn)(const char* line, void* user);

DRBFR_API const char* drbfr_version(void);
/* Stable machine-readable name, e.g. "configuration_error". */
DRBFR_API const char* drbfr_status_name(drbfr_status status);
/* Message of the last failed call on this thread; "" when none. */
DRBFR_API const char* drbfr_last_error(void);
DRBFR_API void drbfr_string_free(char* s);

/* ---- run context ------------------------------------------------------- */

/* config_path may be NULL for the built-in defaults. */
DRBFR_API drbfr_status drbfr_context_create(const char* config_path, drbfr_context** out);
DRBFR_API void drbfr_context_destroy(drbfr_context* ctx);
DRBFR_API drbfr_status drbfr_context_set_seed(drbfr_context* ctx, uint64_t seed);
DRBFR_API drbfr_status drbfr_context_set_resume(drbfr_context* ctx, int resume);
/* Output root of the next command; NULL or "" restores the command default. */
DRBFR_API drbfr_status drbfr_context_set_out(drbfr_context* ctx, const char* path);
/* stage: "ae" | "drm" | "ldm". */
DRBFR_API drbfr_status drbfr_context_set_checkpoint(drbfr_context* ctx, const char* stage, const char* path);
/* Overlays a JSON object onto the config; unknown keys are rejected. */
DRBFR_API drbfr_status drbfr_context_merge_config(drbfr_context* ctx, const char* json_text);
DRBFR_API drbfr_status drbfr_context_set_log(drbfr_context* ctx, drbfr_log_fn fn, void* user);
/* Effective config (seed override applied) as JSON. */
DRBFR_API drbfr_status drbfr_context_config_json(const drbfr_context* ctx, char** out_json);

/* ---- images ------------------------------------------------------------ */

/* hwc holds height * width * 3 floats in [0, 1]. */
DRBFR_API drbfr_status drbfr_image_create(int height, int width, const float* hwc, drbfr_image** out);
DRBFR_API drbfr_status drbfr_image_load(const char* path, drbfr_image** out);
DRBFR_API void drbfr_image_destroy(drbfr_image* image);
DRBFR_API int drbfr_image_height(const drbfr_image* image);
DRBFR_API int drbfr_image_width(const drbfr_image* image);
DRBFR_API const float* drbfr_image_data(const drbfr_image* image);
DRBFR_API drbfr_status drbfr_image_save_png(const drbfr_image* image, const char* path);

DRBFR_API drbfr_status drbfr_degrade(const drbfr_image* hq, double sigma, double r, double delta, int q,
                                     uint64_t seed, drbfr_image** out);
DRBFR_API drbfr_status drbfr_psnr(const drbfr_image* a, const drbfr_image* b, double* out);
DRBFR_API drbfr_status drbfr_ssim(const drbfr_image* a, const drbfr_image* b, int window, double* out);

/* ---- commands ---------------------------------------------------------- */
/* Each writes its artifacts to disk and returns a JSON summary in *out_json. */

DRBFR_API drbfr_status drbfr_cmd_init_config(const drbfr_context* ctx, const char* path, char** out_json);
DRBFR_API drbfr_status drbfr_cmd_degrade(const drbfr_context* ctx, char** out_json);
DRBFR_API drbfr_status drbfr_cmd_train_drm(const drbfr_context* ctx, char** out_json);
DRBFR_API drbfr_status drbfr_cmd_train_ae(const drbfr_context* ctx, char** out_json);
DRBFR_API drbfr_status drbfr_cmd_train_ldm(const drbfr_context* ctx, char** out_json);
DRBFR_API drbfr_status drbfr_cmd_restore(const drbfr_context* ctx, const char* input, const char* output,
                                         int allow_hash_mismatch, char** out_json);
/* kind: "dr-recon" | "dr-separability" | "restore-metrics" | "ablation". */
DRBFR_API drbfr_status drbfr_cmd_eval(const drbfr_context* ctx, const char* kind, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* DRBFR_DRBFR_H_ */
