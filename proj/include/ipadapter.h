/* ipadapter.h — C API for the image-prompt adapter toolkit.
 *
 * The core is a small pixel-space text-to-image diffusion stack with a
 * decoupled cross-attention image-prompt adapter. This header exposes the
 * whole workflow surface behind opaque handles and error codes; the bundled
 * CLI is a thin client of exactly this API.
 *
 * Conventions:
 *   - every function returns ipa_status (IPA_OK == 0 on success);
 *   - on failure, ipa_last_error_code() / ipa_last_error_message() describe
 *     the most recent error in the calling thread;
 *   - images are float buffers of length 3*32*32, channel-major, in [-1,1];
 *   - hints are float buffers of length 32*32 in [0,1];
 *   - strings returned through char** are owned by the caller and must be
 *     released with ipa_string_free().
 */
#ifndef IPADAPTER_H
#define IPADAPTER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ipa_status {
    IPA_OK = 0,
    IPA_ERR_INVALID_ARG = 1,  /* bad parameters, shape mismatches, bad requests */
    IPA_ERR_IO = 2,           /* missing or unreadable files */
    IPA_ERR_FORMAT = 3,       /* corrupt or unsupported containers */
    IPA_ERR_STATE = 4,        /* operation needs a handle state not present */
    IPA_ERR_CONVERGENCE = 5,  /* a training gate was not met */
    IPA_ERR_INTERNAL = 6
} ipa_status;

const char* ipa_status_name(ipa_status status);

/* Detailed error code (e.g. "ShapeMismatch", "FreezeViolation") and message
 * for the last failing call on this thread. */
const char* ipa_last_error_code(void);
const char* ipa_last_error_message(void);

void ipa_string_free(char* s);

/* ---- session: loaded models for sampling and metrics ---- */

typedef struct ipa_session ipa_session;

ipa_session* ipa_session_new(void);
void ipa_session_free(ipa_session* s);

ipa_status ipa_load_encoders(ipa_session* s, const char* path);
ipa_status ipa_load_base(ipa_session* s, const char* path);
/* Composes the adapter with the loaded base (shared weights). A fingerprint
 * mismatch with compatible shapes is allowed and reported via
 * ipa_session_fingerprint_warning(). */
ipa_status ipa_load_adapter(ipa_session* s, const char* path);
ipa_status ipa_load_control(ipa_session* s, const char* path);
int ipa_session_fingerprint_warning(const ipa_session* s);

typedef struct ipa_sample_request {
    const char* caption;        /* NULL or "" for image-only mode */
    const float* image_prompt;  /* NULL or 3*32*32 floats in [-1,1] */
    const float* hint;          /* NULL or 32*32 floats in [0,1] */
    float lambda_weight;        /* image-stream weight, 0 recovers the base model */
    float guidance;             /* classifier-free guidance scale w */
    int steps;                  /* DDIM steps */
    float eta;                  /* DDIM stochasticity, 0 = deterministic */
    uint64_t seed;
} ipa_sample_request;

/* Fills out_image (3*32*32 floats). */
ipa_status ipa_sample_image(ipa_session* s, const ipa_sample_request* req, float* out_image);

/* Cosine similarity of frozen-encoder embeddings. */
ipa_status ipa_clip_image_score(ipa_session* s, const float* image_a, const float* image_b,
                                float* out_score);
ipa_status ipa_clip_text_score(ipa_session* s, const float* image, const char* caption,
                               float* out_score);

/* Deterministic procedural dataset access (images in [-1,1]). */
ipa_status ipa_dataset_example(uint64_t seed, uint64_t index, float* out_image,
                               char** out_caption);

/* ---- workflows: one call per CLI subcommand ----
 *
 * config_json uses the documented keys for each command; missing keys take
 * defaults. Artifacts plus a replayable manifest are written into out_dir;
 * *out_manifest_path (optional) receives the manifest path. */
ipa_status ipa_run_command(const char* command, const char* config_json, const char* out_dir,
                           char** out_manifest_path);

/* Re-runs the command recorded in a manifest into out_dir. */
ipa_status ipa_replay(const char* manifest_path, const char* out_dir,
                      char** out_manifest_path);

/* Container report: metadata JSON, shape table, element counts. */
ipa_status ipa_inspect(const char* path, char** out_text);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* IPADAPTER_H */
