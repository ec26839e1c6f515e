/* C interface for the cad library. Maintained by hand; keep in sync with
 * src/lib.rs. Link against libcad_ffi (cdylib or staticlib). */

#ifndef CAD_H
#define CAD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every fallible function. */
#define CAD_OK 0
#define CAD_ERR_INVALID_ARG 1
#define CAD_ERR_IO 2
#define CAD_ERR_CONTRACT 3

/* Guidance modes accepted by cad_model_sample. */
#define CAD_GUIDANCE_NONE 0
#define CAD_GUIDANCE_CFG 1
#define CAD_GUIDANCE_CA_CFG 2

/* Opaque handle to a trained model plus its input standardizer. */
typedef struct CadModel CadModel;

/* Message for the most recent error on the calling thread. The pointer
 * stays valid until the next failing call on the same thread. */
const char *cad_last_error(void);

/* Library version, e.g. "0.1.0". Static storage. */
const char *cad_version(void);

/* Largest valid label-error probability, (N - 1) / N. Requires
 * n_classes >= 2. */
int cad_alpha_max(size_t n_classes, double *out);

/* Normalized entropy of the symmetric label-flip channel with error
 * probability alpha in [0, (N - 1) / N]. */
int cad_entropy_of_alpha(double alpha, size_t n_classes, double *out);

/* Inverse of cad_entropy_of_alpha by bisection to tolerance tol > 0.
 * u must lie in [0, 1]. */
int cad_invert_entropy(double u, size_t n_classes, double tol, double *out);

/* Piecewise-linear target-entropy CDF with breakpoint (kappa, beta).
 * t in [0, 1]; beta and kappa strictly inside (0, 1). */
int cad_target_entropy_cdf(double t, double beta, double kappa, double *out);

/* Load a checkpoint written by the cad CLI (the .ckpt files under
 * checkpoints/). Returns NULL on failure; see cad_last_error. */
CadModel *cad_model_load(const char *path);

/* Release a handle returned by cad_model_load. NULL is a no-op. */
void cad_model_free(CadModel *handle);

/* Number of classes the model was trained on, or 0 for NULL. */
size_t cad_model_n_classes(const CadModel *handle);

/* Draw n samples in data space. labels has n entries, each in
 * [0, n_classes); out_xy receives 2*n doubles, (x0, x1) per sample.
 * steps >= 1 sampler steps; coherence and eta in [0, 1]; eta 0 is DDIM,
 * eta 1 is DDPM. guidance_mode is one of the CAD_GUIDANCE_* constants
 * and omega >= 0 is the guidance rate (ignored when mode is NONE). */
int cad_model_sample(const CadModel *handle, size_t n, size_t steps,
                     const size_t *labels, double coherence, double eta,
                     int guidance_mode, double omega, uint64_t seed,
                     double *out_xy);

/* Mean pairwise distance between class condition embeddings at
 * coherence 0 divided by the same quantity at coherence 1. Small values
 * mean the low-coherence embeddings have collapsed together. */
int cad_model_collapse_ratio(const CadModel *handle, double *out);

#ifdef __cplusplus
}
#endif

#endif /* CAD_H */
