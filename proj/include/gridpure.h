/*
 * gridpure — grid-iterative diffusion-based purification toolkit.
 *
 * C API over the C++ core: opaque handles, status-code returns, and a
 * thread-local last-error message. All functions return GP_OK on success;
 * out-parameters are written only on success. Handles are freed with their
 * matching gp_*_free function; passing NULL to a free function is a no-op.
 *
 * Images are H x W x C rasters (C = 1 or 3), row-major channel-interleaved,
 * double precision in memory, nominal range [0,1].
 */

#ifndef GRIDPURE_H
#define GRIDPURE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct gp_image gp_image;
typedef struct gp_schedule gp_schedule;
typedef struct gp_backend gp_backend;

typedef enum gp_status {
  GP_OK = 0,
  GP_ERR_INVALID_ARGUMENT = 1, /* bad parameters, shape mismatches */
  GP_ERR_BACKEND = 2,          /* external denoiser process failure */
  GP_ERR_IO = 3,               /* filesystem or file-format failure */
  GP_ERR_GRADIENT = 4,         /* gradient requested from a black-box backend */
  GP_ERR_INTERNAL = 5
} gp_status;

const char* gp_version(void);

/* Message for the most recent failure on this thread; never NULL. */
const char* gp_last_error(void);

/* ------------------------------------------------------------------ images */

gp_status gp_image_create(int height, int width, int channels, gp_image** out);
gp_status gp_image_clone(const gp_image* img, gp_image** out);
void gp_image_free(gp_image* img);

int gp_image_height(const gp_image* img);
int gp_image_width(const gp_image* img);
int gp_image_channels(const gp_image* img);

/* Borrowed pointer to height*width*channels doubles; valid until the image
 * is freed. The mutable variant allows in-place editing. */
const double* gp_image_data(const gp_image* img);
double* gp_image_data_mut(gp_image* img);

/* 8-bit grayscale or RGB PNG; byte v maps to v/255 on load and round(v*255)
 * on save (values must be in [0,1] when saving). */
gp_status gp_image_load_png(const char* path, gp_image** out);
gp_status gp_image_save_png(const gp_image* img, const char* path);

/* Tensor frame: "EPS <h> <w> <c> <t>\n" + h*w*c float32 little-endian.
 * gp_frame_encode allocates via malloc; release with gp_buffer_free. */
gp_status gp_frame_encode(const gp_image* img, int timestep, uint8_t** out_bytes, size_t* out_size);
gp_status gp_frame_decode(const uint8_t* bytes, size_t size, gp_image** out, int* timestep_out);
void gp_buffer_free(uint8_t* bytes);

/* --------------------------------------------------------------- schedules */

/* Linear beta ramp; defaults are (1000, 1e-4, 0.02). */
gp_status gp_schedule_create(int t_total, double beta_start, double beta_end, gp_schedule** out);
void gp_schedule_free(gp_schedule* sched);
int gp_schedule_steps(const gp_schedule* sched);

/* ---------------------------------------------------------------- backends */

/* Exact posterior-mean predictor over a finite dataset (all images must share
 * one shape). The _dir variant loads every *.png under dir, sorted by name. */
gp_status gp_backend_oracle_create(const gp_image* const* dataset, size_t count, gp_backend** out);
gp_status gp_backend_oracle_from_dir(const char* dir, gp_backend** out);

/* Trainable diagonal-affine predictor with n_blocks uniform timestep blocks
 * covering [t_lo, t_hi]. init_scale 0 gives the zero predictor; otherwise
 * parameters start at init_scale * N(0,1) drawn from (seed, stream). */
gp_status gp_backend_affine_create(int height, int width, int channels, int t_lo, int t_hi, int n_blocks,
                                   double init_scale, uint64_t seed, uint64_t stream, gp_backend** out);
gp_status gp_backend_affine_save(const gp_backend* backend, const char* path);
gp_status gp_backend_affine_load(const char* path, gp_backend** out);

/* Out-of-process predictor: one tensor frame is written to the child's stdin
 * and one frame of identical dimensions read back, per prediction. */
gp_status gp_backend_external_create(const char* command, int timeout_ms, gp_backend** out);

void gp_backend_free(gp_backend* backend);
int gp_backend_differentiable(const gp_backend* backend);

gp_status gp_predict_eps(const gp_backend* backend, const gp_image* x_t, int t, const gp_schedule* sched,
                         gp_image** out);

/* --------------------------------------------------------------- diffusion */

/* x_t = sqrt(ab_t) x0 + sqrt(1-ab_t) eps with eps ~ N(0, I) drawn from
 * (seed, stream); output not clamped. */
gp_status gp_forward_diffuse(const gp_image* x0, int t, const gp_schedule* sched, uint64_t seed,
                             uint64_t stream, gp_image** out);

gp_status gp_ddim_reverse(const gp_image* x_t, int t_from, int substeps, const gp_backend* backend,
                          const gp_schedule* sched, gp_image** out);

/* Monte Carlo diffusion loss: mean over n_samples of
 * ||eps - eps^(x_t,t)||^2 / (H*W*C), t uniform in [t_lo, t_hi]. */
gp_status gp_eps_loss(const gp_backend* backend, const gp_image* x, int n_samples, uint64_t seed,
                      uint64_t stream, const gp_schedule* sched, int t_lo, int t_hi, double* out_value);

/* ------------------------------------------------------------ purification */

typedef struct gp_purify_config {
  int t_pure;      /* forward-noise timestep per pass */
  int substeps;    /* DDIM reverse steps per pass */
  int iterations;  /* blend iterations M */
  double gamma;    /* blend weight toward the previous iterate */
  int grid_size;   /* tile size G */
  int with_corner; /* include the corner-composite tile */
} gp_purify_config;

void gp_purify_config_default(gp_purify_config* cfg); /* 10, 10, 10, 0.1, 256, 1 */

gp_status gp_diffpure(const gp_image* x, int t_pure, int substeps, const gp_backend* backend,
                      const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out);
gp_status gp_gdp(const gp_image* x, const gp_purify_config* cfg, const gp_backend* backend,
                 const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out);
gp_status gp_gridpure(const gp_image* x, const gp_purify_config* cfg, const gp_backend* backend,
                      const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out);

/* ----------------------------------------------------------------- attacks */

typedef struct gp_attack_config {
  double budget;       /* l-infinity bound (default 8/255) */
  double step;         /* PGD step (default 2/255) */
  int n_steps;         /* PGD steps (default 100) */
  int n_mc;            /* Monte Carlo draws per step (default 4) */
  int t_lo, t_hi;      /* timestep sampling range (default 1..schedule/10) */
  double adaptive_p;   /* chained-gradient probability (default 0.2) */
  int chain_t_pure;    /* adaptive purification chain (default 100) */
  int chain_substeps;  /* (default 10) */
  const char* eot_spec; /* transform set, e.g.
                           "identity,blur:7:1.5,brightness:0.85:1.15,noise:0.04";
                           NULL means identity only */
  double inner_lr;     /* bi-level: surrogate descent rate (default 0.5) */
  int inner_steps;     /* bi-level: descent steps per alternation (default 50) */
  int alternations;    /* bi-level rounds (default 10) */
} gp_attack_config;

void gp_attack_config_default(gp_attack_config* cfg, const gp_schedule* sched);

gp_status gp_attack_pgd(const gp_image* x, const gp_attack_config* cfg, const gp_backend* backend,
                        const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out);
gp_status gp_attack_eot(const gp_image* x, const gp_attack_config* cfg, const gp_backend* backend,
                        const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out);
/* chained_steps_out (optional) receives the number of PGD steps that used the
 * gradient through the purification chain. */
gp_status gp_attack_adaptive(const gp_image* x, const gp_attack_config* cfg, const gp_backend* backend,
                             const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out,
                             int* chained_steps_out);

/* Bi-level attack over a set of images; writes one perturbed image per input
 * into out_images (caller frees each) and, when out_backend is non-NULL, the
 * final trained surrogate. */
gp_status gp_attack_antidb(const gp_image* const* images, size_t count, const gp_attack_config* cfg,
                           const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out_images,
                           gp_backend** out_backend);

typedef struct gp_group_diff {
  char name[32];
  double value;
} gp_group_diff;

/* Per-block mean of ||adv - clean||_2 / ||clean||_2 over the affine
 * parameter tensors. Both backends must be affine with matching layout. */
gp_status gp_param_rel_diff(const gp_backend* clean, const gp_backend* adv, gp_group_diff* out,
                            size_t capacity, size_t* count_out);

/* -------------------------------------------------------------- transforms */

gp_status gp_transform_blur(const gp_image* x, int kernel, double sigma, gp_image** out);
gp_status gp_transform_jpeg(const gp_image* x, int quality, gp_image** out);

/* ----------------------------------------------------------------- metrics */

gp_status gp_metric_mse(const gp_image* a, const gp_image* b, double* out);
gp_status gp_metric_psnr(const gp_image* a, const gp_image* b, double* out);
gp_status gp_metric_ssim(const gp_image* a, const gp_image* b, double* out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GRIDPURE_H */
