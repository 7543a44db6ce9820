#include "gridpure.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "attack.hpp"
#include "denoiser.hpp"
#include "diffusion.hpp"
#include "error.hpp"
#include "frame.hpp"
#include "image.hpp"
#include "metrics.hpp"
#include "png_io.hpp"
#include "purify.hpp"
#include "schedule.hpp"
#include "transforms.hpp"

using namespace gridpure;

struct gp_image {
  ImageBuffer buf;
};

struct gp_schedule {
  NoiseSchedule sched;
};

enum class BackendTag { oracle, affine, external };

struct gp_backend {
  BackendTag tag;
  std::unique_ptr<DenoiserBackend> impl;
  const AffineBackend* affine() const {
    return tag == BackendTag::affine ? static_cast<const AffineBackend*>(impl.get()) : nullptr;
  }
};

namespace {

thread_local std::string g_last_error = "no error";

gp_status status_of(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::invalid_argument:
      return GP_ERR_INVALID_ARGUMENT;
    case ErrorKind::io:
    case ErrorKind::format:
      return GP_ERR_IO;
    case ErrorKind::backend:
      return GP_ERR_BACKEND;
    case ErrorKind::gradient_unavailable:
      return GP_ERR_GRADIENT;
  }
  return GP_ERR_INTERNAL;
}

template <typename Fn>
gp_status guarded(Fn&& fn) {
  try {
    fn();
    return GP_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return GP_ERR_INTERNAL;
  }
}

gp_status invalid(const char* msg) {
  g_last_error = msg;
  return GP_ERR_INVALID_ARGUMENT;
}

AttackConfig to_attack_config(const gp_attack_config& c) {
  AttackConfig cfg;
  cfg.budget = c.budget;
  cfg.step = c.step;
  cfg.n_steps = c.n_steps;
  cfg.n_mc = c.n_mc;
  cfg.t_range = TimestepRange{c.t_lo, c.t_hi};
  cfg.adaptive_p = c.adaptive_p;
  if (c.chain_t_pure > 0) cfg.purify_chain = std::make_pair(c.chain_t_pure, c.chain_substeps);
  if (c.eot_spec && *c.eot_spec) cfg.eot = parse_eot_spec(c.eot_spec);
  cfg.inner_lr = c.inner_lr;
  return cfg;
}

PurifyConfig to_purify_config(const gp_purify_config& c) {
  PurifyConfig cfg;
  cfg.t_pure = c.t_pure;
  cfg.substeps = c.substeps;
  cfg.iterations = c.iterations;
  cfg.gamma = c.gamma;
  cfg.grid_size = c.grid_size;
  cfg.with_corner = c.with_corner != 0;
  return cfg;
}

}  // namespace

extern "C" {

const char* gp_version(void) { return "1.0.0"; }

const char* gp_last_error(void) { return g_last_error.c_str(); }

/* ------------------------------------------------------------------ images */

gp_status gp_image_create(int height, int width, int channels, gp_image** out) {
  if (!out) return invalid("gp_image_create: out is NULL");
  return guarded([&] { *out = new gp_image{ImageBuffer(height, width, channels)}; });
}

gp_status gp_image_clone(const gp_image* img, gp_image** out) {
  if (!img || !out) return invalid("gp_image_clone: NULL argument");
  return guarded([&] { *out = new gp_image{img->buf}; });
}

void gp_image_free(gp_image* img) { delete img; }

int gp_image_height(const gp_image* img) { return img ? img->buf.height : 0; }
int gp_image_width(const gp_image* img) { return img ? img->buf.width : 0; }
int gp_image_channels(const gp_image* img) { return img ? img->buf.channels : 0; }

const double* gp_image_data(const gp_image* img) { return img ? img->buf.data.data() : nullptr; }
double* gp_image_data_mut(gp_image* img) { return img ? img->buf.data.data() : nullptr; }

gp_status gp_image_load_png(const char* path, gp_image** out) {
  if (!path || !out) return invalid("gp_image_load_png: NULL argument");
  return guarded([&] { *out = new gp_image{load_image(path)}; });
}

gp_status gp_image_save_png(const gp_image* img, const char* path) {
  if (!img || !path) return invalid("gp_image_save_png: NULL argument");
  return guarded([&] { save_image(img->buf, path); });
}

gp_status gp_frame_encode(const gp_image* img, int timestep, uint8_t** out_bytes, size_t* out_size) {
  if (!img || !out_bytes || !out_size) return invalid("gp_frame_encode: NULL argument");
  return guarded([&] {
    const std::vector<std::uint8_t> bytes = encode_frame(img->buf, timestep);
    uint8_t* mem = static_cast<uint8_t*>(std::malloc(bytes.size()));
    if (!mem) fail(ErrorKind::io, "out of memory");
    std::memcpy(mem, bytes.data(), bytes.size());
    *out_bytes = mem;
    *out_size = bytes.size();
  });
}

gp_status gp_frame_decode(const uint8_t* bytes, size_t size, gp_image** out, int* timestep_out) {
  if (!bytes || !out) return invalid("gp_frame_decode: NULL argument");
  return guarded([&] { *out = new gp_image{decode_frame(bytes, size, timestep_out)}; });
}

void gp_buffer_free(uint8_t* bytes) { std::free(bytes); }

/* --------------------------------------------------------------- schedules */

gp_status gp_schedule_create(int t_total, double beta_start, double beta_end, gp_schedule** out) {
  if (!out) return invalid("gp_schedule_create: out is NULL");
  return guarded([&] { *out = new gp_schedule{build_schedule(t_total, beta_start, beta_end)}; });
}

void gp_schedule_free(gp_schedule* sched) { delete sched; }

int gp_schedule_steps(const gp_schedule* sched) { return sched ? sched->sched.t_total : 0; }

/* ---------------------------------------------------------------- backends */

gp_status gp_backend_oracle_create(const gp_image* const* dataset, size_t count, gp_backend** out) {
  if (!dataset || !out) return invalid("gp_backend_oracle_create: NULL argument");
  return guarded([&] {
    std::vector<ImageBuffer> images;
    images.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      if (!dataset[i]) fail(ErrorKind::invalid_argument, "oracle dataset contains NULL");
      images.push_back(dataset[i]->buf);
    }
    *out = new gp_backend{BackendTag::oracle, std::make_unique<OracleBackend>(std::move(images))};
  });
}

gp_status gp_backend_oracle_from_dir(const char* dir, gp_backend** out) {
  if (!dir || !out) return invalid("gp_backend_oracle_from_dir: NULL argument");
  return guarded([&] {
    namespace fs = std::filesystem;
    std::vector<fs::path> paths;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") paths.push_back(entry.path());
    }
    if (ec) fail(ErrorKind::io, std::string("cannot list ") + dir + ": " + ec.message());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) fail(ErrorKind::invalid_argument, std::string("no PNG files under ") + dir);
    std::vector<ImageBuffer> images;
    images.reserve(paths.size());
    for (const fs::path& p : paths) images.push_back(load_image(p.string()));
    *out = new gp_backend{BackendTag::oracle, std::make_unique<OracleBackend>(std::move(images))};
  });
}

gp_status gp_backend_affine_create(int height, int width, int channels, int t_lo, int t_hi, int n_blocks,
                                   double init_scale, uint64_t seed, uint64_t stream, gp_backend** out) {
  if (!out) return invalid("gp_backend_affine_create: out is NULL");
  return guarded([&] {
    AffineBackend backend =
        init_scale == 0.0
            ? AffineBackend(height, width, channels, t_lo, t_hi, n_blocks)
            : AffineBackend::random_init(height, width, channels, t_lo, t_hi, n_blocks, init_scale,
                                         RngState(seed, stream));
    *out = new gp_backend{BackendTag::affine, std::make_unique<AffineBackend>(std::move(backend))};
  });
}

gp_status gp_backend_affine_save(const gp_backend* backend, const char* path) {
  if (!backend || !path) return invalid("gp_backend_affine_save: NULL argument");
  if (!backend->affine()) return invalid("gp_backend_affine_save: backend is not affine");
  return guarded([&] { backend->affine()->save(path); });
}

gp_status gp_backend_affine_load(const char* path, gp_backend** out) {
  if (!path || !out) return invalid("gp_backend_affine_load: NULL argument");
  return guarded([&] {
    *out = new gp_backend{BackendTag::affine, std::make_unique<AffineBackend>(AffineBackend::load(path))};
  });
}

gp_status gp_backend_external_create(const char* command, int timeout_ms, gp_backend** out) {
  if (!command || !out) return invalid("gp_backend_external_create: NULL argument");
  return guarded([&] {
    *out = new gp_backend{BackendTag::external, std::make_unique<ExternalBackend>(command, timeout_ms)};
  });
}

void gp_backend_free(gp_backend* backend) { delete backend; }

int gp_backend_differentiable(const gp_backend* backend) {
  return backend && backend->impl->differentiable() ? 1 : 0;
}

gp_status gp_predict_eps(const gp_backend* backend, const gp_image* x_t, int t, const gp_schedule* sched,
                         gp_image** out) {
  if (!backend || !x_t || !sched || !out) return invalid("gp_predict_eps: NULL argument");
  return guarded([&] { *out = new gp_image{backend->impl->predict_eps(x_t->buf, t, sched->sched)}; });
}

/* --------------------------------------------------------------- diffusion */

gp_status gp_forward_diffuse(const gp_image* x0, int t, const gp_schedule* sched, uint64_t seed,
                             uint64_t stream, gp_image** out) {
  if (!x0 || !sched || !out) return invalid("gp_forward_diffuse: NULL argument");
  return guarded([&] {
    RngState rng(seed, stream);
    const std::vector<double> eps = sample_gaussian(rng, x0->buf.size());
    *out = new gp_image{forward_diffuse(x0->buf, t, eps, sched->sched)};
  });
}

gp_status gp_ddim_reverse(const gp_image* x_t, int t_from, int substeps, const gp_backend* backend,
                          const gp_schedule* sched, gp_image** out) {
  if (!x_t || !backend || !sched || !out) return invalid("gp_ddim_reverse: NULL argument");
  return guarded(
      [&] { *out = new gp_image{ddim_reverse(x_t->buf, t_from, substeps, *backend->impl, sched->sched)}; });
}

gp_status gp_eps_loss(const gp_backend* backend, const gp_image* x, int n_samples, uint64_t seed,
                      uint64_t stream, const gp_schedule* sched, int t_lo, int t_hi, double* out_value) {
  if (!backend || !x || !sched || !out_value) return invalid("gp_eps_loss: NULL argument");
  return guarded([&] {
    const LossEstimate est = diffusion_loss(*backend->impl, x->buf, n_samples, RngState(seed, stream),
                                            sched->sched, TimestepRange{t_lo, t_hi});
    *out_value = est.value;
  });
}

/* ------------------------------------------------------------ purification */

void gp_purify_config_default(gp_purify_config* cfg) {
  if (!cfg) return;
  cfg->t_pure = 10;
  cfg->substeps = 10;
  cfg->iterations = 10;
  cfg->gamma = 0.1;
  cfg->grid_size = 256;
  cfg->with_corner = 1;
}

gp_status gp_diffpure(const gp_image* x, int t_pure, int substeps, const gp_backend* backend,
                      const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out) {
  if (!x || !backend || !sched || !out) return invalid("gp_diffpure: NULL argument");
  return guarded([&] {
    RngState rng(seed, stream);
    *out = new gp_image{diffpure(x->buf, t_pure, substeps, *backend->impl, sched->sched, rng)};
  });
}

gp_status gp_gdp(const gp_image* x, const gp_purify_config* cfg, const gp_backend* backend,
                 const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out) {
  if (!x || !cfg || !backend || !sched || !out) return invalid("gp_gdp: NULL argument");
  return guarded([&] {
    *out = new gp_image{gdp(x->buf, to_purify_config(*cfg), *backend->impl, sched->sched, RngState(seed, stream))};
  });
}

gp_status gp_gridpure(const gp_image* x, const gp_purify_config* cfg, const gp_backend* backend,
                      const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out) {
  if (!x || !cfg || !backend || !sched || !out) return invalid("gp_gridpure: NULL argument");
  return guarded([&] {
    *out = new gp_image{
        gridpure::gridpure(x->buf, to_purify_config(*cfg), *backend->impl, sched->sched, RngState(seed, stream))};
  });
}

/* ----------------------------------------------------------------- attacks */

void gp_attack_config_default(gp_attack_config* cfg, const gp_schedule* sched) {
  if (!cfg) return;
  cfg->budget = 8.0 / 255.0;
  cfg->step = 2.0 / 255.0;
  cfg->n_steps = 100;
  cfg->n_mc = 4;
  cfg->t_lo = 1;
  cfg->t_hi = sched ? std::max(1, sched->sched.t_total / 10) : 100;
  cfg->adaptive_p = 0.2;
  cfg->chain_t_pure = 100;
  cfg->chain_substeps = 10;
  cfg->eot_spec = nullptr;
  cfg->inner_lr = 0.5;
  cfg->inner_steps = 50;
  cfg->alternations = 10;
}

gp_status gp_attack_pgd(const gp_image* x, const gp_attack_config* cfg, const gp_backend* backend,
                        const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out) {
  if (!x || !cfg || !backend || !sched || !out) return invalid("gp_attack_pgd: NULL argument");
  return guarded([&] {
    *out = new gp_image{
        pgd_attack(x->buf, to_attack_config(*cfg), *backend->impl, sched->sched, RngState(seed, stream))};
  });
}

gp_status gp_attack_eot(const gp_image* x, const gp_attack_config* cfg, const gp_backend* backend,
                        const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out) {
  if (!x || !cfg || !backend || !sched || !out) return invalid("gp_attack_eot: NULL argument");
  return guarded([&] {
    AttackConfig acfg = to_attack_config(*cfg);
    if (acfg.eot.empty()) acfg.eot = default_eot_transforms();
    *out = new gp_image{eot_attack(x->buf, acfg, *backend->impl, sched->sched, RngState(seed, stream))};
  });
}

gp_status gp_attack_adaptive(const gp_image* x, const gp_attack_config* cfg, const gp_backend* backend,
                             const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out,
                             int* chained_steps_out) {
  if (!x || !cfg || !backend || !sched || !out) return invalid("gp_attack_adaptive: NULL argument");
  return guarded([&] {
    AttackTrace trace;
    *out = new gp_image{adaptive_attack(x->buf, to_attack_config(*cfg), *backend->impl, sched->sched,
                                        RngState(seed, stream), &trace)};
    if (chained_steps_out) *chained_steps_out = trace.chained_steps;
  });
}

gp_status gp_attack_antidb(const gp_image* const* images, size_t count, const gp_attack_config* cfg,
                           const gp_schedule* sched, uint64_t seed, uint64_t stream, gp_image** out_images,
                           gp_backend** out_backend) {
  if (!images || !cfg || !sched || !out_images) return invalid("gp_attack_antidb: NULL argument");
  return guarded([&] {
    std::vector<ImageBuffer> inputs;
    inputs.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      if (!images[i]) fail(ErrorKind::invalid_argument, "antidb image set contains NULL");
      inputs.push_back(images[i]->buf);
    }
    auto [perturbed, backend] = antidb_attack(inputs, to_attack_config(*cfg), cfg->inner_steps,
                                              cfg->alternations, sched->sched, RngState(seed, stream));
    for (size_t i = 0; i < count; ++i) out_images[i] = new gp_image{std::move(perturbed[i])};
    if (out_backend)
      *out_backend = new gp_backend{BackendTag::affine, std::make_unique<AffineBackend>(std::move(backend))};
  });
}

gp_status gp_param_rel_diff(const gp_backend* clean, const gp_backend* adv, gp_group_diff* out,
                            size_t capacity, size_t* count_out) {
  if (!clean || !adv || !out || !count_out) return invalid("gp_param_rel_diff: NULL argument");
  if (!clean->affine() || !adv->affine()) return invalid("gp_param_rel_diff: backends must be affine");
  return guarded([&] {
    const auto diffs = param_rel_diff(param_groups(*clean->affine()), param_groups(*adv->affine()));
    if (diffs.size() > capacity) fail(ErrorKind::invalid_argument, "gp_param_rel_diff: capacity too small");
    for (size_t i = 0; i < diffs.size(); ++i) {
      std::snprintf(out[i].name, sizeof(out[i].name), "%s", diffs[i].first.c_str());
      out[i].value = diffs[i].second;
    }
    *count_out = diffs.size();
  });
}

/* -------------------------------------------------------------- transforms */

gp_status gp_transform_blur(const gp_image* x, int kernel, double sigma, gp_image** out) {
  if (!x || !out) return invalid("gp_transform_blur: NULL argument");
  return guarded([&] { *out = new gp_image{gaussian_blur(x->buf, kernel, sigma)}; });
}

gp_status gp_transform_jpeg(const gp_image* x, int quality, gp_image** out) {
  if (!x || !out) return invalid("gp_transform_jpeg: NULL argument");
  return guarded([&] { *out = new gp_image{jpeg_roundtrip(x->buf, quality)}; });
}

/* ----------------------------------------------------------------- metrics */

gp_status gp_metric_mse(const gp_image* a, const gp_image* b, double* out) {
  if (!a || !b || !out) return invalid("gp_metric_mse: NULL argument");
  return guarded([&] { *out = mse(a->buf, b->buf); });
}

gp_status gp_metric_psnr(const gp_image* a, const gp_image* b, double* out) {
  if (!a || !b || !out) return invalid("gp_metric_psnr: NULL argument");
  return guarded([&] { *out = psnr(a->buf, b->buf); });
}

gp_status gp_metric_ssim(const gp_image* a, const gp_image* b, double* out) {
  if (!a || !b || !out) return invalid("gp_metric_ssim: NULL argument");
  return guarded([&] { *out = ssim(a->buf, b->buf); });
}

} /* extern "C" */
