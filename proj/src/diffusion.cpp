#include "diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace gridpure {

TimestepRange default_attack_range(const NoiseSchedule& sched) {
  return TimestepRange{1, std::max(1, sched.t_total / 10)};
}

namespace {

void validate_range(const NoiseSchedule& sched, TimestepRange r) {
  if (r.lo < 1 || r.hi < r.lo || r.hi > sched.t_total)
    fail(ErrorKind::invalid_argument, "timestep range outside schedule");
}

int draw_t(RngState& rng, TimestepRange r) {
  return r.lo + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(r.hi - r.lo + 1)));
}

}  // namespace

ImageBuffer forward_diffuse(const ImageBuffer& x0, int t, const std::vector<double>& eps,
                            const NoiseSchedule& sched) {
  sched.require_step(t);
  if (eps.size() != x0.size()) fail(ErrorKind::invalid_argument, "forward_diffuse: eps length mismatch");
  const double a = sched.sqrt_ab(t);
  const double s = sched.sqrt_one_minus_ab(t);
  ImageBuffer out(x0.height, x0.width, x0.channels);
  for (std::size_t j = 0; j < out.data.size(); ++j) out.data[j] = a * x0.data[j] + s * eps[j];
  return out;
}

std::vector<int> ddim_timesteps(int t_from, int substeps) {
  if (t_from < 1) fail(ErrorKind::invalid_argument, "ddim_timesteps: t_from must be >= 1");
  if (substeps < 1 || substeps > t_from)
    fail(ErrorKind::invalid_argument, "ddim_timesteps: need 1 <= substeps <= t_from");
  std::vector<int> seq(substeps + 1);
  for (int k = 0; k <= substeps; ++k)
    seq[k] = static_cast<int>(static_cast<long long>(t_from) * k / substeps);
  return seq;  // ascending; callers walk it downwards
}

ImageBuffer ddim_reverse(const ImageBuffer& x_t, int t_from, int substeps, const DenoiserBackend& backend,
                         const NoiseSchedule& sched) {
  sched.require_step(t_from);
  const std::vector<int> seq = ddim_timesteps(t_from, substeps);
  ImageBuffer x = x_t;
  for (int k = substeps; k >= 1; --k) {
    const int t_hi = seq[k];
    const int t_lo = seq[k - 1];
    const ImageBuffer eps = backend.predict_eps(x, t_hi, sched);
    const double scale = std::sqrt(sched.ab(t_lo) / sched.ab(t_hi));
    const double noise = sched.sqrt_one_minus_ab(t_lo) - scale * sched.sqrt_one_minus_ab(t_hi);
    for (std::size_t j = 0; j < x.data.size(); ++j) x.data[j] = scale * x.data[j] + noise * eps.data[j];
  }
  x.clamp01();
  return x;
}

LossEstimate diffusion_loss(const DenoiserBackend& backend, const ImageBuffer& x, int n_samples, RngState rng,
                            const NoiseSchedule& sched, TimestepRange t_range) {
  if (n_samples < 1) fail(ErrorKind::invalid_argument, "diffusion_loss: n_samples must be >= 1");
  validate_range(sched, t_range);
  LossEstimate est;
  est.num_samples = n_samples;
  est.per_sample.reserve(n_samples);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  long double total = 0.0L;
  for (int s = 0; s < n_samples; ++s) {
    const int t = draw_t(rng, t_range);
    const std::vector<double> eps = sample_gaussian(rng, x.size());
    const ImageBuffer x_t = forward_diffuse(x, t, eps, sched);
    const ImageBuffer eps_hat = backend.predict_eps(x_t, t, sched);
    long double acc = 0.0L;
    for (std::size_t j = 0; j < eps.size(); ++j) {
      const double r = eps_hat.data[j] - eps[j];
      acc += static_cast<long double>(r) * r;
    }
    const double v = static_cast<double>(acc) * inv_n;
    est.per_sample.emplace_back(t, v);
    total += v;
  }
  est.value = static_cast<double>(total / n_samples);
  return est;
}

namespace {

struct ChainTrace {
  std::vector<int> seq;               // ddim timesteps, ascending
  std::vector<ImageBuffer> states;    // states[k] = input of the step at seq[k], k = substeps..1
  ImageBuffer pre_clamp;
  ImageBuffer output;                 // clamped
};

ChainTrace run_chain(const ImageBuffer& x, const PurifyChainSpec& chain, const DenoiserBackend& backend,
                     const NoiseSchedule& sched) {
  sched.require_step(chain.t_pure);
  if (chain.eps_pure.size() != x.size())
    fail(ErrorKind::invalid_argument, "purify chain: eps_pure length mismatch");
  ChainTrace trace;
  trace.seq = ddim_timesteps(chain.t_pure, chain.substeps);
  trace.states.resize(chain.substeps + 1);
  ImageBuffer cur = forward_diffuse(x, chain.t_pure, chain.eps_pure, sched);
  for (int k = chain.substeps; k >= 1; --k) {
    trace.states[k] = cur;
    const ImageBuffer eps = backend.predict_eps(cur, trace.seq[k], sched);
    const double scale = std::sqrt(sched.ab(trace.seq[k - 1]) / sched.ab(trace.seq[k]));
    const double noise = sched.sqrt_one_minus_ab(trace.seq[k - 1]) - scale * sched.sqrt_one_minus_ab(trace.seq[k]);
    for (std::size_t j = 0; j < cur.data.size(); ++j) cur.data[j] = scale * cur.data[j] + noise * eps.data[j];
  }
  trace.pre_clamp = cur;
  cur.clamp01();
  trace.output = std::move(cur);
  return trace;
}

// Adjoint of one DDIM step at (t_hi -> t_lo) evaluated at recorded state.
ImageBuffer chain_step_vjp(const ImageBuffer& state, int t_hi, int t_lo, const ImageBuffer& v,
                           const DenoiserBackend& backend, const NoiseSchedule& sched) {
  const double scale = std::sqrt(sched.ab(t_lo) / sched.ab(t_hi));
  const double noise = sched.sqrt_one_minus_ab(t_lo) - scale * sched.sqrt_one_minus_ab(t_hi);
  ImageBuffer scaled_v(v.height, v.width, v.channels);
  for (std::size_t j = 0; j < v.data.size(); ++j) scaled_v.data[j] = noise * v.data[j];
  ImageBuffer through_eps = backend.predict_eps_vjp(state, t_hi, sched, scaled_v);
  for (std::size_t j = 0; j < through_eps.data.size(); ++j)
    through_eps.data[j] += scale * v.data[j];
  return through_eps;
}

}  // namespace

ImageBuffer loss_grad_input(const DenoiserBackend& backend, const ImageBuffer& x,
                            const std::vector<LossDraw>& draws, const NoiseSchedule& sched,
                            const PurifyChainSpec* chain) {
  if (!backend.differentiable())
    fail(ErrorKind::gradient_unavailable, "gradient unavailable for external backend");
  if (draws.empty()) fail(ErrorKind::invalid_argument, "loss_grad_input: no draws");

  ChainTrace trace;
  const ImageBuffer* eval_point = &x;
  if (chain) {
    trace = run_chain(x, *chain, backend, sched);
    eval_point = &trace.output;
  }

  const double inv = 2.0 / (static_cast<double>(x.size()) * static_cast<double>(draws.size()));
  ImageBuffer grad(x.height, x.width, x.channels);
  for (const LossDraw& draw : draws) {
    if (draw.eps.size() != x.size()) fail(ErrorKind::invalid_argument, "loss_grad_input: eps length mismatch");
    const ImageBuffer x_t = forward_diffuse(*eval_point, draw.t, draw.eps, sched);
    const ImageBuffer eps_hat = backend.predict_eps(x_t, draw.t, sched);
    ImageBuffer upstream(x.height, x.width, x.channels);
    for (std::size_t j = 0; j < upstream.data.size(); ++j)
      upstream.data[j] = inv * (eps_hat.data[j] - draw.eps[j]);
    const ImageBuffer v = backend.predict_eps_vjp(x_t, draw.t, sched, upstream);
    const double a = sched.sqrt_ab(draw.t);
    for (std::size_t j = 0; j < grad.data.size(); ++j) grad.data[j] += a * v.data[j];
  }
  if (!chain) return grad;

  // Through the clamp (subgradient mask), every DDIM substep, and the
  // forward diffusion that opened the chain.
  for (std::size_t j = 0; j < grad.data.size(); ++j) {
    const double p = trace.pre_clamp.data[j];
    if (p < 0.0 || p > 1.0) grad.data[j] = 0.0;
  }
  for (int k = 1; k <= chain->substeps; ++k)
    grad = chain_step_vjp(trace.states[k], trace.seq[k], trace.seq[k - 1], grad, backend, sched);
  const double a_pure = sched.sqrt_ab(chain->t_pure);
  for (double& g : grad.data) g *= a_pure;
  return grad;
}

namespace {

void affine_descent_step(AffineBackend& backend, const std::vector<ImageBuffer>& images, const LossDraw& draw,
                         double lr, const NoiseSchedule& sched) {
  AffineBackend::Block& blk = backend.blocks()[backend.block_of(draw.t)];
  const std::size_t n = blk.a.size();
  std::vector<double> ga(n, 0.0), gb(n, 0.0);
  const double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(images.size()));
  for (const ImageBuffer& img : images) {
    require_same_shape(img, blk.a, "train_affine");
    const ImageBuffer x_t = forward_diffuse(img, draw.t, draw.eps, sched);
    for (std::size_t j = 0; j < n; ++j) {
      const double r = blk.a.data[j] * x_t.data[j] + blk.b.data[j] - draw.eps[j];
      ga[j] += scale * r * x_t.data[j];
      gb[j] += scale * r;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    blk.a.data[j] -= lr * ga[j];
    blk.b.data[j] -= lr * gb[j];
  }
}

}  // namespace

AffineBackend train_affine(AffineBackend backend, const std::vector<ImageBuffer>& images, int steps, double lr,
                           RngState rng, const NoiseSchedule& sched, TimestepRange t_range) {
  if (steps < 1) fail(ErrorKind::invalid_argument, "train_affine: steps must be >= 1");
  if (!(lr >= 0.0)) fail(ErrorKind::invalid_argument, "train_affine: lr must be non-negative");
  if (images.empty()) fail(ErrorKind::invalid_argument, "train_affine: empty image set");
  validate_range(sched, t_range);
  if (t_range.lo < backend.t_lo() || t_range.hi > backend.t_hi())
    fail(ErrorKind::invalid_argument, "train_affine: range outside backend support");
  const std::size_t n = images.front().size();
  for (int s = 0; s < steps; ++s) {
    LossDraw draw;
    draw.t = draw_t(rng, t_range);
    draw.eps = sample_gaussian(rng, n);
    affine_descent_step(backend, images, draw, lr, sched);
  }
  return backend;
}

AffineBackend train_affine_fixed(AffineBackend backend, const std::vector<ImageBuffer>& images,
                                 const std::vector<LossDraw>& draws, int steps, double lr,
                                 const NoiseSchedule& sched) {
  if (steps < 1) fail(ErrorKind::invalid_argument, "train_affine_fixed: steps must be >= 1");
  if (draws.empty()) fail(ErrorKind::invalid_argument, "train_affine_fixed: no draws");
  if (images.empty()) fail(ErrorKind::invalid_argument, "train_affine_fixed: empty image set");
  for (int s = 0; s < steps; ++s)
    affine_descent_step(backend, images, draws[static_cast<std::size_t>(s) % draws.size()], lr, sched);
  return backend;
}

}  // namespace gridpure
