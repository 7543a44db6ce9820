#pragma once

#include <utility>
#include <vector>

#include "denoiser.hpp"
#include "image.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace gridpure {

struct TimestepRange {
  int lo = 1;
  int hi = 1;
};

// Default timestep window for attack/loss sampling: the low tenth of the
// schedule, where protective perturbations live as high-frequency noise.
TimestepRange default_attack_range(const NoiseSchedule& sched);

// Closed-form forward diffusion x_t = sqrt(ab_t) x0 + sqrt(1-ab_t) eps.
// The caller supplies eps; the output is not clamped.
ImageBuffer forward_diffuse(const ImageBuffer& x0, int t, const std::vector<double>& eps,
                            const NoiseSchedule& sched);

// Uniformly respaced descending timesteps t_from = tau_n > ... > tau_0 = 0.
std::vector<int> ddim_timesteps(int t_from, int substeps);

// Deterministic reverse sampling (eta = 0): each step forms
// x0^ = (x_t - sqrt(1-ab_t) eps^) / sqrt(ab_t) and re-noises it to the next
// timestep with the same eps^. Output clamped to [0,1].
ImageBuffer ddim_reverse(const ImageBuffer& x_t, int t_from, int substeps, const DenoiserBackend& backend,
                         const NoiseSchedule& sched);

struct LossEstimate {
  double value = 0.0;  // mean of per_sample values
  int num_samples = 0;
  std::vector<std::pair<int, double>> per_sample;  // (t, per-component squared error)
};

// Monte Carlo estimate of E_{eps,t} ||eps - eps^(x_t, t)||^2 / (H*W*C),
// t uniform over t_range, eps standard normal. Deterministic given rng.
LossEstimate diffusion_loss(const DenoiserBackend& backend, const ImageBuffer& x, int n_samples, RngState rng,
                            const NoiseSchedule& sched, TimestepRange t_range);

struct LossDraw {
  int t = 1;
  std::vector<double> eps;
};

// Optional purification prefix for gradient evaluation: the input runs
// through forward_diffuse(t_pure, eps_pure) and a DDIM reverse with the given
// substep count before the loss draws are applied. eps_pure is fixed per call
// so the whole map stays deterministic and finite-difference checkable.
struct PurifyChainSpec {
  int t_pure = 10;
  int substeps = 10;
  std::vector<double> eps_pure;
};

// Exact gradient of the mean loss over fixed draws with respect to the input
// image, differentiating through the closed-form backend and, when chain is
// set, through every DDIM substep and the trailing clamp.
ImageBuffer loss_grad_input(const DenoiserBackend& backend, const ImageBuffer& x,
                            const std::vector<LossDraw>& draws, const NoiseSchedule& sched,
                            const PurifyChainSpec* chain = nullptr);

// Plain gradient descent on the diffusion loss with respect to the affine
// parameters; one (t, eps) draw per step, shared across the batch.
AffineBackend train_affine(AffineBackend backend, const std::vector<ImageBuffer>& images, int steps, double lr,
                           RngState rng, const NoiseSchedule& sched, TimestepRange t_range);

// Same descent with a fixed draw list (cycled), used to compare against the
// closed-form least-squares optimum.
AffineBackend train_affine_fixed(AffineBackend backend, const std::vector<ImageBuffer>& images,
                                 const std::vector<LossDraw>& draws, int steps, double lr,
                                 const NoiseSchedule& sched);

}  // namespace gridpure
