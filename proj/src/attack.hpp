#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "denoiser.hpp"
#include "diffusion.hpp"
#include "image.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace gridpure {

// Differentiable input transforms sampled per Monte Carlo draw when a
// transform-averaged objective is requested. JPEG is deliberately absent:
// gradients here are exact, not straight-through.
struct EotTransform {
  enum class Kind { identity, blur, brightness, noise };
  Kind kind = Kind::identity;
  int kernel = 7;        // blur
  double sigma = 1.5;    // blur
  double lo = 0.85;      // brightness factor range
  double hi = 1.15;
  double noise_sigma = 0.04;
};

// Spec grammar: comma-separated entries of
//   identity | blur:<kernel>:<sigma> | brightness:<lo>:<hi> | noise:<sigma>
std::vector<EotTransform> parse_eot_spec(const std::string& spec);
std::vector<EotTransform> default_eot_transforms();

struct AttackConfig {
  double budget = 8.0 / 255.0;  // l-infinity bound rho
  double step = 2.0 / 255.0;    // alpha
  int n_steps = 100;
  int n_mc = 4;  // Monte Carlo draws per step
  std::vector<EotTransform> eot;           // empty means identity only
  double adaptive_p = 0.2;                 // probability of the chained gradient
  std::optional<std::pair<int, int>> purify_chain;  // (t_pure, substeps)
  TimestepRange t_range{1, 100};
  // Bi-level attack knobs.
  double inner_lr = 0.5;
  int surrogate_blocks = 4;
  double surrogate_init = 0.1;
  void validate() const;
};

struct AttackTrace {
  int chained_steps = 0;
};

// Sign-gradient ascent on the denoising loss under the l-infinity budget:
// delta <- clip(delta + alpha * sign(g)), then the image box. sign(0) = 0,
// no momentum, no random start. Returns x + delta clamped to [0,1].
ImageBuffer pgd_attack(const ImageBuffer& x, const AttackConfig& cfg, const DenoiserBackend& backend,
                       const NoiseSchedule& sched, RngState rng);

// Same loop, but every draw routes x + delta through a transform sampled from
// cfg.eot (uniformly) before the loss; the gradient chains through it.
ImageBuffer eot_attack(const ImageBuffer& x, const AttackConfig& cfg, const DenoiserBackend& backend,
                       const NoiseSchedule& sched, RngState rng);

// Per step, with probability cfg.adaptive_p the gradient differentiates
// through the purification chain (forward diffuse + DDIM reverse with a fresh
// chain noise draw); otherwise the plain gradient is used. Requires
// cfg.purify_chain. The chain coin and chain noise come from a dedicated
// substream, so adaptive_p = 0 reproduces pgd_attack exactly.
ImageBuffer adaptive_attack(const ImageBuffer& x, const AttackConfig& cfg, const DenoiserBackend& backend,
                            const NoiseSchedule& sched, RngState rng, AttackTrace* trace = nullptr);

// Alternating bi-level attack: each alternation trains the affine surrogate
// on the current perturbed images (inner minimization, inner_steps descent
// steps), then runs one PGD epoch (cfg.n_steps) per image against it (outer
// maximization). Substream layout, which tests may rely on:
//   surrogate init        rng.substream(0)
//   training, round a     rng.substream(1 + 2a)
//   attack, round a, i    rng.substream(2 + 2a).substream(i)
std::pair<std::vector<ImageBuffer>, AffineBackend> antidb_attack(const std::vector<ImageBuffer>& images,
                                                                 const AttackConfig& cfg, int inner_steps,
                                                                 int alternations, const NoiseSchedule& sched,
                                                                 RngState rng);

struct ParamGroup {
  std::string name;
  std::vector<ImageBuffer> tensors;
};
using ParamGroups = std::vector<ParamGroup>;

// One group per timestep block, holding the (a, b) tensors.
ParamGroups param_groups(const AffineBackend& backend);

// Per group, mean over tensors of ||adv - clean||_2 / ||clean||_2.
std::vector<std::pair<std::string, double>> param_rel_diff(const ParamGroups& clean, const ParamGroups& adv);

}  // namespace gridpure
