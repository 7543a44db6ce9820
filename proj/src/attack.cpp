#include "attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "error.hpp"
#include "transforms.hpp"

namespace gridpure {

void AttackConfig::validate() const {
  if (!(step > 0.0) || !(step <= budget) || !(budget < 1.0))
    fail(ErrorKind::invalid_argument, "attack config: need 0 < step <= budget < 1");
  if (n_steps < 0) fail(ErrorKind::invalid_argument, "attack config: n_steps must be >= 0");
  if (n_mc < 1) fail(ErrorKind::invalid_argument, "attack config: n_mc must be >= 1");
  if (!(adaptive_p >= 0.0 && adaptive_p <= 1.0))
    fail(ErrorKind::invalid_argument, "attack config: adaptive_p must be in [0,1]");
  if (t_range.lo < 1 || t_range.hi < t_range.lo)
    fail(ErrorKind::invalid_argument, "attack config: bad timestep range");
}

std::vector<EotTransform> default_eot_transforms() {
  EotTransform identity;
  EotTransform blur;
  blur.kind = EotTransform::Kind::blur;
  EotTransform brightness;
  brightness.kind = EotTransform::Kind::brightness;
  EotTransform noise;
  noise.kind = EotTransform::Kind::noise;
  return {identity, blur, brightness, noise};
}

std::vector<EotTransform> parse_eot_spec(const std::string& spec) {
  std::vector<EotTransform> out;
  std::istringstream ss(spec);
  std::string entry;
  while (std::getline(ss, entry, ',')) {
    if (entry.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream es(entry);
    std::string f;
    while (std::getline(es, f, ':')) fields.push_back(f);
    EotTransform t;
    try {
      if (fields[0] == "identity" && fields.size() == 1) {
        t.kind = EotTransform::Kind::identity;
      } else if (fields[0] == "blur" && fields.size() == 3) {
        t.kind = EotTransform::Kind::blur;
        t.kernel = std::stoi(fields[1]);
        t.sigma = std::stod(fields[2]);
        if (t.kernel < 1 || t.kernel % 2 == 0 || !(t.sigma > 0.0)) throw std::invalid_argument("blur");
      } else if (fields[0] == "brightness" && fields.size() == 3) {
        t.kind = EotTransform::Kind::brightness;
        t.lo = std::stod(fields[1]);
        t.hi = std::stod(fields[2]);
        if (!(t.lo > 0.0 && t.hi >= t.lo)) throw std::invalid_argument("brightness");
      } else if (fields[0] == "noise" && fields.size() == 2) {
        t.kind = EotTransform::Kind::noise;
        t.noise_sigma = std::stod(fields[1]);
        if (!(t.noise_sigma >= 0.0)) throw std::invalid_argument("noise");
      } else {
        throw std::invalid_argument(fields[0]);
      }
    } catch (const std::exception&) {
      fail(ErrorKind::invalid_argument, "bad transform spec entry: " + entry);
    }
    out.push_back(t);
  }
  if (out.empty()) fail(ErrorKind::invalid_argument, "empty transform spec");
  return out;
}

namespace {

struct SampledTransform {
  const EotTransform* spec = nullptr;
  double factor = 1.0;             // brightness
  std::vector<double> noise;       // additive noise realization
};

SampledTransform sample_transform(const std::vector<EotTransform>& set, RngState& rng, std::size_t n) {
  SampledTransform s;
  const std::size_t idx = static_cast<std::size_t>(rng.next_below(set.size()));
  s.spec = &set[idx];
  switch (s.spec->kind) {
    case EotTransform::Kind::brightness:
      s.factor = s.spec->lo + (s.spec->hi - s.spec->lo) * rng.next_double();
      break;
    case EotTransform::Kind::noise:
      s.noise = sample_gaussian(rng, n);
      break;
    default:
      break;
  }
  return s;
}

ImageBuffer apply_transform(const SampledTransform& s, const ImageBuffer& x) {
  switch (s.spec->kind) {
    case EotTransform::Kind::identity:
      return x;
    case EotTransform::Kind::blur:
      return gaussian_blur(x, s.spec->kernel, s.spec->sigma);
    case EotTransform::Kind::brightness: {
      ImageBuffer y = x;
      for (double& v : y.data) v *= s.factor;
      return y;
    }
    case EotTransform::Kind::noise: {
      ImageBuffer y = x;
      for (std::size_t j = 0; j < y.data.size(); ++j) y.data[j] += s.spec->noise_sigma * s.noise[j];
      return y;
    }
  }
  fail(ErrorKind::invalid_argument, "unknown transform");
}

ImageBuffer transform_vjp(const SampledTransform& s, const ImageBuffer& v) {
  switch (s.spec->kind) {
    case EotTransform::Kind::identity:
    case EotTransform::Kind::noise:
      return v;
    case EotTransform::Kind::blur:
      return gaussian_blur_vjp(v, s.spec->kernel, s.spec->sigma);
    case EotTransform::Kind::brightness: {
      ImageBuffer out = v;
      for (double& e : out.data) e *= s.factor;
      return out;
    }
  }
  fail(ErrorKind::invalid_argument, "unknown transform");
}

// Shared PGD loop over delta. Draw sampling is identical for every method:
// per Monte Carlo draw one timestep, one noise field, one transform index
// (plus its parameters). The chain coin and chain noise live on a separate
// substream so enabling the adaptive path does not perturb the draw stream.
ImageBuffer attack_delta_loop(const ImageBuffer& x, ImageBuffer delta, const AttackConfig& cfg,
                              const std::vector<EotTransform>& transforms, bool use_chain,
                              const DenoiserBackend& backend, const NoiseSchedule& sched, RngState rng,
                              AttackTrace* trace) {
  if (!backend.differentiable())
    fail(ErrorKind::gradient_unavailable, "attack requires a differentiable backend");
  cfg.validate();
  if (cfg.t_range.hi > sched.t_total) fail(ErrorKind::invalid_argument, "attack range outside schedule");
  if (use_chain && !cfg.purify_chain) fail(ErrorKind::invalid_argument, "adaptive attack requires purify_chain");

  RngState loop_rng = rng.substream(1);
  RngState chain_rng = rng.substream(2);
  const std::size_t n = x.size();
  const double rho = cfg.budget;

  for (int step = 0; step < cfg.n_steps; ++step) {
    bool chained = false;
    if (use_chain && chain_rng.next_double() < cfg.adaptive_p) chained = true;

    std::vector<LossDraw> draws(cfg.n_mc);
    std::vector<SampledTransform> sampled(cfg.n_mc);
    for (int d = 0; d < cfg.n_mc; ++d) {
      draws[d].t = cfg.t_range.lo +
                   static_cast<int>(loop_rng.next_below(static_cast<std::uint64_t>(cfg.t_range.hi - cfg.t_range.lo + 1)));
      draws[d].eps = sample_gaussian(loop_rng, n);
      sampled[d] = sample_transform(transforms, loop_rng, n);
    }

    ImageBuffer adv = lincomb(1.0, x, 1.0, delta);
    ImageBuffer grad(x.height, x.width, x.channels);
    if (chained) {
      PurifyChainSpec chain;
      chain.t_pure = cfg.purify_chain->first;
      chain.substeps = cfg.purify_chain->second;
      chain.eps_pure = sample_gaussian(chain_rng, n);
      grad = loss_grad_input(backend, adv, draws, sched, &chain);
      if (trace) ++trace->chained_steps;
    } else {
      const double inv = 2.0 / (static_cast<double>(n) * static_cast<double>(cfg.n_mc));
      for (int d = 0; d < cfg.n_mc; ++d) {
        const ImageBuffer y = apply_transform(sampled[d], adv);
        const ImageBuffer x_t = forward_diffuse(y, draws[d].t, draws[d].eps, sched);
        const ImageBuffer eps_hat = backend.predict_eps(x_t, draws[d].t, sched);
        ImageBuffer upstream(x.height, x.width, x.channels);
        for (std::size_t j = 0; j < n; ++j) upstream.data[j] = inv * (eps_hat.data[j] - draws[d].eps[j]);
        ImageBuffer v = backend.predict_eps_vjp(x_t, draws[d].t, sched, upstream);
        const double a = sched.sqrt_ab(draws[d].t);
        for (double& e : v.data) e *= a;
        v = transform_vjp(sampled[d], v);
        for (std::size_t j = 0; j < n; ++j) grad.data[j] += v.data[j];
      }
    }

    for (std::size_t j = 0; j < n; ++j) {
      const double g = grad.data[j];
      const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      double dj = delta.data[j] + cfg.step * s;
      dj = std::min(rho, std::max(-rho, dj));
      // Keep x + delta inside the image box.
      dj = std::min(1.0 - x.data[j], std::max(-x.data[j], dj));
      delta.data[j] = dj;
    }
  }
  return delta;
}

ImageBuffer finish(const ImageBuffer& x, const ImageBuffer& delta) {
  ImageBuffer out = lincomb(1.0, x, 1.0, delta);
  out.clamp01();
  return out;
}

const std::vector<EotTransform>& identity_only() {
  static const std::vector<EotTransform> set = {EotTransform{}};
  return set;
}

}  // namespace

ImageBuffer pgd_attack(const ImageBuffer& x, const AttackConfig& cfg, const DenoiserBackend& backend,
                       const NoiseSchedule& sched, RngState rng) {
  ImageBuffer delta = attack_delta_loop(x, ImageBuffer(x.height, x.width, x.channels), cfg, identity_only(),
                                        /*use_chain=*/false, backend, sched, rng, nullptr);
  return finish(x, delta);
}

ImageBuffer eot_attack(const ImageBuffer& x, const AttackConfig& cfg, const DenoiserBackend& backend,
                       const NoiseSchedule& sched, RngState rng) {
  const std::vector<EotTransform>& set = cfg.eot.empty() ? identity_only() : cfg.eot;
  ImageBuffer delta = attack_delta_loop(x, ImageBuffer(x.height, x.width, x.channels), cfg, set,
                                        /*use_chain=*/false, backend, sched, rng, nullptr);
  return finish(x, delta);
}

ImageBuffer adaptive_attack(const ImageBuffer& x, const AttackConfig& cfg, const DenoiserBackend& backend,
                            const NoiseSchedule& sched, RngState rng, AttackTrace* trace) {
  if (!cfg.purify_chain) fail(ErrorKind::invalid_argument, "adaptive attack: purify_chain missing");
  ImageBuffer delta = attack_delta_loop(x, ImageBuffer(x.height, x.width, x.channels), cfg, identity_only(),
                                        /*use_chain=*/true, backend, sched, rng, trace);
  return finish(x, delta);
}

std::pair<std::vector<ImageBuffer>, AffineBackend> antidb_attack(const std::vector<ImageBuffer>& images,
                                                                 const AttackConfig& cfg, int inner_steps,
                                                                 int alternations, const NoiseSchedule& sched,
                                                                 RngState rng) {
  if (images.empty()) fail(ErrorKind::invalid_argument, "antidb_attack: empty image set");
  if (alternations < 1) fail(ErrorKind::invalid_argument, "antidb_attack: alternations must be >= 1");
  if (inner_steps < 0) fail(ErrorKind::invalid_argument, "antidb_attack: inner_steps must be >= 0");
  cfg.validate();
  for (const ImageBuffer& img : images) require_same_shape(img, images.front(), "antidb_attack");

  const ImageBuffer& ref = images.front();
  AffineBackend backend = AffineBackend::random_init(ref.height, ref.width, ref.channels, cfg.t_range.lo,
                                                     cfg.t_range.hi, cfg.surrogate_blocks, cfg.surrogate_init,
                                                     rng.substream(0));

  std::vector<ImageBuffer> deltas(images.size(), ImageBuffer(ref.height, ref.width, ref.channels));
  for (int a = 0; a < alternations; ++a) {
    if (inner_steps > 0) {
      std::vector<ImageBuffer> perturbed;
      perturbed.reserve(images.size());
      for (std::size_t i = 0; i < images.size(); ++i) perturbed.push_back(finish(images[i], deltas[i]));
      backend = train_affine(std::move(backend), perturbed, inner_steps, cfg.inner_lr,
                             rng.substream(1 + 2 * static_cast<std::uint64_t>(a)), sched, cfg.t_range);
    }
    const RngState epoch_rng = rng.substream(2 + 2 * static_cast<std::uint64_t>(a));
    for (std::size_t i = 0; i < images.size(); ++i)
      deltas[i] = attack_delta_loop(images[i], std::move(deltas[i]), cfg, identity_only(), false, backend, sched,
                                    epoch_rng.substream(i), nullptr);
  }

  std::vector<ImageBuffer> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) out.push_back(finish(images[i], deltas[i]));
  return {std::move(out), std::move(backend)};
}

ParamGroups param_groups(const AffineBackend& backend) {
  // Recover each block's covered timestep range for the group label.
  const int nb = static_cast<int>(backend.blocks().size());
  std::vector<int> first(nb, -1), last(nb, -1);
  for (int t = backend.t_lo(); t <= backend.t_hi(); ++t) {
    const int b = backend.block_of(t);
    if (first[b] < 0) first[b] = t;
    last[b] = t;
  }
  ParamGroups groups;
  groups.reserve(nb);
  for (int b = 0; b < nb; ++b) {
    ParamGroup g;
    g.name = "t" + std::to_string(first[b]) + "-" + std::to_string(last[b]);
    g.tensors = {backend.blocks()[b].a, backend.blocks()[b].b};
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<std::pair<std::string, double>> param_rel_diff(const ParamGroups& clean, const ParamGroups& adv) {
  if (clean.size() != adv.size()) fail(ErrorKind::invalid_argument, "param_rel_diff: group count mismatch");
  std::vector<std::pair<std::string, double>> out;
  out.reserve(clean.size());
  for (std::size_t g = 0; g < clean.size(); ++g) {
    if (clean[g].name != adv[g].name) fail(ErrorKind::invalid_argument, "param_rel_diff: group name mismatch");
    if (clean[g].tensors.size() != adv[g].tensors.size())
      fail(ErrorKind::invalid_argument, "param_rel_diff: tensor count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < clean[g].tensors.size(); ++i) {
      require_same_shape(clean[g].tensors[i], adv[g].tensors[i], "param_rel_diff");
      const double clean_norm = std::sqrt(squared_norm(clean[g].tensors[i]));
      if (clean_norm == 0.0)
        fail(ErrorKind::invalid_argument, "param_rel_diff: undefined relative difference (zero-norm group)");
      long double d2 = 0.0L;
      for (std::size_t j = 0; j < clean[g].tensors[i].data.size(); ++j) {
        const long double d = static_cast<long double>(adv[g].tensors[i].data[j]) - clean[g].tensors[i].data[j];
        d2 += d * d;
      }
      acc += static_cast<double>(std::sqrt(static_cast<double>(d2))) / clean_norm;
    }
    out.emplace_back(clean[g].name, acc / clean[g].tensors.size());
  }
  return out;
}

}  // namespace gridpure
