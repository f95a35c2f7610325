#include "idmask/masker.hpp"

#include <cmath>
#include <numbers>

#include "idmask/error.hpp"
#include "idmask/kernels.hpp"
#include "idmask/parallel.hpp"
#include "idmask/rng.hpp"

namespace idmask {

void AttackConfig::validate() const {
  if (!std::isfinite(epsilon) || !(epsilon > 0.0)) throw InvalidArgument("attack epsilon must be positive");
  if (!std::isfinite(alpha) || !(alpha > 0.0)) throw InvalidArgument("attack alpha must be positive");
  if (alpha > epsilon) throw InvalidArgument("attack alpha must not exceed epsilon");
  if (iterations == 0) throw InvalidArgument("attack needs at least one iteration");
  if (!std::isfinite(momentum) || momentum < 0.0) throw InvalidArgument("momentum must be nonnegative");
  if (!std::isfinite(gamma) || gamma < 0.0) throw InvalidArgument("gamma must be nonnegative");
  if (kernel) kernel->validate();
}

IdentityMask IdentityMask::between(const Image& protected_image, const Image& source, NormType norm,
                                   double epsilon) {
  PixelArray delta = difference(protected_image, source);
  const double size = norm_of(delta.values(), norm);
  if (size > epsilon + 1e-9) {
    throw InvalidArgument("identity mask norm " + std::to_string(size) + " exceeds budget " +
                          std::to_string(epsilon));
  }
  return IdentityMask(std::move(delta), norm, epsilon);
}

MaskerState initial_state(const ImageBatch& real) {
  std::vector<PixelArray> momentum;
  momentum.reserve(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) momentum.emplace_back(real.shape(), 0.0);
  return MaskerState{real, std::move(momentum), 0, std::vector<SelectionTrace>(real.size())};
}

MaskerState step(const MaskerState& state, std::span<const PixelArray> grads, const ImageBatch& real,
                 const AttackConfig& cfg) {
  const std::size_t n = state.current.size();
  if (grads.size() != n || real.size() != n || state.momentum.size() != n) {
    throw ShapeError("step: gradient, momentum and batch sizes must agree");
  }
  MaskerState next{state.current, state.momentum, state.iteration + 1, state.history};
  std::vector<Image> moved;
  moved.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    require_same_shape(grads[i].shape(), real.shape(), "step");
    double l1 = 0.0;
    for (double v : grads[i].values()) {
      if (!std::isfinite(v)) throw InvalidArgument("step: non-finite gradient");
      l1 += std::abs(v);
    }
    auto& g = next.momentum[i];
    for (double& v : g.values()) v *= cfg.momentum;
    if (l1 > 0.0) kernels::axpy(1.0 / l1, grads[i].values(), g.values());
    moved.push_back(descend_and_project(state.current[i], g, real[i], cfg.norm, cfg.alpha, cfg.epsilon));
  }
  next.current = ImageBatch(std::move(moved));
  return next;
}

namespace {

std::size_t pick_target(const SelectionPolicy& policy, std::size_t iteration, std::size_t item,
                        std::size_t count) {
  switch (policy.mode) {
    case SelectionMode::kFixed:
      return policy.fixed_index;
    case SelectionMode::kCycle:
      return iteration % count;
    case SelectionMode::kRandom: {
      Rng rng(mix_seed(mix_seed(policy.seed, iteration), item));
      return static_cast<std::size_t>(rng.below(count));
    }
    default:
      return 0;
  }
}

ProtectResult run(const ImageBatch& real, const TargetSet& targets, const Embedder& model,
                  const AttackConfig& cfg, const TransformSampler* sampler,
                  const IterationObserver& observer) {
  cfg.validate();
  require_same_shape(real.shape(), targets.shape(), "protect_batch");
  require_same_shape(real.shape(), model.input_shape(), "protect_batch");
  if (cfg.selection.mode == SelectionMode::kFixed && cfg.selection.fixed_index >= targets.size()) {
    throw InvalidArgument("fixed target index out of range");
  }

  const std::size_t n = real.size();
  const EmbeddedTargets embedded(model, targets);
  std::vector<FeatureVec> real_features(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) { real_features[i] = model.embed(real[i]); });

  ObjectiveConfig objective{cfg.gamma, {}};
  if (cfg.gamma != 0.0) objective.kernel = cfg.kernel ? *cfg.kernel : median_heuristic_kernel(real);

  const StepSpec probe{cfg.alpha, cfg.norm, cfg.epsilon};
  const bool greedy = cfg.selection.mode == SelectionMode::kGreedy ||
                      cfg.selection.mode == SelectionMode::kCenter;
  const GainKind gain_kind =
      cfg.selection.mode == SelectionMode::kCenter ? GainKind::kCenter : GainKind::kMax;

  MaskerState state = initial_state(real);
  std::vector<double> loss_history;
  loss_history.reserve(cfg.iterations);

  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    std::vector<std::size_t> chosen(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      chosen[i] = greedy ? select_target(embedded, state.current[i], real[i], real_features[i], probe,
                                         gain_kind)
                               .index
                         : pick_target(cfg.selection, t, i, targets.size());
    });
    std::vector<FeatureVec> target_features;
    target_features.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      target_features.push_back(embedded.feature(chosen[i]));
      state.history[i].chosen.push_back(chosen[i]);
    }

    LossAndGrad lg;
    if (sampler == nullptr) {
      lg = total_loss_and_grad(model, state.current, target_features, real, real_features, objective);
    } else {
      // Same arithmetic as total_loss_and_grad, with each item's input
      // optionally routed through a sampled linear transform.
      const double inv_n = 1.0 / static_cast<double>(n);
      std::vector<std::optional<Resample>> transforms(n);
      for (std::size_t i = 0; i < n; ++i) transforms[i] = (*sampler)(t, i);
      lg.grads.assign(n, PixelArray());
      std::vector<double> iden(n);
      parallel_for(n, cfg.threads, [&](std::size_t i) {
        const Image input = transforms[i] ? transforms[i]->apply(state.current[i]) : state.current[i];
        iden[i] = identification_loss(model.embed(input), target_features[i], real_features[i]);
        PixelArray g = identification_loss_grad(model, input, target_features[i], real_features[i]);
        if (transforms[i]) g = transforms[i]->adjoint(g);
        for (double& v : g.values()) v *= inv_n;
        lg.grads[i] = std::move(g);
      });
      double sum = 0.0;
      for (double v : iden) sum += v;
      lg.identification = sum * inv_n;
      lg.value = lg.identification;
      if (objective.gamma != 0.0) {
        lg.discrepancy = mmd(state.current, real, objective.kernel);
        lg.value += objective.gamma * lg.discrepancy;
        const auto mg = mmd_grad(state.current, real, objective.kernel);
        for (std::size_t i = 0; i < n; ++i) kernels::axpy(objective.gamma, mg[i].values(), lg.grads[i].values());
      }
    }
    loss_history.push_back(lg.value);
    state = step(state, lg.grads, real, cfg);
    if (observer) observer(state);
  }

  std::vector<IdentityMask> masks;
  masks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    masks.push_back(IdentityMask::between(state.current[i], real[i], cfg.norm, cfg.epsilon));
  }
  return ProtectResult{std::move(state.current), std::move(masks), std::move(state.history),
                       std::move(loss_history)};
}

}  // namespace

ProtectResult protect_batch(const ImageBatch& real, const TargetSet& targets, const Embedder& model,
                            const AttackConfig& cfg, const IterationObserver& observer) {
  return run(real, targets, model, cfg, nullptr, observer);
}

ProtectResult protect_batch_with_transform(const ImageBatch& real, const TargetSet& targets,
                                           const Embedder& model, const AttackConfig& cfg,
                                           const TransformSampler& sampler,
                                           const IterationObserver& observer) {
  if (!sampler) return run(real, targets, model, cfg, nullptr, observer);
  return run(real, targets, model, cfg, &sampler, observer);
}

ImageBatch augment_to_batch(const Image& x, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("augment_to_batch: n must be positive");
  std::vector<Image> out;
  out.reserve(n);
  out.push_back(x);
  Rng rng(seed);
  const Shape& shape = x.shape();
  const double cy = 0.5 * static_cast<double>(shape.height - 1);
  const double cx = 0.5 * static_cast<double>(shape.width - 1);
  const double extent = static_cast<double>(std::max(shape.height, shape.width));
  for (std::size_t k = 1; k < n; ++k) {
    const double angle = rng.uniform(-10.0, 10.0) * std::numbers::pi / 180.0;
    const double brightness = rng.uniform(0.8, 1.2);
    // Perspective terms sized so corners move by at most ~4% of the extent.
    const double px = rng.uniform(-0.04, 0.04) / extent;
    const double py = rng.uniform(-0.04, 0.04) / extent;
    const double c = std::cos(angle), s = std::sin(angle);
    // Output (x, y) -> centred -> rotated + perspective -> input coordinates.
    const Homography h{
        c, -s, cx - c * cx + s * cy,
        s, c, cy - s * cx - c * cy,
        px, py, 1.0 - px * cx - py * cy,
    };
    const Image warped = homography_warp(shape, h).apply(x);
    std::vector<double> pixels(warped.pixels().begin(), warped.pixels().end());
    for (double& v : pixels) v *= brightness;
    out.push_back(Image::clamped(shape, std::move(pixels)));
  }
  return ImageBatch(std::move(out));
}

ProtectResult protect_single(const Image& x, const TargetSet& targets, const Embedder& model,
                             const AttackConfig& cfg, std::size_t batch_size, std::uint64_t seed) {
  const ImageBatch batch = augment_to_batch(x, batch_size, seed);
  ProtectResult full = protect_batch(batch, targets, model, cfg);
  return ProtectResult{ImageBatch({full.protected_images[0]}), {full.masks.front()},
                       {full.traces.front()}, std::move(full.loss_history)};
}

}  // namespace idmask
