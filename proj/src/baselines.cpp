#include "idmask/baselines.hpp"

#include <cmath>

#include "idmask/error.hpp"
#include "idmask/rng.hpp"

namespace idmask {

void DiversityConfig::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw InvalidArgument("diversity probability must lie in [0, 1]");
  }
  if (!(scale_low > 0.0 && scale_low <= scale_high && scale_high <= 1.0)) {
    throw InvalidArgument("diversity scale range must satisfy 0 < low <= high <= 1");
  }
}

std::optional<Resample> sample_diversity(const Shape& shape, const DiversityConfig& cfg,
                                         std::uint64_t stream_seed) {
  cfg.validate();
  Rng rng(stream_seed);
  // Always consume the same number of draws so decisions stay aligned
  // across probabilities.
  const double coin = rng.uniform();
  const double scale = rng.uniform(cfg.scale_low, cfg.scale_high);
  const double uy = rng.uniform();
  const double ux = rng.uniform();
  if (!(coin < cfg.probability)) return std::nullopt;
  const std::size_t sh = scaled_extent(shape.height, scale);
  const std::size_t sw = scaled_extent(shape.width, scale);
  const auto oy = static_cast<std::size_t>(uy * static_cast<double>(shape.height - sh + 1));
  const auto ox = static_cast<std::size_t>(ux * static_cast<double>(shape.width - sw + 1));
  return downscale_and_pad(shape, scale, oy, ox);
}

Image diversity_transform(const Image& x, const DiversityConfig& cfg) {
  auto t = sample_diversity(x.shape(), cfg, cfg.seed);
  return t ? t->apply(x) : x;
}

namespace {

AttackConfig single_target_config(const AttackConfig& cfg) {
  AttackConfig c = cfg;
  c.gamma = 0.0;
  c.momentum = 1.0;
  c.selection = SelectionPolicy{SelectionMode::kFixed, 0, 0};
  return c;
}

TransformSampler diversity_sampler(const Shape& shape, const DiversityConfig& div, std::size_t n) {
  return [shape, div, n](std::size_t iteration, std::size_t item) {
    return sample_diversity(shape, div, mix_seed(div.seed, iteration * n + item));
  };
}

}  // namespace

ProtectResult mim_protect(const ImageBatch& real, const Image& target, const Embedder& model,
                          const AttackConfig& cfg, const IterationObserver& observer) {
  return protect_batch(real, TargetSet({target}), model, single_target_config(cfg), observer);
}

ProtectResult dim_protect(const ImageBatch& real, const Image& target, const Embedder& model,
                          const AttackConfig& cfg, const DiversityConfig& div,
                          const IterationObserver& observer) {
  div.validate();
  return protect_batch_with_transform(real, TargetSet({target}), model, single_target_config(cfg),
                                      diversity_sampler(real.shape(), div, real.size()), observer);
}

ProtectResult mt_dim_protect(const ImageBatch& real, const TargetSet& targets, const Embedder& model,
                             const AttackConfig& cfg, const DiversityConfig& div,
                             const IterationObserver& observer) {
  div.validate();
  AttackConfig c = single_target_config(cfg);
  c.selection = div.random_assignment
                    ? SelectionPolicy{SelectionMode::kRandom, 0, mix_seed(div.seed, 0x5e1ec7)}
                    : SelectionPolicy{SelectionMode::kCycle, 0, 0};
  return protect_batch_with_transform(real, targets, model, c,
                                      diversity_sampler(real.shape(), div, real.size()), observer);
}

}  // namespace idmask
