#pragma once

#include <cstdint>
#include <optional>

#include "idmask/masker.hpp"

namespace idmask {

/// Input-diversity transform: with probability p, bilinear downscale by a
/// factor drawn from [scale_low, scale_high] and zero-pad back to full size
/// at a uniformly drawn offset.
struct DiversityConfig {
  double probability = 0.5;
  double scale_low = 0.8;
  double scale_high = 1.0;
  std::uint64_t seed = 0;
  /// MT-DIM target schedule: deterministic cycle, or a seeded random draw.
  bool random_assignment = false;

  void validate() const;
};

/// Draws the transform for one stream seed; nullopt when the coin says no.
std::optional<Resample> sample_diversity(const Shape& shape, const DiversityConfig& cfg,
                                         std::uint64_t stream_seed);

/// Applies the transform drawn from cfg.seed.
Image diversity_transform(const Image& x, const DiversityConfig& cfg);

/// MIM: momentum iterative attack toward one target (gamma = 0, mu = 1).
ProtectResult mim_protect(const ImageBatch& real, const Image& target, const Embedder& model,
                          const AttackConfig& cfg, const IterationObserver& observer = {});

/// DIM: MIM with gradients taken through a fresh diversity transform per
/// iteration and item.
ProtectResult dim_protect(const ImageBatch& real, const Image& target, const Embedder& model,
                          const AttackConfig& cfg, const DiversityConfig& div,
                          const IterationObserver& observer = {});

/// MT-DIM: DIM whose target at iteration t is targets[t mod K] (or a seeded
/// random draw when div.random_assignment is set).
ProtectResult mt_dim_protect(const ImageBatch& real, const TargetSet& targets, const Embedder& model,
                             const AttackConfig& cfg, const DiversityConfig& div,
                             const IterationObserver& observer = {});

}  // namespace idmask
