#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "idmask/embedding.hpp"
#include "idmask/image.hpp"
#include "idmask/objective.hpp"
#include "idmask/projection.hpp"
#include "idmask/selection.hpp"
#include "idmask/transforms.hpp"

namespace idmask {

inline constexpr double kDefaultEpsilon = 12.0 / 255.0;
inline constexpr double kDefaultAlpha = 1.5 / 255.0;
inline constexpr std::size_t kDefaultIterations = 50;
inline constexpr std::size_t kDefaultMmdBatch = 50;

enum class SelectionMode {
  kGreedy,  // greedy insertion with the max-similarity gain (TIP-IM)
  kCenter,  // greedy insertion with the sum gain (Center-Opt)
  kFixed,   // always targets[fixed_index]
  kCycle,   // targets[t mod K]
  kRandom,  // seeded uniform draw per iteration and item
};

struct SelectionPolicy {
  SelectionMode mode = SelectionMode::kGreedy;
  std::size_t fixed_index = 0;
  std::uint64_t seed = 0;  // kRandom only
};

struct AttackConfig {
  NormType norm = NormType::kLinf;
  double epsilon = kDefaultEpsilon;
  double alpha = kDefaultAlpha;
  std::size_t iterations = kDefaultIterations;
  double momentum = 1.0;
  double gamma = 0.0;
  SelectionPolicy selection{};
  /// Kernel for the naturalness term; when unset the median heuristic is
  /// evaluated on the real batch once, before the first iteration.
  std::optional<KernelSpec> kernel;
  std::size_t threads = 1;

  void validate() const;
};

/// Additive perturbation with |delta|_norm <= epsilon (+1e-9) whose sum with
/// its source stays in [0, 1].
class IdentityMask {
 public:
  static IdentityMask between(const Image& protected_image, const Image& source, NormType norm,
                              double epsilon);

  const PixelArray& delta() const noexcept { return delta_; }
  NormType norm() const noexcept { return norm_; }
  double epsilon() const noexcept { return epsilon_; }

 private:
  IdentityMask(PixelArray delta, NormType norm, double epsilon)
      : delta_(std::move(delta)), norm_(norm), epsilon_(epsilon) {}

  PixelArray delta_;
  NormType norm_;
  double epsilon_;
};

struct MaskerState {
  ImageBatch current;
  std::vector<PixelArray> momentum;
  std::size_t iteration = 0;
  std::vector<SelectionTrace> history;  // one per batch item
};

MaskerState initial_state(const ImageBatch& real);

/// One momentum update:
///   g_{t+1} = mu g_t + grad / |grad|_1            (per item)
///   x_{t+1} = project(x_t - alpha normalize(g_{t+1}))
MaskerState step(const MaskerState& state, std::span<const PixelArray> grads, const ImageBatch& real,
                 const AttackConfig& cfg);

/// Draws the input transform for (iteration, item); nullopt is the identity.
using TransformSampler = std::function<std::optional<Resample>(std::size_t iteration, std::size_t item)>;
using IterationObserver = std::function<void(const MaskerState&)>;

struct ProtectResult {
  ImageBatch protected_images;
  std::vector<IdentityMask> masks;
  std::vector<SelectionTrace> traces;
  std::vector<double> loss_history;  // objective value before each step
};

/// TIP-IM: T iterations of target selection followed by one momentum step on
/// the batch objective. `observer` sees the state after every step.
ProtectResult protect_batch(const ImageBatch& real, const TargetSet& targets, const Embedder& model,
                            const AttackConfig& cfg, const IterationObserver& observer = {});

/// protect_batch with an input transform in front of the model when taking
/// identification-loss gradients (input diversity). Selection still sees the
/// untransformed image.
ProtectResult protect_batch_with_transform(const ImageBatch& real, const TargetSet& targets,
                                           const Embedder& model, const AttackConfig& cfg,
                                           const TransformSampler& sampler,
                                           const IterationObserver& observer = {});

/// The original plus n - 1 seeded variants: rotation within +-10 degrees, a
/// mild projective warp (bilinear, edge-replicated) and brightness scaling in
/// [0.8, 1.2], clamped to [0, 1].
ImageBatch augment_to_batch(const Image& x, std::size_t n, std::uint64_t seed);

/// Protects a single image: builds an augmented batch of `batch_size`, runs
/// protect_batch on it and returns item 0.
ProtectResult protect_single(const Image& x, const TargetSet& targets, const Embedder& model,
                             const AttackConfig& cfg, std::size_t batch_size, std::uint64_t seed);

}  // namespace idmask
