#pragma once

#include <cstddef>
#include <vector>

#include "idmask/embedding.hpp"
#include "idmask/image.hpp"
#include "idmask/projection.hpp"

namespace idmask {

/// The substitute target images: stand-ins for the target identities'
/// gallery images, which the protector never sees.
class TargetSet {
 public:
  explicit TargetSet(std::vector<Image> images);

  std::size_t size() const noexcept { return images_.size(); }
  const Image& operator[](std::size_t i) const noexcept { return images_[i]; }
  const std::vector<Image>& images() const noexcept { return images_; }
  const Shape& shape() const noexcept { return images_.front().shape(); }

 private:
  std::vector<Image> images_;
};

/// A target set bound to one model, with every target's embedding cached.
/// Rebind (construct a new one) when the model changes.
class EmbeddedTargets {
 public:
  EmbeddedTargets(const Embedder& model, const TargetSet& targets);

  const Embedder& model() const noexcept { return *model_; }
  const TargetSet& targets() const noexcept { return *targets_; }
  std::size_t size() const noexcept { return features_.size(); }
  const FeatureVec& feature(std::size_t i) const noexcept { return features_[i]; }
  const std::vector<FeatureVec>& features() const noexcept { return features_; }

 private:
  const Embedder* model_;
  const TargetSet* targets_;
  std::vector<FeatureVec> features_;
};

enum class GainKind {
  kMax,     // log(1 + max_t exp(D(p, r) - D(p, t)))
  kCenter,  // log(1 + sum_t exp(D(p, r) - D(p, t)))
};

double gain(const EmbeddedTargets& targets, const Image& xp, const Image& xr);
double center_gain(const EmbeddedTargets& targets, const Image& xp, const Image& xr);
double gain_from_features(GainKind kind, const FeatureVec& fp, const FeatureVec& fr,
                          const std::vector<FeatureVec>& target_features);

struct StepSpec {
  double alpha = 0.0;
  NormType norm = NormType::kLinf;
  double epsilon = 0.0;
};

struct Selection {
  std::size_t index = 0;
  double gain = 0.0;
};

/// Greedy insertion: for every candidate target, take one identification-loss
/// step from xp, score the projected candidate with the gain function and keep
/// the argmax (first index wins ties). `fr` is the embedding of xr.
Selection select_target(const EmbeddedTargets& targets, const Image& xp, const Image& xr,
                        const FeatureVec& fr, const StepSpec& step, GainKind kind = GainKind::kMax);
Selection select_target(const EmbeddedTargets& targets, const Image& xp, const Image& xr,
                        const StepSpec& step, GainKind kind = GainKind::kMax);

/// Per-iteration chosen target indices for one batch item.
struct SelectionTrace {
  std::vector<std::size_t> chosen;
};

}  // namespace idmask
