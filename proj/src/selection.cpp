#include "idmask/selection.hpp"

#include <algorithm>
#include <cmath>

#include "idmask/error.hpp"
#include "idmask/objective.hpp"

namespace idmask {

TargetSet::TargetSet(std::vector<Image> images) : images_(std::move(images)) {
  if (images_.empty()) throw InvalidArgument("target set must be nonempty");
  for (const auto& img : images_) require_same_shape(images_.front().shape(), img.shape(), "target set");
}

EmbeddedTargets::EmbeddedTargets(const Embedder& model, const TargetSet& targets)
    : model_(&model), targets_(&targets) {
  require_same_shape(model.input_shape(), targets.shape(), "target set");
  features_.reserve(targets.size());
  for (const auto& img : targets.images()) features_.push_back(model.embed(img));
}

double gain_from_features(GainKind kind, const FeatureVec& fp, const FeatureVec& fr,
                          const std::vector<FeatureVec>& target_features) {
  if (target_features.empty()) throw InvalidArgument("gain: empty target set");
  const double dr = feature_distance(fp, fr);
  std::vector<double> z;
  z.reserve(target_features.size());
  for (const auto& ft : target_features) z.push_back(dr - feature_distance(fp, ft));
  const double zmax = *std::max_element(z.begin(), z.end());

  // log(1 + e^m) without overflow for large m.
  auto softplus = [](double m) { return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); };
  if (kind == GainKind::kMax) return softplus(zmax);
  // log(1 + sum_t e^z_t) = softplus(zmax + log sum_t e^(z_t - zmax)); a single
  // target gives log(1) = 0 and so matches the max gain bit for bit.
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  return softplus(zmax + std::log(sum));
}

double gain(const EmbeddedTargets& targets, const Image& xp, const Image& xr) {
  const auto& m = targets.model();
  return gain_from_features(GainKind::kMax, m.embed(xp), m.embed(xr), targets.features());
}

double center_gain(const EmbeddedTargets& targets, const Image& xp, const Image& xr) {
  const auto& m = targets.model();
  return gain_from_features(GainKind::kCenter, m.embed(xp), m.embed(xr), targets.features());
}

Selection select_target(const EmbeddedTargets& targets, const Image& xp, const Image& xr,
                        const FeatureVec& fr, const StepSpec& step, GainKind kind) {
  if (targets.size() == 0) throw InvalidArgument("select_target: empty target set");
  require_same_shape(xp.shape(), xr.shape(), "select_target");
  const auto& model = targets.model();

  Selection best{0, 0.0};
  bool have = false;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const PixelArray grad = identification_loss_grad(model, xp, targets.feature(t), fr);
    const Image candidate = descend_and_project(xp, grad, xr, step.norm, step.alpha, step.epsilon);
    const double g = gain_from_features(kind, model.embed(candidate), fr, targets.features());
    if (!have || g > best.gain) {
      best = {t, g};
      have = true;
    }
  }
  return best;
}

Selection select_target(const EmbeddedTargets& targets, const Image& xp, const Image& xr,
                        const StepSpec& step, GainKind kind) {
  return select_target(targets, xp, xr, targets.model().embed(xr), step, kind);
}

}  // namespace idmask
