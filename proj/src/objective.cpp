#include "idmask/objective.hpp"

#include <algorithm>
#include <cmath>

#include "idmask/error.hpp"
#include "idmask/kernels.hpp"

namespace idmask {

void KernelSpec::validate() const {
  if (bandwidths.empty()) throw InvalidArgument("kernel needs at least one bandwidth");
  for (double s : bandwidths) {
    if (!std::isfinite(s) || !(s > 0.0)) throw InvalidArgument("kernel bandwidths must be finite and positive");
  }
}

KernelSpec median_heuristic_kernel(const ImageBatch& real) {
  std::vector<double> d2;
  for (std::size_t i = 0; i < real.size(); ++i) {
    for (std::size_t j = i + 1; j < real.size(); ++j) {
      d2.push_back(kernels::squared_distance(real[i].pixels(), real[j].pixels()));
    }
  }
  double med = 0.0;
  if (!d2.empty()) {
    std::sort(d2.begin(), d2.end());
    const std::size_t m = d2.size() / 2;
    med = d2.size() % 2 == 1 ? d2[m] : 0.5 * (d2[m - 1] + d2[m]);
  }
  if (!(med > 0.0)) med = static_cast<double>(real.shape().size()) / 6.0;
  return KernelSpec{{0.25 * med, 0.5 * med, med, 2.0 * med, 4.0 * med}};
}

namespace {

// Returns k(a, b) given |a - b|^2 and writes the scalar w such that
// d k(a, b) / d a = -w (a - b).
double kernel_from_distance(double d2, const KernelSpec& k, double* slope) {
  double value = 0.0;
  double w = 0.0;
  for (double s : k.bandwidths) {
    const double e = std::exp(-d2 / (2.0 * s));
    value += e;
    w += e / s;
  }
  const double inv = 1.0 / static_cast<double>(k.bandwidths.size());
  if (slope != nullptr) *slope = w * inv;
  return value * inv;
}

void require_paired(const ImageBatch& xp, const ImageBatch& xr, const char* what) {
  if (xp.size() != xr.size()) {
    throw ShapeError(std::string(what) + ": batch sizes differ (" + std::to_string(xp.size()) +
                     " vs " + std::to_string(xr.size()) + ")");
  }
  require_same_shape(xp.shape(), xr.shape(), what);
}

}  // namespace

double kernel_value(std::span<const double> a, std::span<const double> b, const KernelSpec& k) {
  if (a.size() != b.size()) throw ShapeError("kernel_value: length mismatch");
  return kernel_from_distance(kernels::squared_distance(a, b), k, nullptr);
}

double identification_loss(const FeatureVec& fp, const FeatureVec& ft, const FeatureVec& fr) {
  return feature_distance(fp, ft) - feature_distance(fp, fr);
}

double identification_loss(const Embedder& model, const Image& xp, const Image& xt, const Image& xr) {
  return identification_loss(model.embed(xp), model.embed(xt), model.embed(xr));
}

PixelArray identification_loss_grad(const Embedder& model, const Image& xp, const FeatureVec& ft,
                                    const FeatureVec& fr) {
  if (ft.size() != model.output_dim() || fr.size() != model.output_dim()) {
    throw ShapeError("identification_loss_grad: feature length does not match model");
  }
  std::vector<double> cot(ft.size());
  for (std::size_t k = 0; k < cot.size(); ++k) cot[k] = 2.0 * (fr.values[k] - ft.values[k]);
  return model.input_gradient(xp, cot);
}

PixelArray identification_loss_grad(const Embedder& model, const Image& xp, const Image& xt,
                                    const Image& xr) {
  require_same_shape(xp.shape(), model.input_shape(), "identification_loss_grad");
  return identification_loss_grad(model, xp, model.embed(xt), model.embed(xr));
}

double mmd(const ImageBatch& xp, const ImageBatch& xr, const KernelSpec& k) {
  require_paired(xp, xr, "mmd");
  k.validate();
  const std::size_t n = xp.size();
  // Symmetric sums use the i < j half; the diagonal of k(x, x) is exactly 1.
  double spp = 0.0, srr = 0.0, spr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      spp += kernel_value(xp[i].pixels(), xp[j].pixels(), k);
      srr += kernel_value(xr[i].pixels(), xr[j].pixels(), k);
    }
    for (std::size_t j = 0; j < n; ++j) spr += kernel_value(xp[i].pixels(), xr[j].pixels(), k);
  }
  const double nn = static_cast<double>(n);
  const double raw = (2.0 * nn + 2.0 * spp + 2.0 * srr - 2.0 * spr) / (nn * nn);
  return std::max(raw, 0.0);
}

std::vector<PixelArray> mmd_grad(const ImageBatch& xp, const ImageBatch& xr, const KernelSpec& k) {
  require_paired(xp, xr, "mmd_grad");
  k.validate();
  const std::size_t n = xp.size();
  const std::size_t dim = xp.shape().size();
  const double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(n));
  std::vector<PixelArray> grads;
  grads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto pi = xp[i].pixels();
    std::vector<double> g(dim, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const auto pj = xp[j].pixels();
      const auto rj = xr[j].pixels();
      double wpp = 0.0, wpr = 0.0;
      kernel_from_distance(kernels::squared_distance(pi, pj), k, &wpp);
      kernel_from_distance(kernels::squared_distance(pi, rj), k, &wpr);
      // Paired per j so that Xp == Xr cancels term by term.
      for (std::size_t q = 0; q < dim; ++q) {
        g[q] += wpr * (pi[q] - rj[q]) - wpp * (pi[q] - pj[q]);
      }
    }
    for (double& v : g) v *= scale;
    grads.emplace_back(xp.shape(), std::move(g));
  }
  return grads;
}

LossAndGrad total_loss_and_grad(const Embedder& model, const ImageBatch& xp,
                                std::span<const FeatureVec> target_features, const ImageBatch& xr,
                                std::span<const FeatureVec> real_features, const ObjectiveConfig& cfg) {
  require_paired(xp, xr, "total_loss_and_grad");
  const std::size_t n = xp.size();
  if (target_features.size() != n || real_features.size() != n) {
    throw ShapeError("total_loss_and_grad: need one target and one real feature per batch item");
  }
  if (!std::isfinite(cfg.gamma) || cfg.gamma < 0.0) {
    throw InvalidArgument("objective gamma must be finite and nonnegative");
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  LossAndGrad out;
  out.grads.reserve(n);
  double iden_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureVec fp = model.embed(xp[i]);
    iden_sum += identification_loss(fp, target_features[i], real_features[i]);
    PixelArray g = identification_loss_grad(model, xp[i], target_features[i], real_features[i]);
    for (double& v : g.values()) v *= inv_n;
    out.grads.push_back(std::move(g));
  }
  out.identification = iden_sum * inv_n;
  out.value = out.identification;

  if (cfg.gamma != 0.0) {
    out.discrepancy = mmd(xp, xr, cfg.kernel);
    out.value += cfg.gamma * out.discrepancy;
    const auto mg = mmd_grad(xp, xr, cfg.kernel);
    for (std::size_t i = 0; i < n; ++i) {
      kernels::axpy(cfg.gamma, mg[i].values(), out.grads[i].values());
    }
  }
  return out;
}

LossAndGrad total_loss_and_grad(const Embedder& model, const ImageBatch& xp,
                                std::span<const Image> targets, const ImageBatch& xr,
                                const ObjectiveConfig& cfg) {
  if (targets.size() != xp.size()) {
    throw ShapeError("total_loss_and_grad: need one target per batch item");
  }
  std::vector<FeatureVec> ft, fr;
  ft.reserve(targets.size());
  fr.reserve(xr.size());
  for (const auto& t : targets) ft.push_back(model.embed(t));
  for (const auto& r : xr) fr.push_back(model.embed(r));
  return total_loss_and_grad(model, xp, ft, xr, fr, cfg);
}

}  // namespace idmask
