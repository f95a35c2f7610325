#pragma once

#include <span>
#include <vector>

#include "idmask/embedding.hpp"
#include "idmask/image.hpp"

namespace idmask {

/// Mixture of Gaussian kernels k(a, b) = mean_m exp(-|a - b|^2 / (2 s_m)),
/// where each bandwidth s_m is a squared pixel-space length.
struct KernelSpec {
  std::vector<double> bandwidths;

  void validate() const;
};

/// Multi-scale kernel: s_med * {1/4, 1/2, 1, 2, 4}, with s_med the median
/// pairwise squared distance of `real`. Batches with no distinct pair fall
/// back to s_med = n / 6 (the expected squared distance of two uniform images).
KernelSpec median_heuristic_kernel(const ImageBatch& real);

double kernel_value(std::span<const double> a, std::span<const double> b, const KernelSpec& k);

struct ObjectiveConfig {
  double gamma = 0.0;
  KernelSpec kernel;
};

/// L_iden = D_f(xp, xt) - D_f(xp, xr).
double identification_loss(const Embedder& model, const Image& xp, const Image& xt, const Image& xr);
double identification_loss(const FeatureVec& fp, const FeatureVec& ft, const FeatureVec& fr);

/// Gradient of L_iden with respect to xp. The two distance terms share
/// f(xp), so their cotangents 2(fp - ft) and -2(fp - fr) sum to 2(fr - ft).
PixelArray identification_loss_grad(const Embedder& model, const Image& xp, const Image& xt,
                                    const Image& xr);
PixelArray identification_loss_grad(const Embedder& model, const Image& xp, const FeatureVec& ft,
                                    const FeatureVec& fr);

/// Biased (V-statistic) squared MMD between two equal-size batches, clamped at 0.
double mmd(const ImageBatch& xp, const ImageBatch& xr, const KernelSpec& k);
/// d MMD / d xp_i for every i.
std::vector<PixelArray> mmd_grad(const ImageBatch& xp, const ImageBatch& xr, const KernelSpec& k);

struct LossAndGrad {
  double value = 0.0;
  double identification = 0.0;  // mean L_iden
  double discrepancy = 0.0;     // MMD, 0 when gamma == 0
  std::vector<PixelArray> grads;
};

/// (1/N) sum_i L_iden(xp_i, xt_i, xr_i) + gamma * MMD(Xp, Xr).
LossAndGrad total_loss_and_grad(const Embedder& model, const ImageBatch& xp,
                                std::span<const Image> targets, const ImageBatch& xr,
                                const ObjectiveConfig& cfg);

/// Same objective with target and real embeddings already computed.
LossAndGrad total_loss_and_grad(const Embedder& model, const ImageBatch& xp,
                                std::span<const FeatureVec> target_features, const ImageBatch& xr,
                                std::span<const FeatureVec> real_features, const ObjectiveConfig& cfg);

}  // namespace idmask
