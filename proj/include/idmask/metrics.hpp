#pragma once

#include "idmask/image.hpp"

namespace idmask {

/// Returned by psnr() for identical images instead of +inf.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) on the unit scale, capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Averaged over valid window positions and then
/// over channels. Needs min(height, width) >= 11.
double ssim(const Image& a, const Image& b);

}  // namespace idmask
