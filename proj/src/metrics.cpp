#include "idmask/metrics.hpp"

#include <array>
#include <cmath>

#include "idmask/error.hpp"

namespace idmask {

double psnr(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr std::size_t kWindow = 11;

std::array<double, kWindow * kWindow> gaussian_window() {
  std::array<double, kWindow * kWindow> w{};
  constexpr double sigma = 1.5;
  const double c = (kWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t y = 0; y < kWindow; ++y) {
    for (std::size_t x = 0; x < kWindow; ++x) {
      const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
      w[y * kWindow + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      total += w[y * kWindow + x];
    }
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const Shape& s = a.shape();
  if (s.height < kWindow || s.width < kWindow) {
    throw InvalidArgument("ssim: image " + s.str() + " is smaller than the 11x11 window");
  }
  static const auto window = gaussian_window();
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);

  const std::size_t oy = s.height - kWindow + 1;
  const std::size_t ox = s.width - kWindow + 1;
  double channel_sum = 0.0;
  for (std::size_t ch = 0; ch < s.channels; ++ch) {
    double map_sum = 0.0;
    for (std::size_t y0 = 0; y0 < oy; ++y0) {
      for (std::size_t x0 = 0; x0 < ox; ++x0) {
        double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
        for (std::size_t wy = 0; wy < kWindow; ++wy) {
          for (std::size_t wx = 0; wx < kWindow; ++wx) {
            const double w = window[wy * kWindow + wx];
            const double va = a.at(y0 + wy, x0 + wx, ch);
            const double vb = b.at(y0 + wy, x0 + wx, ch);
            mu_a += w * va;
            mu_b += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            ab += w * va * vb;
          }
        }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        map_sum += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      }
    }
    channel_sum += map_sum / static_cast<double>(oy * ox);
  }
  return channel_sum / static_cast<double>(s.channels);
}

}  // namespace idmask
