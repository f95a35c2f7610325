#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "idmask/image.hpp"

namespace idmask {

/// Sparse linear spatial resampling, applied identically to every channel.
/// Each output location is a weighted sum of at most four input locations
/// (bilinear taps). Carries its own adjoint so gradients can flow back
/// through it.
class Resample {
 public:
  struct Tap {
    std::uint32_t source;  // y * width + x in the input
    double weight;
  };

  explicit Resample(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  void set_taps(std::size_t output_location, std::vector<Tap> taps);

  /// Output = A x. Values are clamped to [0, 1] only if the weights would
  /// push them outside (never for convex taps).
  Image apply(const Image& x) const;
  PixelArray apply(const PixelArray& x) const;
  /// A^T g.
  PixelArray adjoint(const PixelArray& g) const;

 private:
  Shape shape_;
  std::vector<std::vector<Tap>> taps_;  // per spatial output location
};

/// Bilinear taps for sampling `shape` at (sy, sx), edge-replicated.
std::vector<Resample::Tap> bilinear_taps(const Shape& shape, double sy, double sx);

/// Row-major 3x3 matrix mapping output pixel (x, y, 1) to input coordinates.
using Homography = std::array<double, 9>;

/// Samples the input at H (x, y, 1) for every output pixel, bilinear with
/// edge replication.
Resample homography_warp(const Shape& shape, const Homography& h);

/// Bilinear downscale to (round(h * scale), round(w * scale)) placed at
/// (offset_y, offset_x) inside an all-zero image of the original size.
Resample downscale_and_pad(const Shape& shape, double scale, std::size_t offset_y,
                           std::size_t offset_x);

/// Output height/width of downscale_and_pad for a given scale.
std::size_t scaled_extent(std::size_t extent, double scale);

}  // namespace idmask
