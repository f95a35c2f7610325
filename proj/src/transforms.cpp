#include "idmask/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "idmask/error.hpp"

namespace idmask {

Resample::Resample(Shape shape) : shape_(shape), taps_(shape.height * shape.width) {
  validate_shape(shape_);
}

void Resample::set_taps(std::size_t output_location, std::vector<Tap> taps) {
  taps_.at(output_location) = std::move(taps);
}

PixelArray Resample::apply(const PixelArray& x) const {
  require_same_shape(shape_, x.shape(), "resample");
  const std::size_t c = shape_.channels;
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t loc = 0; loc < taps_.size(); ++loc) {
    for (const auto& tap : taps_[loc]) {
      for (std::size_t ch = 0; ch < c; ++ch) out[loc * c + ch] += tap.weight * x[tap.source * c + ch];
    }
  }
  return PixelArray(shape_, std::move(out));
}

Image Resample::apply(const Image& x) const {
  const PixelArray out =
      apply(PixelArray(x.shape(), std::vector<double>(x.pixels().begin(), x.pixels().end())));
  return Image::clamped(shape_, std::vector<double>(out.values().begin(), out.values().end()));
}

PixelArray Resample::adjoint(const PixelArray& g) const {
  require_same_shape(shape_, g.shape(), "resample adjoint");
  const std::size_t c = shape_.channels;
  std::vector<double> out(g.size(), 0.0);
  for (std::size_t loc = 0; loc < taps_.size(); ++loc) {
    for (const auto& tap : taps_[loc]) {
      for (std::size_t ch = 0; ch < c; ++ch) out[tap.source * c + ch] += tap.weight * g[loc * c + ch];
    }
  }
  return PixelArray(shape_, std::move(out));
}

std::vector<Resample::Tap> bilinear_taps(const Shape& shape, double sy, double sx) {
  const double maxy = static_cast<double>(shape.height - 1);
  const double maxx = static_cast<double>(shape.width - 1);
  sy = std::clamp(sy, 0.0, maxy);
  sx = std::clamp(sx, 0.0, maxx);
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, shape.height - 1);
  const std::size_t x1 = std::min(x0 + 1, shape.width - 1);
  const double fy = sy - static_cast<double>(y0);
  const double fx = sx - static_cast<double>(x0);
  std::vector<Resample::Tap> taps;
  auto add = [&](std::size_t y, std::size_t x, double w) {
    if (w == 0.0) return;
    const auto src = static_cast<std::uint32_t>(y * shape.width + x);
    for (auto& t : taps) {
      if (t.source == src) {
        t.weight += w;
        return;
      }
    }
    taps.push_back({src, w});
  };
  add(y0, x0, (1.0 - fy) * (1.0 - fx));
  add(y0, x1, (1.0 - fy) * fx);
  add(y1, x0, fy * (1.0 - fx));
  add(y1, x1, fy * fx);
  return taps;
}

Resample homography_warp(const Shape& shape, const Homography& h) {
  Resample r(shape);
  for (std::size_t y = 0; y < shape.height; ++y) {
    for (std::size_t x = 0; x < shape.width; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      const double w = h[6] * fx + h[7] * fy + h[8];
      if (!(std::abs(w) > 1e-12)) throw InvalidArgument("homography maps a pixel to infinity");
      const double sx = (h[0] * fx + h[1] * fy + h[2]) / w;
      const double sy = (h[3] * fx + h[4] * fy + h[5]) / w;
      r.set_taps(y * shape.width + x, bilinear_taps(shape, sy, sx));
    }
  }
  return r;
}

std::size_t scaled_extent(std::size_t extent, double scale) {
  const auto v = static_cast<std::size_t>(std::lround(static_cast<double>(extent) * scale));
  return std::clamp<std::size_t>(v, 1, extent);
}

Resample downscale_and_pad(const Shape& shape, double scale, std::size_t offset_y,
                           std::size_t offset_x) {
  if (!(scale > 0.0 && scale <= 1.0)) throw InvalidArgument("downscale factor must lie in (0, 1]");
  const std::size_t sh = scaled_extent(shape.height, scale);
  const std::size_t sw = scaled_extent(shape.width, scale);
  if (offset_y + sh > shape.height || offset_x + sw > shape.width) {
    throw InvalidArgument("downscale_and_pad: offset places the image out of bounds");
  }
  Resample r(shape);
  const double ry = static_cast<double>(shape.height) / static_cast<double>(sh);
  const double rx = static_cast<double>(shape.width) / static_cast<double>(sw);
  for (std::size_t y = 0; y < sh; ++y) {
    for (std::size_t x = 0; x < sw; ++x) {
      const double sy = (static_cast<double>(y) + 0.5) * ry - 0.5;
      const double sx = (static_cast<double>(x) + 0.5) * rx - 0.5;
      r.set_taps((offset_y + y) * shape.width + offset_x + x, bilinear_taps(shape, sy, sx));
    }
  }
  return r;
}

}  // namespace idmask
