#include "idmask/image.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "idmask/error.hpp"

namespace idmask {

std::string Shape::str() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

void validate_shape(const Shape& shape) {
  if (shape.height == 0 || shape.width == 0) {
    throw InvalidArgument("image height and width must be positive, got " + shape.str());
  }
  if (shape.channels != 1 && shape.channels != 3) {
    throw InvalidArgument("image channels must be 1 or 3, got " + shape.str());
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

PixelArray::PixelArray(Shape shape, double fill) : shape_(shape), values_(shape.size(), fill) {}

PixelArray::PixelArray(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.size()) {
    throw ShapeError("pixel array of " + std::to_string(values_.size()) +
                     " values does not match shape " + shape_.str());
  }
}

Image::Image(Shape shape, std::vector<double> pixels) : shape_(shape), pixels_(std::move(pixels)) {
  validate_shape(shape_);
  if (pixels_.size() != shape_.size()) {
    throw ShapeError("image of " + std::to_string(pixels_.size()) +
                     " pixels does not match shape " + shape_.str());
  }
  for (double v : pixels_) {
    // Written as a negated range test so NaN is rejected too.
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument("pixel value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

Image::Image(Shape shape, double fill) : Image(shape, std::vector<double>(shape.size(), fill)) {}

Image Image::clamped(Shape shape, std::vector<double> values) {
  for (double& v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite pixel value");
    v = std::clamp(v, 0.0, 1.0);
  }
  return Image(shape, std::move(values));
}

ImageBatch::ImageBatch(std::vector<Image> items) : items_(std::move(items)) {
  if (items_.empty()) throw InvalidArgument("image batch must be nonempty");
  for (const auto& item : items_) {
    require_same_shape(items_.front().shape(), item.shape(), "image batch");
  }
}

PixelArray difference(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "difference");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return PixelArray(a.shape(), std::move(out));
}

}  // namespace idmask
