#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace idmask {

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const noexcept { return height * width * channels; }
  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return (y * width + x) * channels + c;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Throws InvalidArgument unless height, width > 0 and channels is 1 or 3.
void validate_shape(const Shape& shape);

/// Unconstrained real-valued array with an image shape: gradients, masks,
/// momentum buffers.
class PixelArray {
 public:
  PixelArray() = default;
  explicit PixelArray(Shape shape, double fill = 0.0);
  PixelArray(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }

  bool operator==(const PixelArray&) const = default;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

/// Pixel tensor in the unit range, row-major and channel-last. The shape is
/// fixed at construction and every pixel lies in [0, 1].
class Image {
 public:
  Image(Shape shape, std::vector<double> pixels);
  Image(Shape shape, double fill);

  /// Clamps every value into [0, 1]; rejects non-finite values.
  static Image clamped(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t size() const noexcept { return pixels_.size(); }
  std::span<const double> pixels() const noexcept { return pixels_; }
  double operator[](std::size_t i) const noexcept { return pixels_[i]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return pixels_[shape_.index(y, x, c)];
  }

  bool operator==(const Image&) const = default;

 private:
  Shape shape_;
  std::vector<double> pixels_;
};

struct LabeledImage {
  Image image;
  std::uint32_t identity = 0;
  std::size_t index = 0;
};

/// Nonempty ordered list of images sharing one shape.
class ImageBatch {
 public:
  explicit ImageBatch(std::vector<Image> items);

  const Shape& shape() const noexcept { return items_.front().shape(); }
  std::size_t size() const noexcept { return items_.size(); }
  const Image& operator[](std::size_t i) const noexcept { return items_[i]; }
  const std::vector<Image>& items() const noexcept { return items_; }
  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

  bool operator==(const ImageBatch&) const = default;

 private:
  std::vector<Image> items_;
};

/// a - b as an unconstrained array.
PixelArray difference(const Image& a, const Image& b);

/// Throws ShapeError when shapes differ; `what` names the operation.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace idmask
