#include "idmask/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include "byte_io.hpp"
#include "idmask/error.hpp"

namespace idmask {

namespace detail {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::kMissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::kUnwritable, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(IoErrorKind::kUnwritable, "write failed for " + path.string());
}

}  // namespace detail

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

// libpng reports errors through longjmp; every libpng call below happens
// inside the setjmp scope and owns no C++ objects with destructors.
struct PngReadResult {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  std::string error;
  bool header_ok = false;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* error = static_cast<std::string*>(png_get_error_ptr(png));
  if (error != nullptr) *error = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

void read_png(std::FILE* fp, PngReadResult& res) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &res.error, png_error_fn, png_warning_fn);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    res.error = "libpng allocation failed";
    return;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return;
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  res.width = png_get_image_width(png, info);
  res.height = png_get_image_height(png, info);
  res.bit_depth = png_get_bit_depth(png, info);
  res.color_type = png_get_color_type(png, info);
  res.header_ok = true;
  if (res.bit_depth != 8 ||
      (res.color_type != PNG_COLOR_TYPE_GRAY && res.color_type != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    return;
  }
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  res.data.resize(rowbytes * res.height);
  res.rows.resize(res.height);
  for (png_uint_32 y = 0; y < res.height; ++y) res.rows[y] = res.data.data() + y * rowbytes;
  png_read_image(png, res.rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

struct PngWriteResult {
  std::string error;
};

void write_png(std::FILE* fp, const Image& image, const std::vector<std::uint8_t>& bytes,
               PngWriteResult& res) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &res.error, png_error_fn, png_warning_fn);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    res.error = "libpng allocation failed";
    return;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    if (res.error.empty()) res.error = "libpng write error";
    return;
  }
  png_init_io(png, fp);
  const int color = image.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = image.width() * image.channels();
  for (std::size_t y = 0; y < image.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_image_file(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError(IoErrorKind::kMissingFile, "cannot open image " + path.string());
  png_byte sig[8] = {};
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(IoErrorKind::kMalformedHeader, path.string() + ": not a PNG file");
  }
  PngReadResult res;
  read_png(fp.get(), res);
  if (!res.header_ok) {
    throw IoError(IoErrorKind::kMalformedHeader, path.string() + ": malformed PNG header: " + res.error);
  }
  if (res.bit_depth != 8) {
    throw IoError(IoErrorKind::kUnsupportedFormat,
                  path.string() + ": unsupported bit depth " + std::to_string(res.bit_depth));
  }
  if (res.color_type != PNG_COLOR_TYPE_GRAY && res.color_type != PNG_COLOR_TYPE_RGB) {
    throw IoError(IoErrorKind::kUnsupportedFormat,
                  path.string() + ": only 8-bit grayscale or RGB PNG is supported");
  }
  if (!res.error.empty()) {
    throw IoError(IoErrorKind::kTruncated, path.string() + ": " + res.error);
  }
  const Shape shape{res.height, res.width, res.color_type == PNG_COLOR_TYPE_GRAY ? 1u : 3u};
  std::vector<double> pixels(shape.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = res.data[i] / 255.0;
  return Image(shape, std::move(pixels));
}

void write_image_file(const Image& image, const std::filesystem::path& path) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw IoError(IoErrorKind::kUnsupportedFormat,
                  path.string() + ": PNG output needs 1 or 3 channels, got " + std::to_string(image.channels()));
  }
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image[i]);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError(IoErrorKind::kUnwritable, "cannot write image " + path.string());
  PngWriteResult res;
  write_png(fp.get(), image, bytes, res);
  if (!res.error.empty()) throw IoError(IoErrorKind::kUnwritable, path.string() + ": " + res.error);
  if (std::fflush(fp.get()) != 0) {
    throw IoError(IoErrorKind::kUnwritable, "flush failed for " + path.string());
  }
}

Image quantize_8bit(const Image& image) {
  std::vector<double> out(image.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = to_byte(image[i]) / 255.0;
  return Image(image.shape(), std::move(out));
}

std::vector<std::uint8_t> encode_tensor(const std::vector<PixelArray>& arrays) {
  if (arrays.empty()) throw IoError(IoErrorKind::kEmptyPayload, "tensor file: nonempty required");
  const Shape shape = arrays.front().shape();
  detail::ByteWriter w;
  w.bytes("IMSK", 4);
  w.le<std::uint16_t>(kTensorFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(arrays.size()));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.height));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.width));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.channels));
  w.le<std::uint32_t>(8);
  for (const auto& a : arrays) {
    require_same_shape(shape, a.shape(), "tensor file");
    for (double v : a.values()) w.le<double>(v);
  }
  return std::move(w.data());
}

std::vector<PixelArray> decode_tensor(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  char magic[4];
  if (bytes.size() < 4) throw IoError(IoErrorKind::kTruncated, "tensor file: truncated header");
  r.bytes(magic, 4);
  if (std::string_view(magic, 4) != "IMSK") {
    throw IoError(IoErrorKind::kBadMagic, "tensor file: bad magic bytes");
  }
  const auto version = r.le<std::uint16_t>();
  if (version != kTensorFormatVersion) {
    throw IoError(IoErrorKind::kVersionMismatch,
                  "tensor file: unsupported version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>();
  Shape shape;
  shape.height = r.le<std::uint32_t>();
  shape.width = r.le<std::uint32_t>();
  shape.channels = r.le<std::uint32_t>();
  const auto value_bytes = r.le<std::uint32_t>();
  if (count == 0) throw IoError(IoErrorKind::kEmptyPayload, "tensor file: nonempty required");
  if (value_bytes != 8) {
    throw IoError(IoErrorKind::kMalformedHeader, "tensor file: values must be 8-byte floats");
  }
  try {
    validate_shape(shape);
  } catch (const InvalidArgument& e) {
    throw IoError(IoErrorKind::kMalformedHeader, std::string("tensor file: ") + e.what());
  }
  const std::size_t expected = static_cast<std::size_t>(count) * shape.size() * 8;
  if (r.remaining() < expected) {
    throw IoError(IoErrorKind::kTruncated, "tensor file: truncated payload");
  }
  if (r.remaining() > expected) {
    throw IoError(IoErrorKind::kMalformedHeader, "tensor file: trailing bytes after payload");
  }
  std::vector<PixelArray> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::vector<double> values(shape.size());
    for (double& v : values) {
      v = r.le<double>();
      if (!std::isfinite(v)) throw IoError(IoErrorKind::kMalformedHeader, "tensor file: non-finite value");
    }
    out.emplace_back(shape, std::move(values));
  }
  return out;
}

void write_tensor_file(const std::vector<PixelArray>& arrays, const std::filesystem::path& path) {
  detail::write_all(path, encode_tensor(arrays));
}

std::vector<PixelArray> read_tensor_file(const std::filesystem::path& path) {
  return decode_tensor(detail::read_all(path));
}

void write_tensor_file(const ImageBatch& batch, const std::filesystem::path& path) {
  std::vector<PixelArray> arrays;
  arrays.reserve(batch.size());
  for (const auto& img : batch) {
    arrays.emplace_back(img.shape(), std::vector<double>(img.pixels().begin(), img.pixels().end()));
  }
  write_tensor_file(arrays, path);
}

ImageBatch read_image_batch_file(const std::filesystem::path& path) {
  auto arrays = read_tensor_file(path);
  std::vector<Image> images;
  images.reserve(arrays.size());
  for (const auto& a : arrays) {
    images.emplace_back(a.shape(), std::vector<double>(a.values().begin(), a.values().end()));
  }
  return ImageBatch(std::move(images));
}

}  // namespace idmask
