#pragma once

// File formats.
//
// PNG: 8-bit grayscale or RGB only. Reading maps byte b to b / 255; writing
// stores round(pixel * 255) clamped to 0..255.
//
// IMSK tensor file (all integers and floats little-endian):
//
//   offset  size  field
//   0       4     magic "IMSK"
//   4       2     u16 format version (currently 1)
//   6       4     u32 image count (must be >= 1)
//   10      4     u32 height
//   14      4     u32 width
//   18      4     u32 channels
//   22      4     u32 bytes per value (always 8)
//   26      8*n   f64 values, image-major then row-major, channel-last
//
// Values are not range-checked on read beyond finiteness, so the same format
// carries masks (signed) and images.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "idmask/image.hpp"

namespace idmask {

inline constexpr std::uint16_t kTensorFormatVersion = 1;
inline constexpr std::size_t kTensorHeaderBytes = 26;

Image read_image_file(const std::filesystem::path& path);
void write_image_file(const Image& image, const std::filesystem::path& path);

/// Quantizes to the 8-bit grid exactly as write_image_file does.
Image quantize_8bit(const Image& image);

void write_tensor_file(const std::vector<PixelArray>& arrays, const std::filesystem::path& path);
std::vector<PixelArray> read_tensor_file(const std::filesystem::path& path);

void write_tensor_file(const ImageBatch& batch, const std::filesystem::path& path);
/// Reads a tensor file and validates every value as a pixel in [0, 1].
ImageBatch read_image_batch_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_tensor(const std::vector<PixelArray>& arrays);
std::vector<PixelArray> decode_tensor(const std::vector<std::uint8_t>& bytes);

}  // namespace idmask
