#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfpn/tensor.hpp"

namespace cfpn {

/// Raw 8-bit raster decoded from a binary PPM (P6, 3 channels) or PGM (P5, 1 channel).
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

/// Parses P5/P6 with maxval 255. Throws DecodeError with the byte offset.
Raster decode_netpbm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_netpbm(const Raster& raster);

Raster read_raster(const std::filesystem::path& path);
void write_raster(const std::filesystem::path& path, const Raster& raster);

/// [3,H,W] in [0,1]; PGM input is replicated to three channels.
Tensor read_image(const std::filesystem::path& path);
/// [1,H,W], 1 where the gray value >= 128.
Tensor read_mask(const std::filesystem::path& path);

/// Rounds v*255 half-up; throws DimensionError for values outside [0,1].
std::uint8_t quantize_unit(double v);

/// P5 PGM of round(S*255); S is [1,H,W] or [H,W] in [0,1].
void write_saliency(const std::filesystem::path& path, const Tensor& saliency);
/// P6 PPM of a [3,H,W] image in [0,1].
void write_image(const std::filesystem::path& path, const Tensor& image);

}  // namespace cfpn
