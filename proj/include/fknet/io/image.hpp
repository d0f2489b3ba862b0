#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fknet/ndtensor/tensor.hpp"

namespace fknet {

/// Row-major interleaved image with intensities normalised to [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<float> values;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), values(h * w * c, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c = 0) { return values[(y * width + x) * channels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c = 0) const { return values[(y * width + x) * channels + c]; }
};

/// Reads 8/16-bit PNG (gray, gray+alpha, RGB, RGBA, palette) or binary PGM/PPM. Alpha is dropped.
Image read_image(const std::string& path);

/// bit_depth is 8 or 16; channels must be 1 or 3.
void write_png(const std::string& path, const Image& image, int bit_depth);
void write_pnm(const std::string& path, const Image& image, int bit_depth);
/// Writes PNG or PGM/PPM depending on the extension.
void write_image(const std::string& path, const Image& image, int bit_depth);

/// Portable float map (little-endian, bottom-to-top rows as the format requires).
void write_pfm(const std::string& path, const Image& image);
Image read_pfm(const std::string& path);

/// C x H x W planar tensor; a single-channel image is replicated to `channels` when asked.
Tensor<float> image_to_chw(const Image& image, std::size_t channels);
Image chw_to_image(const Tensor<float>& chw);

}  // namespace fknet
