#pragma once

#include <span>
#include <vector>

#include "fknet/ndtensor/tensor.hpp"

namespace fknet::net {

/// Bilinear rotation of a C x H x W image about its centre. Same output size;
/// samples falling outside the image replicate the nearest edge pixel. |degrees| <= 45.
Tensor<float> rotate_image(const Tensor<float>& image, double degrees);

/// One rotated copy per angle, in the order given.
std::vector<Tensor<float>> augment_rotations(const Tensor<float>& image, std::span<const double> angles);

/// Crop [top, top+h) x [left, left+w) of a C x H x W image.
Tensor<float> crop_image(const Tensor<float>& image, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

/// Centred crop; throws ContractViolation if the image is smaller than requested.
Tensor<float> center_crop(const Tensor<float>& image, std::size_t h, std::size_t w);

}  // namespace fknet::net
