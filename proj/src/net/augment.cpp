#include "fknet/net/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fknet::net {

Tensor<float> rotate_image(const Tensor<float>& image, double degrees) {
  if (image.dim() != 3) throw ContractViolation("rotate_image expects C x H x W, got " + shape_str(image.shape()));
  if (std::abs(degrees) > 45.0) throw ContractViolation("rotation angle must be within +-45 degrees");
  if (degrees == 0.0) return image;
  const auto C = image.size(0), H = image.size(1), W = image.size(2);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = 0.5 * static_cast<double>(H - 1), cx = 0.5 * static_cast<double>(W - 1);
  Tensor<float> out(image.shape());
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      // inverse map: output pixel -> source location
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = std::clamp(cx + cs * dx + sn * dy, 0.0, static_cast<double>(W - 1));
      const double sy = std::clamp(cy - sn * dx + cs * dy, 0.0, static_cast<double>(H - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(sx)), y0 = static_cast<std::size_t>(std::floor(sy));
      const auto x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < C; ++c) {
        const float* p = image.raw() + c * H * W;
        const double top = (1 - fx) * p[y0 * W + x0] + fx * p[y0 * W + x1];
        const double bottom = (1 - fx) * p[y1 * W + x0] + fx * p[y1 * W + x1];
        out[(c * H + y) * W + x] = static_cast<float>((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

std::vector<Tensor<float>> augment_rotations(const Tensor<float>& image, std::span<const double> angles) {
  std::vector<Tensor<float>> out;
  out.reserve(angles.size());
  for (double a : angles) out.push_back(rotate_image(image, a));
  return out;
}

Tensor<float> crop_image(const Tensor<float>& image, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (image.dim() != 3) throw ContractViolation("crop_image expects C x H x W, got " + shape_str(image.shape()));
  const auto C = image.size(0), H = image.size(1), W = image.size(2);
  if (top + h > H || left + w > W) {
    throw ContractViolation("image " + shape_str(image.shape()) + " is smaller than the requested " +
                            std::to_string(h) + "x" + std::to_string(w) + " crop");
  }
  Tensor<float> out({C, h, w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(image.raw() + (c * H + top + y) * W + left, w, out.raw() + (c * h + y) * w);
  return out;
}

Tensor<float> center_crop(const Tensor<float>& image, std::size_t h, std::size_t w) {
  if (image.dim() != 3 || image.size(1) < h || image.size(2) < w) {
    throw ContractViolation("image " + shape_str(image.shape()) + " is smaller than the required " + std::to_string(h) +
                            "x" + std::to_string(w) + " crop");
  }
  return crop_image(image, (image.size(1) - h) / 2, (image.size(2) - w) / 2, h, w);
}

}  // namespace fknet::net
