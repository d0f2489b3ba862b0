#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fknet/io/image.hpp"
#include "fknet/ndtensor/tensor.hpp"

namespace fknet::photostereo {

using Vec3 = std::array<double, 3>;

/// Thrown when the light directions do not span R^3.
class RankDeficientLights : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

/// Unit light directions (pointing toward the light), one per image of a stack.
class LightSet {
 public:
  /// Requires k >= 3 directions of unit norm (+-1e-9).
  explicit LightSet(std::vector<Vec3> directions);

  /// Normalises each direction first; zero vectors are rejected.
  static LightSet from_unnormalized(std::vector<Vec3> directions);

  /// One "lx ly lz" triple per line; blank lines and '#' comments ignored.
  static LightSet load(const std::string& path);

  std::size_t size() const noexcept { return directions_.size(); }
  const std::vector<Vec3>& directions() const noexcept { return directions_; }

  /// Numerical rank of the k x 3 light matrix.
  int rank() const;

 private:
  std::vector<Vec3> directions_;
};

/// k grayscale images of identical size, intensities in [0, 1].
struct ImageStack {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<double>> images;

  static ImageStack from_images(const std::vector<Image>& images);
  void validate(std::size_t expected_count) const;
};

struct NormalMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Vec3> normals;
  std::vector<std::uint8_t> valid;

  const Vec3& at(std::size_t y, std::size_t x) const { return normals[y * width + x]; }
};

struct AlbedoMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> albedo;
};

struct Reconstruction {
  NormalMap normals;
  AlbedoMap albedo;
};

inline constexpr double kDefaultValidity = 1e-4;

/// Per-pixel least squares L g = i via the light pseudo-inverse; albedo = |g|, normal = g / |g|.
/// Pixels with |g| <= threshold, or whose normal faces away from the camera, are invalid:
/// normal (0, 0, 1), albedo 0.
Reconstruction recover_normals(const ImageStack& stack, const LightSet& lights, double threshold = kDefaultValidity);

/// 3 x H x W tensor with channel c = (n_c + 1) / 2; invalid pixels encode as (0.5, 0.5, 1).
Tensor<float> render_invariant(const NormalMap& normals);

/// Inverse of the encoding for one pixel, renormalised to unit length.
Vec3 decode_invariant(double r, double g, double b);

/// Lambertian shading max(0, albedo * n . l) for every light; used to synthesise stacks.
ImageStack render_lambertian(const NormalMap& normals, const AlbedoMap& albedo, const LightSet& lights);

}  // namespace fknet::photostereo
