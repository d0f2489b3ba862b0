#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fknet/net/fknetplus.hpp"

namespace fknet::match {

using Fingerprint = std::array<std::uint8_t, 32>;

/// Gh x Gw grid of D-dimensional feature vectors, cell-major: values[(y * Gw + x) * D + d].
struct Template {
  std::string subject_id;
  std::uint8_t session = 0;
  std::size_t grid_h = 1;
  std::size_t grid_w = 1;
  std::size_t dim = 0;
  Fingerprint fingerprint{};
  std::vector<float> values;

  std::size_t cells() const { return grid_h * grid_w; }
  std::span<const float> cell(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<const float> cell(std::size_t y, std::size_t x) const { return cell(y * grid_w + x); }
  void validate() const;
};

enum class Role { gallery, probe };

/// grid: one fully convolutional pass over the test crop. center: training crop only.
/// shifted: training-size crops of the test crop at every multiple of the network stride,
/// each run separately.
enum class Alignment { grid, center, shifted };

/// Total spatial stride from input to feature grid.
constexpr std::size_t kFeatureStride = 8;

/// Gallery role: centre training crop (1x1 grid). Probe role: per `alignment`.
/// Throws ContractViolation when the image is smaller than the crop it needs.
Template extract_template(net::FKNetPlus<float>& net, const Fingerprint& fingerprint, const Tensor<float>& image,
                          Role role, const std::string& subject_id, int session,
                          Alignment alignment = Alignment::grid);

std::vector<std::uint8_t> serialize_template(const Template& t);
Template parse_template(std::span<const std::uint8_t> bytes);
void save_template(const std::string& path, const Template& t);
Template load_template(const std::string& path);

/// Bytes before the feature payload in a serialized template.
std::size_t template_header_size(const Template& t);

}  // namespace fknet::match
