#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fknet/ndtensor/ops.hpp"

namespace fknet::net {

struct HW {
  std::size_t h = 0;
  std::size_t w = 0;
  bool operator==(const HW&) const = default;
};

/// Network geometry. Defaults reproduce the 3D knuckle layer table (48x80 crop, 190 classes).
struct NetConfig {
  std::size_t in_channels = 3;
  HW input_hw{48, 80};
  HW test_hw{64, 96};
  std::size_t num_classes = 190;
  std::size_t feature_dim = 600;
  std::size_t stem_channels = 64;
  std::size_t stage2_blocks = 3;
  std::size_t stage2_width = 256;
  std::size_t stage3_blocks = 4;
  std::size_t stage3_width = 512;
  std::size_t bottleneck_expansion = 4;
  HW head_kernel{6, 10};
  PaddingMode padding_mode = PaddingMode::zero;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;

  std::size_t collab_channels() const { return stem_channels + stage2_width + stage3_width; }

  /// Checks positivity and that head_kernel equals the collaboration grid at input_hw.
  void validate() const;

  static NetConfig knuckle3d();
  /// 2D contactless knuckle: 64x80 training crop, 80x96 test crop, 8x10 head, 503 classes.
  static NetConfig knuckle2d();
  static NetConfig palmprint();
};

struct StageShape {
  std::size_t c = 0, h = 0, w = 0;
  bool operator==(const StageShape&) const = default;
  std::size_t numel() const { return c * h * w; }
};

/// Per-stage output shapes for one input size, computed arithmetically.
struct ShapeTrace {
  StageShape stem, stage2, stage3, pooled_stem, pooled_stage2, collab, features, classes;
};

/// Throws ContractViolation when the input cannot reach a collaboration grid >= head_kernel.
ShapeTrace trace_shapes(const NetConfig& cfg, HW input);

/// Smallest input extent per axis that still yields a 1x1 feature grid.
HW minimum_input(const NetConfig& cfg);

enum class Regime { closed_set, open_set };

struct TrainConfig {
  Regime regime = Regime::closed_set;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lr_decay = 0.1;
  std::size_t lr_step = 20;
  double margin = 0.0;
  std::vector<double> rotations{-10.0, 0.0, 10.0};
  double open_split = 0.8;
  std::uint64_t seed = 0;
};

}  // namespace fknet::net
