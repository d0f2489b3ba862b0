#include "fknet/net/config.hpp"

#include <algorithm>

namespace fknet::net {

namespace {

constexpr std::size_t kStemKernel = 7;
constexpr std::size_t kStemStride = 2;
constexpr std::size_t kStemPool = 4;
constexpr std::size_t kStage2Pool = 2;

std::size_t pad_for(const NetConfig& cfg, std::size_t zero_pad) {
  return cfg.padding_mode == PaddingMode::valid ? 0 : zero_pad;
}

// One spatial axis through the whole network.
struct AxisTrace {
  std::size_t stem, stage2, stage3, pooled_stem, pooled_stage2, collab, features;
};

AxisTrace trace_axis(const NetConfig& cfg, std::size_t in, std::size_t head) {
  AxisTrace t{};
  t.stem = window_output(in, kStemKernel, kStemStride, pad_for(cfg, 3));
  std::size_t x = window_output(t.stem, 3, 2, pad_for(cfg, 1));
  for (std::size_t b = 0; b < cfg.stage2_blocks; ++b) x = window_output(x, 3, 1, pad_for(cfg, 1));
  t.stage2 = x;
  for (std::size_t b = 0; b < cfg.stage3_blocks; ++b) x = window_output(x, 3, b == 0 ? 2 : 1, pad_for(cfg, 1));
  t.stage3 = x;
  t.pooled_stem = t.stem / kStemPool;
  t.pooled_stage2 = t.stage2 / kStage2Pool;
  t.collab = std::min({t.pooled_stem, t.pooled_stage2, t.stage3});
  if (t.collab < head) {
    throw ContractViolation("collaboration grid extent " + std::to_string(t.collab) + " is smaller than the head kernel " +
                            std::to_string(head));
  }
  t.features = t.collab - head + 1;
  return t;
}

bool axis_ok(const NetConfig& cfg, std::size_t in, std::size_t head) {
  try {
    trace_axis(cfg, in, head);
    return true;
  } catch (const ContractViolation&) {
    return false;
  }
}

}  // namespace

void NetConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ContractViolation(std::string("net config: ") + what + " must be positive");
  };
  positive(in_channels, "in_channels");
  positive(num_classes, "num_classes");
  positive(feature_dim, "feature_dim");
  positive(stem_channels, "stem_channels");
  positive(stage2_blocks, "stage2_blocks");
  positive(stage3_blocks, "stage3_blocks");
  positive(bottleneck_expansion, "bottleneck_expansion");
  positive(head_kernel.h, "head_kernel");
  positive(head_kernel.w, "head_kernel");
  if (stage2_width % bottleneck_expansion || stage3_width % bottleneck_expansion || stage2_width == 0 ||
      stage3_width == 0) {
    throw ContractViolation("net config: stage widths must be positive multiples of the bottleneck expansion");
  }
  if (bn_eps <= 0.0) throw ContractViolation("net config: bn_eps must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw ContractViolation("net config: bn_momentum must lie in (0, 1)");
  const auto trace = trace_shapes(*this, input_hw);
  if (trace.features.h != 1 || trace.features.w != 1) {
    throw ContractViolation("net config: head kernel " + std::to_string(head_kernel.h) + "x" +
                            std::to_string(head_kernel.w) + " must equal the collaboration grid " +
                            std::to_string(trace.collab.h) + "x" + std::to_string(trace.collab.w) + " at the training crop");
  }
  trace_shapes(*this, test_hw);
}

ShapeTrace trace_shapes(const NetConfig& cfg, HW input) {
  AxisTrace ty{}, tx{};
  try {
    ty = trace_axis(cfg, input.h, cfg.head_kernel.h);
    tx = trace_axis(cfg, input.w, cfg.head_kernel.w);
  } catch (const ContractViolation& e) {
    const auto min = minimum_input(cfg);
    throw ContractViolation("input " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                            " is too small for this network; minimum size is " + std::to_string(min.h) + "x" +
                            std::to_string(min.w) + " (" + e.what() + ")");
  }
  ShapeTrace s;
  s.stem = {cfg.stem_channels, ty.stem, tx.stem};
  s.stage2 = {cfg.stage2_width, ty.stage2, tx.stage2};
  s.stage3 = {cfg.stage3_width, ty.stage3, tx.stage3};
  s.pooled_stem = {cfg.stem_channels, ty.pooled_stem, tx.pooled_stem};
  s.pooled_stage2 = {cfg.stage2_width, ty.pooled_stage2, tx.pooled_stage2};
  s.collab = {cfg.collab_channels(), ty.collab, tx.collab};
  s.features = {cfg.feature_dim, ty.features, tx.features};
  s.classes = {cfg.num_classes, ty.features, tx.features};
  return s;
}

HW minimum_input(const NetConfig& cfg) {
  auto search = [&](std::size_t head) {
    for (std::size_t n = 1; n < 100000; ++n) {
      if (axis_ok(cfg, n, head)) return n;
    }
    throw ContractViolation("no input size satisfies this network configuration");
  };
  return {search(cfg.head_kernel.h), search(cfg.head_kernel.w)};
}

NetConfig NetConfig::knuckle3d() { return NetConfig{}; }

NetConfig NetConfig::knuckle2d() {
  NetConfig cfg;
  cfg.input_hw = {64, 80};
  cfg.test_hw = {80, 96};
  cfg.num_classes = 503;
  cfg.head_kernel = {8, 10};
  return cfg;
}

NetConfig NetConfig::palmprint() {
  NetConfig cfg;
  cfg.num_classes = 177;
  return cfg;
}

}  // namespace fknet::net
