#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fknet/ndtensor/checkpoint.hpp"
#include "fknet/ndtensor/ops.hpp"
#include "fknet/net/config.hpp"

namespace fknet::net {

template <typename T>
struct ConvBN {
  ConvParams<T> conv;
  BNParams<T> bn;
};

/// Residual bottleneck: 1x1 reduce, 3x3 (carries the stride), 1x1 expand, plus a skip path.
/// Output is branch + skip with no activation after the sum.
template <typename T>
struct Bottleneck {
  ConvBN<T> reduce;
  ConvBN<T> spatial;
  ConvBN<T> expand;
  std::optional<ConvBN<T>> projection;
};

template <typename T>
Var<T> bottleneck_forward(const Var<T>& x, Bottleneck<T>& block, Mode mode);

/// Intermediate outputs of one forward pass through the backbone.
template <typename T>
struct CollabStages {
  Var<T> stem;           // f1(I)
  Var<T> stage2;         // f2(f1(I))
  Var<T> stage3;         // f3(f2(f1(I)))
  Var<T> pooled_stem;    // g1(f1(I))
  Var<T> pooled_stage2;  // g2(f2(f1(I)))
  Var<T> collab;         // channel concatenation at the common grid
};

/// Selected cell and its class-probability vector.
struct ClassDecision {
  std::size_t cell_y = 0;
  std::size_t cell_x = 0;
  std::vector<double> probabilities;
};

/// Picks the grid cell whose largest class probability is the global maximum for sample `n`
/// of an N x C x Gh x Gw logit tensor, and returns that cell's whole softmax vector.
template <typename T>
ClassDecision classify(const Tensor<T>& logits, std::size_t n = 0);

template <typename T>
class FKNetPlus {
 public:
  explicit FKNetPlus(NetConfig cfg);

  const NetConfig& config() const noexcept { return cfg_; }

  CollabStages<T> forward_stages(const Var<T>& input, Mode mode);
  Var<T> collab(const Var<T>& input, Mode mode) { return forward_stages(input, mode).collab; }

  /// Head convolution (stride 1, no padding), ReLU, BatchNorm: N x D x Gh x Gw.
  Var<T> features(const Var<T>& collab, Mode mode);

  /// 1x1 class convolution: N x C x Gh x Gw logits.
  Var<T> class_logits(const Var<T>& features);

  Var<T> forward_logits(const Var<T>& input, Mode mode) { return class_logits(features(collab(input, mode), mode)); }

  std::vector<Var<T>> parameters() const;
  std::vector<std::string> parameter_names() const;

  /// Parameters and BatchNorm buffers as single-precision named tensors.
  StateDict state_dict() const;
  void load_state_dict(const StateDict& state);

  /// Read/write views for tests that need to edit particular layers.
  ConvBN<T>& stem() { return stem_; }
  std::vector<Bottleneck<T>>& stage2() { return stage2_; }
  std::vector<Bottleneck<T>>& stage3() { return stage3_; }
  ConvBN<T>& feature_head() { return head_; }
  ConvParams<T>& class_head() { return cls_; }

 private:
  template <typename Fn>
  void visit(Fn&& fn) const;

  NetConfig cfg_;
  ConvBN<T> stem_;
  std::vector<Bottleneck<T>> stage2_;
  std::vector<Bottleneck<T>> stage3_;
  ConvBN<T> head_;
  ConvParams<T> cls_;
};

/// SHA-256 of the serialized checkpoint; identifies the exact weights.
template <typename T>
std::array<std::uint8_t, 32> model_fingerprint(const FKNetPlus<T>& net);

}  // namespace fknet::net
