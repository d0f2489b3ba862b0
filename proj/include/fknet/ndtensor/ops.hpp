#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fknet/ndtensor/autograd.hpp"

namespace fknet {

enum class PaddingMode { zero, valid };
enum class Mode { train, infer };

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

/// Output extent of a strided window op; throws when the window does not fit.
std::size_t window_output(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Convolution weights and geometry. Valid padding mode forces zero padding.
template <typename T>
struct ConvParams {
  Var<T> weight;  // out_ch x in_ch x kh x kw
  Var<T> bias;    // out_ch (may be undefined)
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  PaddingMode padding_mode = PaddingMode::zero;

  std::size_t out_channels() const { return weight.shape()[0]; }
  std::size_t in_channels() const { return weight.shape()[1]; }
  std::size_t kernel_h() const { return weight.shape()[2]; }
  std::size_t kernel_w() const { return weight.shape()[3]; }
  Conv2dGeometry geometry() const {
    if (padding_mode == PaddingMode::valid) return {stride, 0, 0};
    return {stride, pad_h, pad_w};
  }
};

/// Per-channel batch-norm state. Running statistics are buffers, not parameters.
template <typename T>
struct BNParams {
  Var<T> gamma;
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  std::size_t channels() const { return gamma.value().numel(); }
};

// All image tensors are N x C x H x W.

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const Conv2dGeometry& geom);

template <typename T>
Var<T> conv2d(const Var<T>& input, const ConvParams<T>& params) {
  return conv2d(input, params.weight, params.bias, params.geometry());
}

/// Max pooling; padded cells never win.
template <typename T>
Var<T> maxpool2d(const Var<T>& input, std::size_t kernel, std::size_t stride, std::size_t pad = 0);

template <typename T>
Var<T> relu(const Var<T>& input);

/// Train mode normalises by batch statistics and updates the running buffers.
template <typename T>
Var<T> batchnorm(const Var<T>& input, BNParams<T>& params, Mode mode);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Concatenates along the channel axis; N, H, W must agree.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

/// Spatial window [top, top+h) x [left, left+w).
template <typename T>
Var<T> crop(const Var<T>& input, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

template <typename T>
Var<T> sum(const Var<T>& input);

/// 0.5 * ||x||^2
template <typename T>
Var<T> half_squared_norm(const Var<T>& input);

/// Softmax over axis 1 (classes) at every other index. Max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Mean over samples (and spatial cells) of -log softmax(logits)[target].
template <typename T>
Var<T> cross_entropy_loss(const Var<T>& logits, std::span<const int> targets);

/// Scalar cosine similarity. Throws ContractViolation on a zero-norm vector.
template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b);

enum class PairLabel { same, different };

/// Single-pair cosine embedding loss: same -> 1 - cos, different -> max(0, cos - margin).
template <typename T>
double cosine_embedding_loss(std::span<const T> a, std::span<const T> b, PairLabel label, double margin);

/// Batched cosine embedding loss; rows are samples (axis 0), remaining axes are the feature.
template <typename T>
Var<T> cosine_embedding_loss(const Var<T>& a, const Var<T>& b, std::span<const PairLabel> labels,
                             double margin);

}  // namespace fknet
