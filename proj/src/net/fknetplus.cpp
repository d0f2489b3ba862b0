#include "fknet/net/fknetplus.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fknet/io/sha256.hpp"

namespace fknet::net {

namespace {

template <typename T>
ConvParams<T> make_conv(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw, std::size_t stride,
                        std::size_t pad, PaddingMode mode, bool with_bias, std::mt19937_64& rng) {
  // He-style fan-in scaled uniform weights, zero bias. Convs feeding BatchNorm carry no bias.
  const double bound = std::sqrt(6.0 / static_cast<double>(in * kh * kw));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> w({out, in, kh, kw});
  for (auto& v : w.data()) v = static_cast<T>(dist(rng));
  ConvParams<T> p;
  p.weight = Var<T>::parameter(std::move(w));
  if (with_bias) p.bias = Var<T>::parameter(Tensor<T>({out}));
  p.stride = stride;
  p.pad_h = pad;
  p.pad_w = pad;
  p.padding_mode = mode;
  return p;
}

template <typename T>
BNParams<T> make_bn(std::size_t channels, const NetConfig& cfg) {
  BNParams<T> bn;
  bn.gamma = Var<T>::parameter(Tensor<T>({channels}, T{1}));
  bn.beta = Var<T>::parameter(Tensor<T>({channels}, T{0}));
  bn.running_mean = Tensor<T>({channels}, T{0});
  bn.running_var = Tensor<T>({channels}, T{1});
  bn.eps = cfg.bn_eps;
  bn.momentum = cfg.bn_momentum;
  return bn;
}

template <typename T>
ConvBN<T> make_conv_bn(std::size_t out, std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                       const NetConfig& cfg, std::mt19937_64& rng) {
  return {make_conv<T>(out, in, k, k, stride, pad, cfg.padding_mode, false, rng), make_bn<T>(out, cfg)};
}

template <typename T>
Bottleneck<T> make_block(std::size_t in, std::size_t width, std::size_t stride, const NetConfig& cfg,
                         std::mt19937_64& rng) {
  const std::size_t mid = width / cfg.bottleneck_expansion;
  Bottleneck<T> b;
  b.reduce = make_conv_bn<T>(mid, in, 1, 1, 0, cfg, rng);
  b.spatial = make_conv_bn<T>(mid, mid, 3, stride, 1, cfg, rng);
  b.expand = make_conv_bn<T>(width, mid, 1, 1, 0, cfg, rng);
  if (in != width || stride != 1) b.projection = make_conv_bn<T>(width, in, 1, stride, 0, cfg, rng);
  return b;
}

template <typename T>
Var<T> conv_bn(const Var<T>& x, ConvBN<T>& layer, Mode mode) {
  return batchnorm(conv2d(x, layer.conv), layer.bn, mode);
}

// Centre crop so that `x` matches the spatial extent of `like`.
template <typename T>
Var<T> crop_like(const Var<T>& x, const Shape& like) {
  const auto& s = x.shape();
  if (s[2] < like[2] || s[3] < like[3]) {
    throw ContractViolation("skip path " + shape_str(s) + " is smaller than the residual branch " + shape_str(like));
  }
  return crop(x, (s[2] - like[2]) / 2, (s[3] - like[3]) / 2, like[2], like[3]);
}

}  // namespace

template <typename T>
Var<T> bottleneck_forward(const Var<T>& x, Bottleneck<T>& block, Mode mode) {
  const auto in_ch = block.reduce.conv.in_channels();
  if (x.shape().size() != 4 || x.shape()[1] != in_ch) {
    throw ContractViolation("bottleneck expects " + std::to_string(in_ch) + " input channels, got " +
                            shape_str(x.shape()));
  }
  auto r = relu(conv_bn(x, block.reduce, mode));
  r = relu(conv_bn(r, block.spatial, mode));
  r = conv_bn(r, block.expand, mode);
  Var<T> skip = block.projection ? conv_bn(x, *block.projection, mode) : x;
  if (skip.shape()[1] != r.shape()[1]) {
    throw ContractViolation("bottleneck skip " + shape_str(skip.shape()) + " cannot be added to branch " +
                            shape_str(r.shape()) + " without a projection");
  }
  return add(r, crop_like(skip, r.shape()));
}

template <typename T>
ClassDecision classify(const Tensor<T>& logits, std::size_t n) {
  if (logits.dim() != 4) throw ContractViolation("classify expects N x C x Gh x Gw logits, got " + shape_str(logits.shape()));
  const auto C = logits.size(1), GH = logits.size(2), GW = logits.size(3);
  if (n >= logits.size(0)) throw ContractViolation("classify: sample index out of range");
  Tensor<T> one({1, C, GH, GW});
  std::copy_n(logits.raw() + n * C * GH * GW, C * GH * GW, one.raw());
  const auto probs = softmax(one);
  ClassDecision best;
  double best_p = -1.0;
  for (std::size_t y = 0; y < GH; ++y) {
    for (std::size_t x = 0; x < GW; ++x) {
      double cell_max = 0.0;
      for (std::size_t c = 0; c < C; ++c) cell_max = std::max(cell_max, static_cast<double>(probs.at(0, c, y, x)));
      if (cell_max > best_p) {
        best_p = cell_max;
        best.cell_y = y;
        best.cell_x = x;
      }
    }
  }
  best.probabilities.resize(C);
  for (std::size_t c = 0; c < C; ++c) best.probabilities[c] = probs.at(0, c, best.cell_y, best.cell_x);
  return best;
}

template <typename T>
FKNetPlus<T>::FKNetPlus(NetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  stem_ = make_conv_bn<T>(cfg_.stem_channels, cfg_.in_channels, 7, 2, 3, cfg_, rng);
  std::size_t in = cfg_.stem_channels;
  for (std::size_t b = 0; b < cfg_.stage2_blocks; ++b) {
    stage2_.push_back(make_block<T>(in, cfg_.stage2_width, 1, cfg_, rng));
    in = cfg_.stage2_width;
  }
  for (std::size_t b = 0; b < cfg_.stage3_blocks; ++b) {
    stage3_.push_back(make_block<T>(in, cfg_.stage3_width, b == 0 ? 2 : 1, cfg_, rng));
    in = cfg_.stage3_width;
  }
  head_ = {make_conv<T>(cfg_.feature_dim, cfg_.collab_channels(), cfg_.head_kernel.h, cfg_.head_kernel.w, 1, 0,
                        PaddingMode::valid, true, rng),
           make_bn<T>(cfg_.feature_dim, cfg_)};
  cls_ = make_conv<T>(cfg_.num_classes, cfg_.feature_dim, 1, 1, 1, 0, PaddingMode::valid, true, rng);
}

template <typename T>
CollabStages<T> FKNetPlus<T>::forward_stages(const Var<T>& input, Mode mode) {
  const auto& s = input.shape();
  if (s.size() != 4 || s[1] != cfg_.in_channels) {
    throw ContractViolation("network input must be N x " + std::to_string(cfg_.in_channels) + " x H x W, got " +
                            shape_str(s));
  }
  trace_shapes(cfg_, {s[2], s[3]});  // rejects inputs that are too small, naming the minimum

  const std::size_t pool_pad = cfg_.padding_mode == PaddingMode::valid ? 0 : 1;
  CollabStages<T> out;
  out.stem = relu(conv_bn(input, stem_, mode));
  auto x = maxpool2d(out.stem, 3, 2, pool_pad);
  for (auto& block : stage2_) x = bottleneck_forward(x, block, mode);
  out.stage2 = x;
  for (auto& block : stage3_) x = bottleneck_forward(x, block, mode);
  out.stage3 = x;
  out.pooled_stem = maxpool2d(out.stem, 4, 4, 0);
  out.pooled_stage2 = maxpool2d(out.stage2, 2, 2, 0);

  const auto h = std::min({out.pooled_stem.shape()[2], out.pooled_stage2.shape()[2], out.stage3.shape()[2]});
  const auto w = std::min({out.pooled_stem.shape()[3], out.pooled_stage2.shape()[3], out.stage3.shape()[3]});
  out.collab = concat_channels<T>(
      {crop(out.pooled_stem, 0, 0, h, w), crop(out.pooled_stage2, 0, 0, h, w), crop(out.stage3, 0, 0, h, w)});
  return out;
}

template <typename T>
Var<T> FKNetPlus<T>::features(const Var<T>& collab, Mode mode) {
  const auto& s = collab.shape();
  if (s.size() != 4 || s[1] != cfg_.collab_channels() || s[2] < cfg_.head_kernel.h || s[3] < cfg_.head_kernel.w) {
    throw ContractViolation("feature head needs N x " + std::to_string(cfg_.collab_channels()) + " x H x W with H >= " +
                            std::to_string(cfg_.head_kernel.h) + ", W >= " + std::to_string(cfg_.head_kernel.w) +
                            "; got " + shape_str(s));
  }
  return batchnorm(relu(conv2d(collab, head_.conv)), head_.bn, mode);
}

template <typename T>
Var<T> FKNetPlus<T>::class_logits(const Var<T>& features) {
  return conv2d(features, cls_);
}

template <typename T>
template <typename Fn>
void FKNetPlus<T>::visit(Fn&& fn) const {
  auto* self = const_cast<FKNetPlus*>(this);
  auto conv = [&](const std::string& name, ConvParams<T>& c) {
    fn(name + ".weight", &c.weight, nullptr);
    if (c.bias.defined()) fn(name + ".bias", &c.bias, nullptr);
  };
  auto bn = [&](const std::string& name, BNParams<T>& b) {
    fn(name + ".gamma", &b.gamma, nullptr);
    fn(name + ".beta", &b.beta, nullptr);
    fn(name + ".running_mean", nullptr, &b.running_mean);
    fn(name + ".running_var", nullptr, &b.running_var);
  };
  auto conv_bn = [&](const std::string& name, ConvBN<T>& l) {
    conv(name + ".conv", l.conv);
    bn(name + ".bn", l.bn);
  };
  auto block = [&](const std::string& name, Bottleneck<T>& b) {
    conv_bn(name + ".reduce", b.reduce);
    conv_bn(name + ".spatial", b.spatial);
    conv_bn(name + ".expand", b.expand);
    if (b.projection) conv_bn(name + ".projection", *b.projection);
  };
  conv_bn("stem", self->stem_);
  for (std::size_t i = 0; i < self->stage2_.size(); ++i) block("stage2." + std::to_string(i), self->stage2_[i]);
  for (std::size_t i = 0; i < self->stage3_.size(); ++i) block("stage3." + std::to_string(i), self->stage3_[i]);
  conv_bn("head.feature", self->head_);
  conv("head.classifier", self->cls_);
}

template <typename T>
std::vector<Var<T>> FKNetPlus<T>::parameters() const {
  std::vector<Var<T>> out;
  visit([&](const std::string&, Var<T>* p, Tensor<T>*) {
    if (p) out.push_back(*p);
  });
  return out;
}

template <typename T>
std::vector<std::string> FKNetPlus<T>::parameter_names() const {
  std::vector<std::string> out;
  visit([&](const std::string& name, Var<T>* p, Tensor<T>*) {
    if (p) out.push_back(name);
  });
  return out;
}

template <typename T>
StateDict FKNetPlus<T>::state_dict() const {
  StateDict out;
  visit([&](const std::string& name, Var<T>* p, Tensor<T>* buf) {
    const Tensor<T>& t = p ? p->value() : *buf;
    out.push_back({name, Tensor<float>(t.shape(), std::vector<float>(t.data().begin(), t.data().end()))});
  });
  return out;
}

template <typename T>
void FKNetPlus<T>::load_state_dict(const StateDict& state) {
  std::size_t used = 0;
  visit([&](const std::string& name, Var<T>* p, Tensor<T>* buf) {
    auto it = std::find_if(state.begin(), state.end(), [&](const NamedTensor& e) { return e.name == name; });
    if (it == state.end()) {
      throw ContractViolation("checkpoint is missing tensor \"" + name +
                              "\"; was it written by a network with a different configuration?");
    }
    Tensor<T>& dst = p ? p->value() : *buf;
    if (it->tensor.shape() != dst.shape()) {
      throw ContractViolation("checkpoint tensor \"" + name + "\" has shape " + shape_str(it->tensor.shape()) +
                              " but the network expects " + shape_str(dst.shape()) +
                              "; check feature_dim/num_classes/widths in the config");
    }
    std::copy(it->tensor.data().begin(), it->tensor.data().end(), dst.data().begin());
    ++used;
  });
  if (used != state.size()) {
    throw ContractViolation("checkpoint holds " + std::to_string(state.size() - used) +
                            " tensors this network does not have; the config does not match the checkpoint");
  }
}

template <typename T>
std::array<std::uint8_t, 32> model_fingerprint(const FKNetPlus<T>& net) {
  return sha256(serialize_checkpoint(net.state_dict()));
}

template class FKNetPlus<float>;
template class FKNetPlus<double>;
template Var<float> bottleneck_forward<float>(const Var<float>&, Bottleneck<float>&, Mode);
template Var<double> bottleneck_forward<double>(const Var<double>&, Bottleneck<double>&, Mode);
template ClassDecision classify<float>(const Tensor<float>&, std::size_t);
template ClassDecision classify<double>(const Tensor<double>&, std::size_t);
template std::array<std::uint8_t, 32> model_fingerprint<float>(const FKNetPlus<float>&);
template std::array<std::uint8_t, 32> model_fingerprint<double>(const FKNetPlus<double>&);

}  // namespace fknet::net
