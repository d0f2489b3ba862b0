#include "fknet/ndtensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fknet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

void require_4d(const Shape& s, const char* op) {
  require(s.size() == 4, std::string(op) + ": expected an N x C x H x W tensor, got " + shape_str(s));
}

struct ConvDims {
  std::size_t n, c, h, w, o, kh, kw, oh, ow;
  std::size_t k() const { return c * kh * kw; }
  std::size_t p() const { return oh * ow; }
};

// out (O x P) = w (O x K) * cols (K x P). Every output accumulates over k in ascending order, so
// its rounding does not depend on P or on the pixel's position.
template <typename T>
void ordered_matmul(const T* w, const T* cols, T* out, std::size_t O, std::size_t K, std::size_t P) {
  constexpr std::size_t kPixelTile = 256, kDepthTile = 64;
  for (std::size_t p0 = 0; p0 < P; p0 += kPixelTile) {
    const std::size_t pn = std::min(kPixelTile, P - p0);
    for (std::size_t o = 0; o < O; ++o) std::fill_n(out + o * P + p0, pn, T{0});
    for (std::size_t k0 = 0; k0 < K; k0 += kDepthTile) {
      const std::size_t k1 = std::min(K, k0 + kDepthTile);
      for (std::size_t o = 0; o < O; ++o) {
        T* dst = out + o * P + p0;
        const T* wr = w + o * K;
        for (std::size_t k = k0; k < k1; ++k) {
          const T wk = wr[k];
          const T* src = cols + k * P + p0;
          for (std::size_t j = 0; j < pn; ++j) dst[j] += wk * src[j];
        }
      }
    }
  }
}

template <typename T>
void im2col(const T* x, const ConvDims& d, const Conv2dGeometry& g, T* cols) {
  const auto P = d.p();
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        T* row = cols + ((c * d.kh + ky) * d.kw + kx) * P;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_h);
          T* out = row + oy * d.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
            std::fill(out, out + d.ow, T{0});
            continue;
          }
          const T* src = x + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_w);
            out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, const Conv2dGeometry& g, T* dx) {
  const auto P = d.p();
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const T* row = cols + ((c * d.kh + ky) * d.kw + kx) * P;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          T* dst = dx + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_w);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(d.w)) dst[ix] += row[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t window_output(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require(stride >= 1, "window stride must be positive");
  require(kernel >= 1, "window kernel must be positive");
  if (in + 2 * pad < kernel) {
    throw ContractViolation("window of size " + std::to_string(kernel) + " does not fit input extent " +
                            std::to_string(in) + " with padding " + std::to_string(pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const Conv2dGeometry& geom) {
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  require_4d(xs, "conv2d input");
  require(ws.size() == 4, "conv2d: weight must be out x in x kh x kw, got " + shape_str(ws));
  require(xs[1] == ws[1], "conv2d: input " + shape_str(xs) + " does not match weight " + shape_str(ws));
  if (bias.defined()) {
    require(bias.value().numel() == ws[0],
            "conv2d: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(ws));
  }
  ConvDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], 0, 0};
  d.oh = window_output(d.h, d.kh, geom.stride, geom.pad_h);
  d.ow = window_output(d.w, d.kw, geom.stride, geom.pad_w);

  const bool pointwise = d.kh == 1 && d.kw == 1 && geom.stride == 1 && geom.pad_h == 0 && geom.pad_w == 0;
  const auto K = d.k(), P = d.p();
  Tensor<T> out({d.n, d.o, d.oh, d.ow});
  std::vector<T> cols(pointwise ? 0 : K * P);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* x = input.value().raw() + n * d.c * d.h * d.w;
    const T* colp = x;
    if (!pointwise) {
      im2col(x, d, geom, cols.data());
      colp = cols.data();
    }
    Eigen::Map<RowMat<T>> O(out.raw() + n * d.o * P, d.o, P);
    ordered_matmul(weight.value().raw(), colp, out.raw() + n * d.o * P, d.o, K, P);
    if (bias.defined()) {
      const T* b = bias.value().raw();
      for (std::size_t o = 0; o < d.o; ++o) O.row(o).array() += b[o];
    }
  }

  std::vector<Var<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [d, geom, pointwise](Node<T>& node) {
    const auto K = d.k(), P = d.p();
    const T* dy = node.value.grad().data();
    const auto& x = node.parents[0]->value;
    const auto& w = node.parents[1]->value;
    T* dx = parent_grad(node, 0);
    T* dw = parent_grad(node, 1);
    T* db = node.parents.size() > 2 ? parent_grad(node, 2) : nullptr;
    Eigen::Map<const RowMat<T>> W(w.raw(), d.o, K);
    std::vector<T> cols(pointwise ? 0 : K * P);
    for (std::size_t n = 0; n < d.n; ++n) {
      Eigen::Map<const RowMat<T>> dO(dy + n * d.o * P, d.o, P);
      if (db) {
        for (std::size_t o = 0; o < d.o; ++o) db[o] += dO.row(o).sum();
      }
      const T* xn = x.raw() + n * d.c * d.h * d.w;
      if (dw) {
        const T* colp = xn;
        if (!pointwise) {
          im2col(xn, d, geom, cols.data());
          colp = cols.data();
        }
        Eigen::Map<RowMat<T>> dW(dw, d.o, K);
        dW.noalias() += dO * Eigen::Map<const RowMat<T>>(colp, K, P).transpose();
      }
      if (dx) {
        T* dxn = dx + n * d.c * d.h * d.w;
        if (pointwise) {
          Eigen::Map<RowMat<T>>(dxn, K, P).noalias() += W.transpose() * dO;
        } else {
          Eigen::Map<RowMat<T>> dC(cols.data(), K, P);
          dC.noalias() = W.transpose() * dO;
          col2im_add(cols.data(), d, geom, dxn);
        }
      }
    }
  });
}

template <typename T>
Var<T> maxpool2d(const Var<T>& input, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const auto& xs = input.shape();
  require_4d(xs, "maxpool2d input");
  require(pad < kernel, "maxpool2d: padding must be smaller than the kernel");
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const auto OH = window_output(H, kernel, stride, pad);
  const auto OW = window_output(W, kernel, stride, pad);
  Tensor<T> out({N, C, OH, OW});
  std::vector<std::size_t> argmax(out.numel());
  const T* x = input.value().raw();
  std::size_t idx = 0;
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const T* src = x + plane * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox, ++idx) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_at = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const auto at = static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
            if (!found || src[at] > best) {
              best = src[at];
              best_at = at;
              found = true;
            }
          }
        }
        out.raw()[idx] = best;
        argmax[idx] = plane * H * W + best_at;
      }
    }
  }
  if (auto* rec = BranchRecorder::active()) {
    for (auto a : argmax) rec->mix(a);
  }
  return make_result<T>(std::move(out), {input}, [argmax = std::move(argmax)](Node<T>& node) {
    T* dx = parent_grad(node, 0);
    if (!dx) return;
    const T* dy = node.value.grad().data();
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
  Tensor<T> out = input.value();
  out.drop_grad();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  if (auto* rec = BranchRecorder::active()) {
    std::uint64_t word = 0;
    std::size_t bit = 0;
    for (T v : out.data()) {
      word |= static_cast<std::uint64_t>(v > T{0}) << bit;
      if (++bit == 64) {
        rec->mix(word);
        word = 0;
        bit = 0;
      }
    }
    rec->mix(word);
  }
  return make_result<T>(std::move(out), {input}, [](Node<T>& node) {
    T* dx = parent_grad(node, 0);
    if (!dx) return;
    const auto y = node.value.data();
    const auto dy = node.value.grad();
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] > T{0}) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> batchnorm(const Var<T>& input, BNParams<T>& params, Mode mode) {
  const auto& xs = input.shape();
  require_4d(xs, "batchnorm input");
  const std::size_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  require(C == params.channels(), "batchnorm: input " + shape_str(xs) + " has " + std::to_string(C) +
                                      " channels, parameters have " + std::to_string(params.channels()));
  require(params.eps > 0.0, "batchnorm: eps must be positive");
  const std::size_t M = N * HW;
  if (mode == Mode::train) {
    require(M >= 2, "batchnorm: train mode needs at least two values per channel, input is " + shape_str(xs));
  }

  const T* x = input.value().raw();
  const T* gamma = params.gamma.value().raw();
  const T* beta = params.beta.value().raw();
  Tensor<T> out(xs);
  std::vector<T> xhat(input.value().numel());
  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) mean += p[i];
      }
      mean /= static_cast<double>(M);
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= static_cast<double>(M);
      const double m = params.momentum;
      auto& rm = params.running_mean[c];
      auto& rv = params.running_var[c];
      rm = static_cast<T>((1.0 - m) * rm + m * mean);
      rv = static_cast<T>((1.0 - m) * rv + m * var * static_cast<double>(M) / static_cast<double>(M - 1));
    } else {
      mean = params.running_mean[c];
      var = std::max(0.0, static_cast<double>(params.running_var[c]));
    }
    inv_std[c] = 1.0 / std::sqrt(var + params.eps);
    for (std::size_t n = 0; n < N; ++n) {
      const auto off = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const double h = (x[off + i] - mean) * inv_std[c];
        xhat[off + i] = static_cast<T>(h);
        out.raw()[off + i] = static_cast<T>(gamma[c] * h + beta[c]);
      }
    }
  }

  std::vector<T> gamma_copy(gamma, gamma + C);
  return make_result<T>(
      std::move(out), {input, params.gamma, params.beta},
      [N, C, HW, M, mode, xhat = std::move(xhat), inv_std = std::move(inv_std),
       gamma_copy = std::move(gamma_copy)](Node<T>& node) {
        const T* dy = node.value.grad().data();
        T* dx = parent_grad(node, 0);
        T* dgamma = parent_grad(node, 1);
        T* dbeta = parent_grad(node, 2);
        for (std::size_t c = 0; c < C; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t n = 0; n < N; ++n) {
            const auto off = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat[off + i];
            }
          }
          if (dgamma) dgamma[c] += static_cast<T>(sum_dy_xhat);
          if (dbeta) dbeta[c] += static_cast<T>(sum_dy);
          if (!dx) continue;
          const double scale = gamma_copy[c] * inv_std[c];
          const double inv_m = 1.0 / static_cast<double>(M);
          for (std::size_t n = 0; n < N; ++n) {
            const auto off = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
              double g = dy[off + i];
              if (mode == Mode::train) g -= (sum_dy + xhat[off + i] * sum_dy_xhat) * inv_m;
              dx[off + i] += static_cast<T>(scale * g);
            }
          }
        }
      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  out.drop_grad();
  const T* pb = b.value().raw();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& node) {
    const auto dy = node.value.grad();
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* d = parent_grad(node, k)) {
        for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const auto& s0 = parts.front().shape();
  require_4d(s0, "concat_channels input");
  std::size_t total = 0;
  std::vector<std::size_t> channels;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
            "concat_channels: " + shape_str(s) + " is incompatible with " + shape_str(s0));
    channels.push_back(s[1]);
    total += s[1];
  }
  const std::size_t N = s0[0], HW = s0[2] * s0[3];
  Tensor<T> out({N, total, s0[2], s0[3]});
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const T* src = parts[k].value().raw() + n * channels[k] * HW;
      std::copy(src, src + channels[k] * HW, out.raw() + (n * total + c0) * HW);
      c0 += channels[k];
    }
  }
  return make_result<T>(std::move(out), parts, [N, HW, total, channels](Node<T>& node) {
    const T* dy = node.value.grad().data();
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < channels.size(); ++k) {
      if (T* d = parent_grad(node, k)) {
        for (std::size_t n = 0; n < N; ++n) {
          const T* src = dy + (n * total + c0) * HW;
          T* dst = d + n * channels[k] * HW;
          for (std::size_t i = 0; i < channels[k] * HW; ++i) dst[i] += src[i];
        }
      }
      c0 += channels[k];
    }
  });
}

template <typename T>
Var<T> crop(const Var<T>& input, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  const auto& xs = input.shape();
  require_4d(xs, "crop input");
  require(top + h <= xs[2] && left + w <= xs[3],
          "crop: window " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(top) + "," +
              std::to_string(left) + ") exceeds " + shape_str(xs));
  if (top == 0 && left == 0 && h == xs[2] && w == xs[3]) return input;
  const std::size_t NC = xs[0] * xs[1], H = xs[2], W = xs[3];
  Tensor<T> out({xs[0], xs[1], h, w});
  for (std::size_t p = 0; p < NC; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      const T* src = input.value().raw() + (p * H + top + y) * W + left;
      std::copy(src, src + w, out.raw() + (p * h + y) * w);
    }
  }
  return make_result<T>(std::move(out), {input}, [NC, H, W, top, left, h, w](Node<T>& node) {
    T* dx = parent_grad(node, 0);
    if (!dx) return;
    const T* dy = node.value.grad().data();
    for (std::size_t p = 0; p < NC; ++p) {
      for (std::size_t y = 0; y < h; ++y) {
        T* dst = dx + (p * H + top + y) * W + left;
        const T* src = dy + (p * h + y) * w;
        for (std::size_t x = 0; x < w; ++x) dst[x] += src[x];
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
  double acc = 0.0;
  for (auto v : input.value().data()) acc += v;
  return make_result<T>(Tensor<T>({1}, static_cast<T>(acc)), {input}, [](Node<T>& node) {
    T* dx = parent_grad(node, 0);
    if (!dx) return;
    const T g = node.value.grad()[0];
    const auto n = node.parents[0]->value.numel();
    for (std::size_t i = 0; i < n; ++i) dx[i] += g;
  });
}

template <typename T>
Var<T> half_squared_norm(const Var<T>& input) {
  double acc = 0.0;
  for (auto v : input.value().data()) acc += static_cast<double>(v) * v;
  return make_result<T>(Tensor<T>({1}, static_cast<T>(0.5 * acc)), {input}, [](Node<T>& node) {
    T* dx = parent_grad(node, 0);
    if (!dx) return;
    const T g = node.value.grad()[0];
    const auto x = node.parents[0]->value.data();
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += g * x[i];
  });
}

namespace {

struct ClassLayout {
  std::size_t n, classes, inner;
};

ClassLayout class_layout(const Shape& s, const char* op) {
  require(s.size() >= 2, std::string(op) + ": expected at least N x C, got " + shape_str(s));
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  return {s[0], s[1], inner};
}

// Writes softmax probabilities (double precision) for one (n, inner) column.
template <typename T>
void softmax_column(const T* logits, std::size_t classes, std::size_t stride, std::vector<double>& probs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, static_cast<double>(logits[c * stride]));
  double z = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    probs[c] = std::exp(static_cast<double>(logits[c * stride]) - mx);
    z += probs[c];
  }
  for (auto& p : probs) p /= z;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const auto L = class_layout(logits.shape(), "softmax");
  Tensor<T> out(logits.shape());
  std::vector<double> probs(L.classes);
  for (std::size_t n = 0; n < L.n; ++n) {
    for (std::size_t i = 0; i < L.inner; ++i) {
      const auto base = n * L.classes * L.inner + i;
      softmax_column(logits.raw() + base, L.classes, L.inner, probs);
      for (std::size_t c = 0; c < L.classes; ++c) out.raw()[base + c * L.inner] = static_cast<T>(probs[c]);
    }
  }
  return out;
}

template <typename T>
Var<T> cross_entropy_loss(const Var<T>& logits, std::span<const int> targets) {
  const auto L = class_layout(logits.shape(), "cross_entropy_loss");
  require(targets.size() == L.n, "cross_entropy_loss: " + std::to_string(targets.size()) + " targets for batch of " +
                                     std::to_string(L.n));
  for (auto t : targets) {
    require(t >= 0 && static_cast<std::size_t>(t) < L.classes,
            "cross_entropy_loss: target " + std::to_string(t) + " outside [0, " + std::to_string(L.classes) + ")");
  }
  const double count = static_cast<double>(L.n * L.inner);
  std::vector<double> probs(L.classes);
  Tensor<T> dlogits(logits.shape());
  double loss = 0.0;
  for (std::size_t n = 0; n < L.n; ++n) {
    const auto t = static_cast<std::size_t>(targets[n]);
    for (std::size_t i = 0; i < L.inner; ++i) {
      const auto base = n * L.classes * L.inner + i;
      softmax_column(logits.value().raw() + base, L.classes, L.inner, probs);
      loss -= std::log(std::max(probs[t], std::numeric_limits<double>::min()));
      for (std::size_t c = 0; c < L.classes; ++c) {
        dlogits.raw()[base + c * L.inner] = static_cast<T>((probs[c] - (c == t ? 1.0 : 0.0)) / count);
      }
    }
  }
  return make_result<T>(Tensor<T>({1}, static_cast<T>(loss / count)), {logits},
                        [dlogits = std::move(dlogits)](Node<T>& node) {
                          T* dx = parent_grad(node, 0);
                          if (!dx) return;
                          const T g = node.value.grad()[0];
                          for (std::size_t i = 0; i < dlogits.numel(); ++i) dx[i] += g * dlogits[i];
                        });
}

template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
  require(a.size() == b.size(), "cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ContractViolation("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

template <typename T>
double cosine_embedding_loss(std::span<const T> a, std::span<const T> b, PairLabel label, double margin) {
  const double cos = cosine_similarity(a, b);
  return label == PairLabel::same ? 1.0 - cos : std::max(0.0, cos - margin);
}

template <typename T>
Var<T> cosine_embedding_loss(const Var<T>& a, const Var<T>& b, std::span<const PairLabel> labels, double margin) {
  require(a.shape() == b.shape(), "cosine_embedding_loss: shape " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  const std::size_t N = a.shape()[0];
  const std::size_t D = a.value().numel() / N;
  require(labels.size() == N, "cosine_embedding_loss: label count does not match batch");
  // dloss/dcos per row, with the norms needed for the chain rule.
  std::vector<double> dcos(N), cosv(N), na(N), nb(N);
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    std::span<const T> ra(a.value().raw() + n * D, D), rb(b.value().raw() + n * D, D);
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      dot += static_cast<double>(ra[i]) * rb[i];
      sa += static_cast<double>(ra[i]) * ra[i];
      sb += static_cast<double>(rb[i]) * rb[i];
    }
    if (sa == 0.0 || sb == 0.0) throw ContractViolation("cosine_embedding_loss: zero-norm vector in row " +
                                                        std::to_string(n));
    na[n] = std::sqrt(sa);
    nb[n] = std::sqrt(sb);
    cosv[n] = dot / (na[n] * nb[n]);
    if (labels[n] == PairLabel::same) {
      loss += 1.0 - cosv[n];
      dcos[n] = -1.0;
    } else if (cosv[n] > margin) {
      loss += cosv[n] - margin;
      dcos[n] = 1.0;
    }
    if (auto* rec = BranchRecorder::active(); rec && labels[n] == PairLabel::different) rec->mix(dcos[n] != 0.0);
  }
  return make_result<T>(
      Tensor<T>({1}, static_cast<T>(loss / static_cast<double>(N))), {a, b},
      [N, D, dcos = std::move(dcos), cosv = std::move(cosv), na = std::move(na), nb = std::move(nb)](Node<T>& node) {
        const double g = node.value.grad()[0] / static_cast<double>(N);
        const T* pa = node.parents[0]->value.raw();
        const T* pb = node.parents[1]->value.raw();
        T* da = parent_grad(node, 0);
        T* db = parent_grad(node, 1);
        for (std::size_t n = 0; n < N; ++n) {
          if (dcos[n] == 0.0) continue;
          const double s = g * dcos[n];
          const double inv = 1.0 / (na[n] * nb[n]);
          for (std::size_t i = 0; i < D; ++i) {
            const double x = pa[n * D + i], y = pb[n * D + i];
            if (da) da[n * D + i] += static_cast<T>(s * (y * inv - cosv[n] * x / (na[n] * na[n])));
            if (db) db[n * D + i] += static_cast<T>(s * (x * inv - cosv[n] * y / (nb[n] * nb[n])));
          }
        }
      });
}

#define FKNET_INSTANTIATE_OPS(T)                                                                                  \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dGeometry&);                 \
  template Var<T> maxpool2d<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);                            \
  template Var<T> relu<T>(const Var<T>&);                                                                        \
  template Var<T> batchnorm<T>(const Var<T>&, BNParams<T>&, Mode);                                               \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                                \
  template Var<T> crop<T>(const Var<T>&, std::size_t, std::size_t, std::size_t, std::size_t);                    \
  template Var<T> sum<T>(const Var<T>&);                                                                         \
  template Var<T> half_squared_norm<T>(const Var<T>&);                                                           \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                               \
  template Var<T> cross_entropy_loss<T>(const Var<T>&, std::span<const int>);                                    \
  template double cosine_similarity<T>(std::span<const T>, std::span<const T>);                                  \
  template double cosine_embedding_loss<T>(std::span<const T>, std::span<const T>, PairLabel, double);          \
  template Var<T> cosine_embedding_loss<T>(const Var<T>&, const Var<T>&, std::span<const PairLabel>, double);

FKNET_INSTANTIATE_OPS(float)
FKNET_INSTANTIATE_OPS(double)

}  // namespace fknet
