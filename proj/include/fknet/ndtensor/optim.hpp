#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fknet/ndtensor/autograd.hpp"

namespace fknet {

/// Momentum SGD on raw tensors: v <- momentum * v + g; p <- p - lr * v.
template <typename T>
void sgd_step(Tensor<T>& param, std::span<const T> grad, std::vector<T>& velocity, double lr, double momentum) {
  if (grad.size() != param.numel()) {
    throw ContractViolation("sgd_step: gradient length " + std::to_string(grad.size()) +
                            " does not match parameter " + shape_str(param.shape()));
  }
  if (velocity.size() != param.numel()) velocity.assign(param.numel(), T{0});
  auto p = param.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    velocity[i] = static_cast<T>(momentum * velocity[i] + grad[i]);
    p[i] = static_cast<T>(p[i] - lr * velocity[i]);
  }
}

template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Var<T>> params, double lr, double momentum = 0.9, double weight_decay = 0.0)
      : params_(std::move(params)), velocity_(params_.size()), lr_(lr), momentum_(momentum), decay_(weight_decay) {}

  void zero_grad() {
    for (auto& p : params_) p.value().zero_grad();
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& value = params_[i].value();
      value.ensure_grad();
      if (decay_ != 0.0) {
        auto g = value.grad();
        const auto p = value.data();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = static_cast<T>(g[k] + decay_ * p[k]);
      }
      sgd_step(value, std::span<const T>(value.grad()), velocity_[i], lr_, momentum_);
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<Var<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double lr_;
  double momentum_;
  double decay_;
};

/// lr(epoch) = base * gamma^(epoch / step_size)
struct StepDecay {
  double base_lr = 0.01;
  double gamma = 0.1;
  std::size_t step_size = 30;

  double lr(std::size_t epoch) const {
    if (step_size == 0) return base_lr;
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
  }
};

}  // namespace fknet
