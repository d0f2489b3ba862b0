#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fknet/ndtensor/tensor.hpp"

namespace fknet {

/// Thread-local switch for graph recording. Inference code wraps itself in a NoGradGuard.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// While alive, forward passes on this thread fold their piecewise-linear branch decisions
/// (ReLU sign, max-pool winner, hinge activity) into a running hash. Nests; the innermost wins.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  std::uint64_t digest() const noexcept { return hash_; }
  void reset() noexcept { hash_ = kSeed; }
  void mix(std::uint64_t v) noexcept;

  static BranchRecorder* active() noexcept;

 private:
  static constexpr std::uint64_t kSeed = 0xcbf29ce484222325ull;
  std::uint64_t hash_ = kSeed;
  BranchRecorder* previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates value.grad() into the parents' gradient slots.
  std::function<void(Node&)> backward;
  bool requires_grad = false;
};

/// Handle to a graph node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  /// Leaf that receives gradients. The gradient slot is allocated on first use.
  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  /// True when this tensor was produced by an operation while recording.
  bool recorded() const noexcept { return node_ && static_cast<bool>(node_->backward); }
  std::span<const T> grad() const { return node_->value.grad(); }
  std::span<T> grad() { return node_->value.grad(); }

  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds an op result. Records a backward closure only when grad mode is on and
/// some input requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> out, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
  Var<T> result(std::move(out));
  if (!GradMode::enabled()) return result;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return result;
  auto& node = *result.node();
  node.requires_grad = true;
  for (auto& in : inputs) node.parents.push_back(in.node());
  node.backward = std::move(backward);
  return result;
}

/// Parent gradient slot, allocated on first use; nullptr when the parent needs no gradient.
template <typename T>
T* parent_grad(Node<T>& node, std::size_t i) {
  auto& p = node.parents.at(i);
  if (!p || !p->requires_grad) return nullptr;
  p->value.ensure_grad();
  return p->value.grad().data();
}

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate.
template <typename T>
void backward(const Var<T>& loss);

}  // namespace fknet
