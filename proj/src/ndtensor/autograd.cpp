#include "fknet/ndtensor/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace fknet {

namespace {
thread_local bool grad_enabled = true;
thread_local BranchRecorder* recorder = nullptr;
}

BranchRecorder::BranchRecorder() : previous_(recorder) { recorder = this; }
BranchRecorder::~BranchRecorder() { recorder = previous_; }
BranchRecorder* BranchRecorder::active() noexcept { return recorder; }

void BranchRecorder::mix(std::uint64_t v) noexcept {
  for (int i = 0; i < 8; ++i) {
    hash_ ^= (v >> (8 * i)) & 0xffu;
    hash_ *= 0x100000001b3ull;
  }
}

bool GradMode::enabled() noexcept { return grad_enabled; }
void GradMode::set_enabled(bool on) noexcept { grad_enabled = on; }

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || !loss.recorded()) {
    throw std::logic_error("backward() called on a tensor not produced by a recorded computation");
  }
  if (loss.value().numel() != 1) {
    throw ContractViolation("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->backward) node->value.zero_grad();
  }
  loss.node()->value.grad()[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace fknet
