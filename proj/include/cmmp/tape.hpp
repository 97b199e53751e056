#pragma once

#include <functional>
#include <vector>

#include "cmmp/tensor.hpp"

namespace cmmp {

// Reverse-mode tape. Operations append one backward closure each, in
// execution order, which is a topological order by construction; backward()
// replays them once, in reverse. A tape is confined to one training step on
// one thread.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
  }

  std::size_t size() const { return steps_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad tensor
  // reachable from `loss`. Gradients of unreachable tensors are untouched.
  void backward(Tensor<T>& loss) {
    if (loss.numel() != 1)
      throw NotScalar("backward needs a scalar loss, got " + shape_str(loss.shape()));
    if (loss.requires_grad()) loss.grad()[0] += T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  void clear() { steps_.clear(); }

 private:
  std::vector<std::function<void()>> steps_;
};

}  // namespace cmmp
