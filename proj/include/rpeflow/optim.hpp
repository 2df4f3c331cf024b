#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rpeflow/tensor.hpp"

namespace rpeflow {

template <typename T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(1e-6);  // L2 added to the gradient
};

// Adaptive-moment optimizer. Moment buffers align with the parameter list
// given to the first step() call and are exposed as named tensors for
// checkpointing, so training can resume bit-exactly.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig<T> cfg) : cfg_(cfg) {}

  void step(std::vector<std::pair<std::string, Tensor<T>>>& params);

  std::uint64_t iterations() const { return t_; }

  // Moment buffers plus the step counter, named for the checkpoint.
  std::vector<std::pair<std::string, Tensor<T>>> state(
      const std::vector<std::pair<std::string, Tensor<T>>>& params);
  void load_state(
      const std::vector<std::pair<std::string, Tensor<T>>>& params,
      const std::vector<std::pair<std::string, Tensor<T>>>& state);

 private:
  void ensure_buffers(
      const std::vector<std::pair<std::string, Tensor<T>>>& params);

  AdamConfig<T> cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace rpeflow
