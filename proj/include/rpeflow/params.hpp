#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rpeflow/rng.hpp"
#include "rpeflow/tensor.hpp"

namespace rpeflow {

enum class Init {
  Zero,
  One,
  HeUniform,    // uniform(-a, a) with a = sqrt(6 / fan_in)
};

// Named collection of trainable tensors. Creation order is the iteration
// order, which pins the RNG consumption sequence for reproducible init.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  Tensor<T>& create(const std::string& name, Shape shape, Init init,
                    std::size_t fan_in = 0);

  // Creates a parameter holding the given values (used for scalars like the
  // attention temperature).
  Tensor<T>& create_const(const std::string& name, Shape shape,
                          std::vector<T> values);

  bool contains(const std::string& name) const {
    return index_.count(name) > 0;
  }
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& items() const {
    return items_;
  }
  std::size_t count() const { return items_.size(); }
  std::size_t total_values() const;

  void zero_all_grads();

 private:
  Rng rng_;
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace rpeflow
