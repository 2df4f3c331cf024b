#include "rpeflow/params.hpp"

#include <cmath>

namespace rpeflow {

template <typename T>
Tensor<T>& ParamStore<T>::create(const std::string& name, Shape shape,
                                 Init init, std::size_t fan_in) {
  if (index_.count(name)) {
    throw ContractError("parameter already exists: " + name);
  }
  const std::size_t n = shape_numel(shape);
  std::vector<T> values(n, T(0));
  switch (init) {
    case Init::Zero:
      break;
    case Init::One:
      values.assign(n, T(1));
      break;
    case Init::HeUniform: {
      if (fan_in == 0) {
        throw ContractError("HeUniform init needs fan_in for " + name);
      }
      const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : values) v = static_cast<T>(rng_.uniform(-a, a));
      break;
    }
  }
  Tensor<T> t = Tensor<T>::from(std::move(shape), std::move(values),
                                /*requires_grad=*/true);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

template <typename T>
Tensor<T>& ParamStore<T>::create_const(const std::string& name, Shape shape,
                                       std::vector<T> values) {
  if (index_.count(name)) {
    throw ContractError("parameter already exists: " + name);
  }
  Tensor<T> t = Tensor<T>::from(std::move(shape), std::move(values),
                                /*requires_grad=*/true);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

template <typename T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ContractError("unknown parameter: " + name);
  }
  return items_[it->second].second;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ContractError("unknown parameter: " + name);
  }
  return items_[it->second].second;
}

template <typename T>
std::size_t ParamStore<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_all_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace rpeflow
