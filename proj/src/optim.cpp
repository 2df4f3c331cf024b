#include "rpeflow/optim.hpp"

#include <cmath>

namespace rpeflow {

template <typename T>
void Adam<T>::ensure_buffers(
    const std::vector<std::pair<std::string, Tensor<T>>>& params) {
  if (!m_.empty()) {
    if (m_.size() != params.size()) {
      throw ContractError("adam: parameter list changed between steps");
    }
    return;
  }
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& [name, p] : params) {
    m_.push_back(Tensor<T>::zeros(p.shape()));
    v_.push_back(Tensor<T>::zeros(p.shape()));
  }
}

template <typename T>
void Adam<T>::step(std::vector<std::pair<std::string, Tensor<T>>>& params) {
  ensure_buffers(params);
  ++t_;
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta1),
                                               static_cast<double>(t_)));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta2),
                                               static_cast<double>(t_)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].second.raw_values();
    auto m = m_[i].raw_values();
    auto v = v_[i].raw_values();
    const bool has_grad = params[i].second.has_grad();
    std::span<const T> grad;
    if (has_grad) grad = params[i].second.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T g = (has_grad ? grad[j] : T(0)) + cfg_.weight_decay * values[j];
      m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * g * g;
      const T mhat = m[j] / bc1;
      const T vhat = v[j] / bc2;
      values[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Adam<T>::state(
    const std::vector<std::pair<std::string, Tensor<T>>>& params) {
  ensure_buffers(params);
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.reserve(2 * params.size() + 1);
  out.emplace_back("adam.t",
                   Tensor<T>::from({1}, {static_cast<T>(t_)}));
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.emplace_back("adam.m." + params[i].first, m_[i]);
    out.emplace_back("adam.v." + params[i].first, v_[i]);
  }
  return out;
}

template <typename T>
void Adam<T>::load_state(
    const std::vector<std::pair<std::string, Tensor<T>>>& params,
    const std::vector<std::pair<std::string, Tensor<T>>>& state) {
  ensure_buffers(params);
  for (const auto& [name, t] : state) {
    if (name == "adam.t") {
      t_ = static_cast<std::uint64_t>(t.at(0));
      continue;
    }
    bool found = false;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (name == "adam.m." + params[i].first) {
        std::copy(t.values().begin(), t.values().end(),
                  m_[i].raw_values().begin());
        found = true;
        break;
      }
      if (name == "adam.v." + params[i].first) {
        std::copy(t.values().begin(), t.values().end(),
                  v_[i].raw_values().begin());
        found = true;
        break;
      }
    }
    if (!found) {
      throw ContractError("adam: state tensor " + name +
                          " matches no parameter");
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace rpeflow
