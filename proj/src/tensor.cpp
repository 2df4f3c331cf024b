#include "rpeflow/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rpeflow {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto d = std::make_shared<Data>();
  d->values.assign(shape_numel(shape), value);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values,
                          bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  auto d = std::make_shared<Data>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from(Shape{}, {value}, requires_grad);
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) {
    throw Error("tensor: gradient requested but none was accumulated");
  }
  return data_->grad;
}

template <typename T>
std::span<T> Tensor<T>::raw_grad() {
  data_->ensure_grad();
  return data_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (data_) data_->grad.clear();
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw ShapeError("tensor: item() on non-scalar shape " +
                     shape_str(shape()));
  }
  return data_->values[0];
}

template <typename T>
T Tensor<T>::at2(std::size_t i, std::size_t j) const {
  return data_->values.at(i * shape().at(1) + j);
}

template <typename T>
T Tensor<T>::at3(std::size_t i, std::size_t j, std::size_t k) const {
  return data_->values.at((i * shape().at(1) + j) * shape().at(2) + k);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_->values) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

namespace {
template <typename T>
thread_local Tape<T>* g_current_tape = nullptr;
}

template <typename T>
Tape<T>::Tape() {
  previous_ = g_current_tape<T>;
  g_current_tape<T> = this;
}

template <typename T>
Tape<T>::~Tape() {
  g_current_tape<T> = previous_;
}

template <typename T>
Tape<T>* Tape<T>::current() {
  return g_current_tape<T>;
}

template <typename T>
void Tape<T>::record(std::function<void()> backward_fn) {
  records_.push_back(std::move(backward_fn));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& root) {
  if (root.size() != 1) {
    throw ShapeError("backward: root must be a single value, got shape " +
                     shape_str(root.shape()));
  }
  auto data = root.data();
  data->ensure_grad();
  data->grad[0] += T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    (*it)();
  }
}

template <typename T>
NoGradGuard<T>::NoGradGuard() {
  saved_ = g_current_tape<T>;
  g_current_tape<T> = nullptr;
}

template <typename T>
NoGradGuard<T>::~NoGradGuard() {
  g_current_tape<T> = saved_;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class NoGradGuard<float>;
template class NoGradGuard<double>;

}  // namespace rpeflow
