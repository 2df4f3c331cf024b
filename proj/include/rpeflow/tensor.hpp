#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rpeflow/errors.hpp"

namespace rpeflow {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

namespace detail {

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
  }
};

}  // namespace detail

// Value-semantic handle to an immutable N-d array. Copies share storage;
// tensors that participate in a tape are never mutated in place.
template <typename T>
class Tensor {
 public:
  using Data = detail::TensorData<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t size() const { return data_->values.size(); }
  std::size_t extent(std::size_t axis) const { return data_->shape.at(axis); }
  bool requires_grad() const { return data_ && data_->requires_grad; }

  std::span<const T> values() const { return data_->values; }
  // Mutation is only sanctioned for leaf tensors before they enter a tape
  // (parameter initialization, optimizer updates).
  std::span<T> raw_values() { return data_->values; }

  bool has_grad() const { return data_ && !data_->grad.empty(); }
  std::span<const T> grad() const;
  std::span<T> raw_grad();
  void zero_grad();

  T item() const;
  T at(std::size_t i) const { return data_->values.at(i); }
  T at2(std::size_t i, std::size_t j) const;
  T at3(std::size_t i, std::size_t j, std::size_t k) const;

  std::shared_ptr<Data> data() const { return data_; }

  bool all_finite() const;

 private:
  explicit Tensor(std::shared_ptr<Data> d) : data_(std::move(d)) {}
  std::shared_ptr<Data> data_;
};

// Reverse-mode tape. Constructing a Tape makes it current for this thread;
// ops executed while it is current record their backward closures in
// execution order, so one reverse sweep visits every record exactly once.
template <typename T>
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(std::function<void()> backward_fn);
  std::size_t num_records() const { return records_.size(); }

  // Seeds d(root)/d(root) = 1 and propagates through all records in reverse.
  // root must hold exactly one element.
  void backward(const Tensor<T>& root);

 private:
  std::vector<std::function<void()>> records_;
  Tape* previous_ = nullptr;
};

// Temporarily disables recording on the current thread (inference mode).
template <typename T>
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape<T>* saved_;
};

template <typename T>
bool grad_enabled_for(const Tensor<T>& t) {
  return Tape<T>::current() != nullptr && t.requires_grad();
}

}  // namespace rpeflow
