#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rpeflow/tensor.hpp"

namespace rpeflow {

// Elementwise operation kinds. Binary kinds broadcast under
// trailing-dimension alignment; unary kinds ignore the second argument.
enum class EwOp {
  Add,
  Sub,
  Mul,
  Div,
  Exp,
  Log,
  Neg,
  Relu,
  LeakyRelu,  // slope 0.1
  Square,
  Sqrt,
};

bool ew_is_binary(EwOp op);

Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a,
                      std::optional<Tensor<T>> b = std::nullopt);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> exp(const Tensor<T>& a);
template <typename T>
Tensor<T> log(const Tensor<T>& a);
template <typename T>
Tensor<T> neg(const Tensor<T>& a);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a);
template <typename T>
Tensor<T> square(const Tensor<T>& a);
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) {
  return div(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) {
  return mul(a, Tensor<T>::scalar(s));
}
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, T s) {
  return add(a, Tensor<T>::scalar(s));
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, T s) {
  return sub(a, Tensor<T>::scalar(s));
}

// Matrix product. Supports rank-2 x rank-2, rank-3 x rank-2 (shared right
// operand) and rank-3 x rank-3 (matching batch extents).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Numerically stabilized softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis);

// 2D convolution over channels-last H x W x Cin input. Dense weights are
// k x k x Cin x Cout; depthwise weights are k x k x C (Cout == Cin).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                 std::size_t padding, bool depthwise = false);

// Mean-0/var-1 normalization along `axis` with eps = 1e-5. Affine scale and
// shift are applied by the caller with broadcast mul/add.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis, bool keepdim = false);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis, bool keepdim = false);

// Maximum along `axis`; gradient routes to the first maximal element.
template <typename T>
Tensor<T> max_axis(const Tensor<T>& a, std::size_t axis);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis);

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start,
                std::size_t len);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& dims);

// transpose of a rank-2 tensor
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

// Row gather along the leading axis; backward scatter-adds.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<std::size_t>& idx);

// Bilinear sampling of a H x W x C grid at N real-valued (u, v) pixel
// coordinates. Out-of-range coordinates clamp to the border. Differentiable
// in both the grid and the coordinates (zero coordinate gradient in the
// clamped regime).
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& feat, const Tensor<T>& coords);

// Bilinear splatting of N feature rows onto an H x W grid at the given
// (u, v) coordinates (treated as data). With `normalize` each pixel divides
// by its accumulated weight; pixels that receive no mass output zeros.
// Differentiable w.r.t. the features.
template <typename T>
Tensor<T> splat_bilinear(const Tensor<T>& features, const Tensor<T>& coords,
                         std::size_t height, std::size_t width,
                         bool normalize = true);

// Accumulated splat weight per pixel (plain data, used by splat oracles).
template <typename T>
std::vector<T> splat_weight_map(const Tensor<T>& coords, std::size_t height,
                                std::size_t width);

// Constant grid of pixel coordinates, row-major, shape (H*W) x 2 as (u, v).
template <typename T>
Tensor<T> coords_grid(std::size_t height, std::size_t width);

// Checks all values finite, throwing DataError tagged with `what` otherwise.
template <typename T>
void check_finite(const Tensor<T>& t, const char* what);

}  // namespace rpeflow
