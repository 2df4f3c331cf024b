#pragma once

#include <cstdint>
#include <vector>

#include "rpeflow/ops.hpp"
#include "rpeflow/tensor.hpp"

namespace rpeflow {

// Pinhole camera with principal point, pixel units.
struct CameraIntrinsics {
  double f = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::size_t width = 0;
  std::size_t height = 0;

  void validate() const;
  // Intrinsics of the next-coarser pyramid level (all quantities halve).
  CameraIntrinsics halved() const;
};

// Camera-frame point set, z forward. Features are optional per-point rows.
template <typename T>
struct PointSet {
  Tensor<T> positions;  // N x 3
  Tensor<T> features;   // N x C when defined

  std::size_t count() const {
    return positions.defined() ? positions.shape()[0] : 0;
  }
  void validate() const;
};

// u = f * x / z + cx, v = f * y / z + cy per point. Differentiable w.r.t.
// the positions; every z must be strictly positive.
template <typename T>
Tensor<T> project(const Tensor<T>& positions, const CameraIntrinsics& cam);

template <typename T>
struct BackprojectResult {
  Tensor<T> positions;                    // N x 3
  std::vector<std::size_t> pixel_index;   // row-major source pixel per point
};

// One 3D point per valid pixel, inverting the projection at the stored
// depth. `valid` may be empty (all pixels valid); zero entries are skipped.
template <typename T>
BackprojectResult<T> backproject(const Tensor<T>& depth,
                                 const std::vector<std::uint8_t>& valid,
                                 const CameraIntrinsics& cam);

// Sparse-to-dense transport: bilinear splat with per-pixel weight
// normalization followed by a learnable 1x1 mixing (C_in -> C_out).
template <typename T>
Tensor<T> scatter_interpolate(const PointSet<T>& points,
                              const CameraIntrinsics& cam, std::size_t height,
                              std::size_t width, const Tensor<T>& mix);

// Backward warp: out(x) = bilinear_sample(feat2, x + flow(x)).
template <typename T>
Tensor<T> warp2d(const Tensor<T>& feat2, const Tensor<T>& flow);

// Gathers frame-2 point features at pc1 + sceneflow positions by
// inverse-distance weighting over the k nearest frame-2 points.
// Differentiable w.r.t. the features and the scene flow.
template <typename T>
Tensor<T> warp3d(const Tensor<T>& features2, const Tensor<T>& positions2,
                 const Tensor<T>& positions1, const Tensor<T>& sceneflow,
                 std::size_t k = 3);

// k nearest rows of `ref` per row of `query` (exact, brute force), plain
// data. Ties break toward the lower index.
std::vector<std::size_t> knn_indices(const std::vector<double>& query,
                                     const std::vector<double>& ref,
                                     std::size_t dim, std::size_t k);

// Greedy furthest-point subsampling; starts at row 0 for determinism.
std::vector<std::size_t> furthest_point_sample(const std::vector<double>& pos,
                                               std::size_t dim,
                                               std::size_t count);

// Bilinear 2x upsampling of a flow field with the pixel-unit value rescale.
template <typename T>
Tensor<T> upsample_flow2d(const Tensor<T>& flow, std::size_t out_h,
                          std::size_t out_w);

// IDW (k = 3) interpolation of per-point values from coarse points onto
// fine points; values are not rescaled.
template <typename T>
Tensor<T> interpolate_points_idw(const Tensor<T>& values,
                                 const Tensor<T>& coarse_positions,
                                 const Tensor<T>& fine_positions,
                                 std::size_t k = 3);

}  // namespace rpeflow
