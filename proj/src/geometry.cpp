#include "rpeflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rpeflow {

void CameraIntrinsics::validate() const {
  if (f <= 0) throw GeometryError("camera: focal length must be positive");
  if (width == 0 || height == 0) {
    throw GeometryError("camera: image extents must be positive");
  }
  if (cx < 0 || cx >= static_cast<double>(width) || cy < 0 ||
      cy >= static_cast<double>(height)) {
    throw GeometryError("camera: principal point outside the image");
  }
}

CameraIntrinsics CameraIntrinsics::halved() const {
  CameraIntrinsics out = *this;
  out.f = f / 2.0;
  out.cx = cx / 2.0;
  out.cy = cy / 2.0;
  out.width = width / 2;
  out.height = height / 2;
  return out;
}

template <typename T>
void PointSet<T>::validate() const {
  if (!positions.defined() || positions.rank() != 2 ||
      positions.shape()[1] != 3) {
    throw GeometryError("point set: positions must be N x 3");
  }
  const auto v = positions.values();
  for (std::size_t i = 0; i < count(); ++i) {
    if (v[3 * i + 2] <= T(0)) {
      throw GeometryError("point set: point " + std::to_string(i) +
                          " has non-positive depth");
    }
  }
  if (features.defined() && features.shape()[0] != count()) {
    throw GeometryError("point set: feature rows do not match point count");
  }
}

template <typename T>
Tensor<T> project(const Tensor<T>& positions, const CameraIntrinsics& cam) {
  if (positions.rank() != 2 || positions.shape()[1] != 3) {
    throw GeometryError("project: positions must be N x 3");
  }
  const auto v = positions.values();
  const std::size_t n = positions.shape()[0];
  for (std::size_t i = 0; i < n; ++i) {
    if (v[3 * i + 2] <= T(0)) {
      throw GeometryError("project: point " + std::to_string(i) +
                          " behind the camera (z="
                          + std::to_string(static_cast<double>(v[3 * i + 2])) +
                          ")");
    }
  }
  auto x = slice(positions, 1, 0, 1);
  auto y = slice(positions, 1, 1, 1);
  auto z = slice(positions, 1, 2, 1);
  auto u = div(x, z) * static_cast<T>(cam.f) + static_cast<T>(cam.cx);
  auto vv = div(y, z) * static_cast<T>(cam.f) + static_cast<T>(cam.cy);
  return concat<T>({u, vv}, 1);
}

template <typename T>
BackprojectResult<T> backproject(const Tensor<T>& depth,
                                 const std::vector<std::uint8_t>& valid,
                                 const CameraIntrinsics& cam) {
  if (depth.rank() != 2) throw GeometryError("backproject: depth must be HxW");
  const std::size_t h = depth.shape()[0];
  const std::size_t w = depth.shape()[1];
  if (!valid.empty() && valid.size() != h * w) {
    throw GeometryError("backproject: mask size mismatch");
  }
  const auto dv = depth.values();
  BackprojectResult<T> out;
  std::vector<T> pos;
  for (std::size_t yy = 0; yy < h; ++yy) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      const std::size_t p = yy * w + xx;
      if (!valid.empty() && !valid[p]) continue;
      const T z = dv[p];
      if (z <= T(0)) {
        throw GeometryError("backproject: non-positive depth at pixel " +
                            std::to_string(p));
      }
      pos.push_back((static_cast<T>(xx) - static_cast<T>(cam.cx)) * z /
                    static_cast<T>(cam.f));
      pos.push_back((static_cast<T>(yy) - static_cast<T>(cam.cy)) * z /
                    static_cast<T>(cam.f));
      pos.push_back(z);
      out.pixel_index.push_back(p);
    }
  }
  if (out.pixel_index.empty()) {
    throw GeometryError("backproject: no valid depth pixels");
  }
  out.positions =
      Tensor<T>::from({out.pixel_index.size(), 3}, std::move(pos));
  return out;
}

template <typename T>
Tensor<T> scatter_interpolate(const PointSet<T>& points,
                              const CameraIntrinsics& cam, std::size_t height,
                              std::size_t width, const Tensor<T>& mix) {
  if (!points.features.defined()) {
    throw GeometryError("scatter_interpolate: points carry no features");
  }
  const std::size_t c_in = points.features.shape()[1];
  if (mix.rank() != 2 || mix.shape()[0] != c_in) {
    throw ShapeError("scatter_interpolate: mixing weights must be C_in x C_out");
  }
  const std::size_t c_out = mix.shape()[1];
  auto coords = project(points.positions, cam);
  auto dense = splat_bilinear(points.features, coords, height, width, true);
  auto flat = reshape(dense, {height * width, c_in});
  auto mixed = matmul(flat, mix);
  return reshape(mixed, {height, width, c_out});
}

template <typename T>
Tensor<T> warp2d(const Tensor<T>& feat2, const Tensor<T>& flow) {
  if (feat2.rank() != 3) throw ShapeError("warp2d: features must be HxWxC");
  if (flow.rank() != 3 || flow.shape()[2] != 2 ||
      flow.shape()[0] != feat2.shape()[0] ||
      flow.shape()[1] != feat2.shape()[1]) {
    throw ShapeError("warp2d: flow must be HxWx2 matching the features");
  }
  const std::size_t h = feat2.shape()[0];
  const std::size_t w = feat2.shape()[1];
  const std::size_t c = feat2.shape()[2];
  auto grid = coords_grid<T>(h, w);
  auto coords = add(grid, reshape(flow, {h * w, 2}));
  auto rows = bilinear_sample(feat2, coords);
  return reshape(rows, {h, w, c});
}

template <typename T>
Tensor<T> warp3d(const Tensor<T>& features2, const Tensor<T>& positions2,
                 const Tensor<T>& positions1, const Tensor<T>& sceneflow,
                 std::size_t k) {
  if (positions2.rank() != 2 || positions2.shape()[1] != 3) {
    throw GeometryError("warp3d: frame-2 positions must be N x 3");
  }
  const std::size_t m = positions2.shape()[0];
  if (m == 0) throw GeometryError("warp3d: frame-2 point set is empty");
  if (!same_shape(positions1.shape(), sceneflow.shape())) {
    throw ShapeError("warp3d: scene flow rows must match pc1");
  }
  if (features2.rank() != 2 || features2.shape()[0] != m) {
    throw ShapeError("warp3d: features must be N2 x C");
  }
  const std::size_t n = positions1.shape()[0];
  const std::size_t c = features2.shape()[1];
  const std::size_t kk = std::min(k, m);

  auto query = add(positions1, sceneflow);

  // Neighbor selection is data-driven; the IDW weights stay on the tape.
  const auto qv = query.values();
  const auto pv = positions2.values();
  std::vector<double> qd(qv.begin(), qv.end());
  std::vector<double> pd(pv.begin(), pv.end());
  const auto idx = knn_indices(qd, pd, 3, kk);

  std::vector<std::size_t> query_rep(n * kk);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kk; ++j) query_rep[i * kk + j] = i;
  }
  auto q_rep = gather_rows(query, query_rep);       // (N*k) x 3
  auto p_near = gather_rows(positions2, idx);       // (N*k) x 3
  auto diff = sub(q_rep, p_near);
  auto dist2 = sum(square(diff), 1);                // (N*k)
  auto dist = sqrt(dist2 + static_cast<T>(1e-16));
  auto wraw = div(Tensor<T>::full({n * kk}, T(1)),
                  dist + static_cast<T>(1e-8));
  auto wgrid = reshape(wraw, {n, kk});
  auto wsum = sum(wgrid, 1, /*keepdim=*/true);      // N x 1
  auto wnorm = div(wgrid, wsum);
  auto f_near = reshape(gather_rows(features2, idx), {n, kk, c});
  auto weighted = mul(f_near, reshape(wnorm, {n, kk, 1}));
  return sum(weighted, 1);                          // N x C
}

std::vector<std::size_t> knn_indices(const std::vector<double>& query,
                                     const std::vector<double>& ref,
                                     std::size_t dim, std::size_t k) {
  const std::size_t nq = query.size() / dim;
  const std::size_t nr = ref.size() / dim;
  if (k > nr) throw GeometryError("knn: k exceeds reference count");
  std::vector<std::size_t> out(nq * k);
  std::vector<std::pair<double, std::size_t>> dists(nr);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      double d2 = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = query[i * dim + d] - ref[j * dim + d];
        d2 += diff * diff;
      }
      dists[j] = {d2, j};
    }
    std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = dists[j].second;
  }
  return out;
}

std::vector<std::size_t> furthest_point_sample(const std::vector<double>& pos,
                                               std::size_t dim,
                                               std::size_t count) {
  const std::size_t n = pos.size() / dim;
  if (count > n) throw GeometryError("fps: requested more points than given");
  std::vector<std::size_t> picked;
  picked.reserve(count);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::size_t cur = 0;
  for (std::size_t it = 0; it < count; ++it) {
    picked.push_back(cur);
    double far_d = -1.0;
    std::size_t far_i = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = pos[j * dim + d] - pos[cur * dim + d];
        d2 += diff * diff;
      }
      best[j] = std::min(best[j], d2);
      if (best[j] > far_d) {
        far_d = best[j];
        far_i = j;
      }
    }
    cur = far_i;
  }
  return picked;
}

template <typename T>
Tensor<T> upsample_flow2d(const Tensor<T>& flow, std::size_t out_h,
                          std::size_t out_w) {
  if (flow.rank() != 3 || flow.shape()[2] != 2) {
    throw ShapeError("upsample_flow2d: flow must be HxWx2");
  }
  const std::size_t in_h = flow.shape()[0];
  const std::size_t in_w = flow.shape()[1];
  const T sx = static_cast<T>(in_w) / static_cast<T>(out_w);
  const T sy = static_cast<T>(in_h) / static_cast<T>(out_h);
  std::vector<T> coords(out_h * out_w * 2);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      coords[(y * out_w + x) * 2] =
          (static_cast<T>(x) + T(0.5)) * sx - T(0.5);
      coords[(y * out_w + x) * 2 + 1] =
          (static_cast<T>(y) + T(0.5)) * sy - T(0.5);
    }
  }
  auto grid = Tensor<T>::from({out_h * out_w, 2}, std::move(coords));
  auto rows = bilinear_sample(flow, grid);
  const T value_scale = static_cast<T>(out_w) / static_cast<T>(in_w);
  return reshape(rows, {out_h, out_w, 2}) * value_scale;
}

template <typename T>
Tensor<T> interpolate_points_idw(const Tensor<T>& values,
                                 const Tensor<T>& coarse_positions,
                                 const Tensor<T>& fine_positions,
                                 std::size_t k) {
  const std::size_t nc = coarse_positions.shape()[0];
  const std::size_t nf = fine_positions.shape()[0];
  const std::size_t d = values.shape()[1];
  const std::size_t kk = std::min(k, nc);
  const auto cp = coarse_positions.values();
  const auto fp = fine_positions.values();
  std::vector<double> cpd(cp.begin(), cp.end());
  std::vector<double> fpd(fp.begin(), fp.end());
  const auto idx = knn_indices(fpd, cpd, 3, kk);

  // Positions are data, so the weights are plain constants here.
  std::vector<T> weights(nf * kk);
  for (std::size_t i = 0; i < nf; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < kk; ++j) {
      const std::size_t r = idx[i * kk + j];
      double d2 = 0;
      for (std::size_t dd = 0; dd < 3; ++dd) {
        const double diff = fpd[i * 3 + dd] - cpd[r * 3 + dd];
        d2 += diff * diff;
      }
      const double w = 1.0 / (std::sqrt(d2) + 1e-8);
      weights[i * kk + j] = static_cast<T>(w);
      total += w;
    }
    for (std::size_t j = 0; j < kk; ++j) {
      weights[i * kk + j] /= static_cast<T>(total);
    }
  }
  auto gathered = reshape(gather_rows(values, idx), {nf, kk, d});
  auto wt = Tensor<T>::from({nf, kk, 1}, std::move(weights));
  return sum(mul(gathered, wt), 1);
}

#define RPEFLOW_INSTANTIATE_GEOMETRY(T)                                       \
  template struct PointSet<T>;                                                \
  template Tensor<T> project<T>(const Tensor<T>&, const CameraIntrinsics&);   \
  template BackprojectResult<T> backproject<T>(                               \
      const Tensor<T>&, const std::vector<std::uint8_t>&,                     \
      const CameraIntrinsics&);                                               \
  template Tensor<T> scatter_interpolate<T>(const PointSet<T>&,               \
                                            const CameraIntrinsics&,          \
                                            std::size_t, std::size_t,         \
                                            const Tensor<T>&);                \
  template Tensor<T> warp2d<T>(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> warp3d<T>(const Tensor<T>&, const Tensor<T>&,            \
                               const Tensor<T>&, const Tensor<T>&,            \
                               std::size_t);                                  \
  template Tensor<T> upsample_flow2d<T>(const Tensor<T>&, std::size_t,        \
                                        std::size_t);                         \
  template Tensor<T> interpolate_points_idw<T>(const Tensor<T>&,              \
                                               const Tensor<T>&,              \
                                               const Tensor<T>&, std::size_t);

RPEFLOW_INSTANTIATE_GEOMETRY(float)
RPEFLOW_INSTANTIATE_GEOMETRY(double)

#undef RPEFLOW_INSTANTIATE_GEOMETRY

}  // namespace rpeflow
