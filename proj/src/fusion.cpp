#include "rpeflow/fusion.hpp"

#include <cmath>

namespace rpeflow {

template <typename T>
MafWeights<T> make_maf_weights(ParamStore<T>& store, const std::string& prefix,
                               std::size_t channels,
                               std::size_t aux_channels_total,
                               bool spatial_qkv, FusionMode mode) {
  MafWeights<T> w;
  w.channels = channels;
  w.spatial_qkv = spatial_qkv;
  w.mode = mode;
  w.align = store.create(prefix + ".align", {aux_channels_total, channels},
                         Init::HeUniform, aux_channels_total);
  w.ln_pri_gamma = store.create(prefix + ".ln_pri.g", {channels}, Init::One);
  w.ln_pri_beta = store.create(prefix + ".ln_pri.b", {channels}, Init::Zero);
  w.ln_aux_gamma = store.create(prefix + ".ln_aux.g", {channels}, Init::One);
  w.ln_aux_beta = store.create(prefix + ".ln_aux.b", {channels}, Init::Zero);
  if (mode == FusionMode::Attention) {
    if (spatial_qkv) {
      w.query_w = store.create(prefix + ".q", {3, 3, channels},
                               Init::HeUniform, 9);
      w.key_w = store.create(prefix + ".k", {3, 3, channels}, Init::HeUniform,
                             9);
      w.value_w = store.create(prefix + ".v", {3, 3, channels},
                               Init::HeUniform, 9);
    } else {
      w.query_w = store.create(prefix + ".q", {channels}, Init::One);
      w.key_w = store.create(prefix + ".k", {channels}, Init::One);
      w.value_w = store.create(prefix + ".v", {channels}, Init::One);
    }
    w.proj = store.create(prefix + ".proj", {channels, channels},
                          Init::HeUniform, channels);
    w.log_temperature = store.create_const(
        prefix + ".log_tau", {},
        {static_cast<T>(std::log(std::sqrt(static_cast<double>(channels))))});
  } else {
    w.concat_mix = store.create(prefix + ".concat_mix",
                                {2 * channels, channels}, Init::HeUniform,
                                2 * channels);
  }
  return w;
}

template <typename T>
Tensor<T> align_aux(std::span<const Tensor<T>> aux, const Tensor<T>& align_w) {
  if (aux.empty()) throw ShapeError("align_aux: no auxiliary features");
  const std::size_t rows = aux[0].shape()[0];
  for (const auto& a : aux) {
    if (a.rank() != 2 || a.shape()[0] != rows) {
      throw ShapeError("align_aux: auxiliary features disagree on support");
    }
  }
  Tensor<T> cat = aux.size() == 1 ? aux[0] : concat(aux, 1);
  if (cat.shape()[1] != align_w.shape()[0]) {
    throw ShapeError("align_aux: alignment weights expect " +
                     std::to_string(align_w.shape()[0]) + " channels, got " +
                     std::to_string(cat.shape()[1]));
  }
  return matmul(cat, align_w);
}

namespace {

// LN over the channel axis followed by the learnable affine.
template <typename T>
Tensor<T> ln_affine(const Tensor<T>& rows, const Tensor<T>& gamma,
                    const Tensor<T>& beta) {
  return add(mul(layernorm(rows, 1), gamma), beta);
}

// Depthwise 3x3 (2D branch) or per-channel scale (3D branch).
template <typename T>
Tensor<T> qkv_transform(const Tensor<T>& rows, const Tensor<T>& weight,
                        bool spatial, std::size_t grid_h, std::size_t grid_w) {
  if (!spatial) {
    return mul(rows, weight);
  }
  const std::size_t c = rows.shape()[1];
  if (grid_h * grid_w != rows.shape()[0]) {
    throw ShapeError("cross_attention: grid extents do not match rows");
  }
  auto grid = reshape(rows, {grid_h, grid_w, c});
  auto out = conv2d(grid, weight, 1, 1, /*depthwise=*/true);
  return reshape(out, {grid_h * grid_w, c});
}

}  // namespace

template <typename T>
Tensor<T> cross_attention(const Tensor<T>& x_pri, const Tensor<T>& y_aux,
                          const MafWeights<T>& w, std::size_t grid_h,
                          std::size_t grid_w, Tensor<T>* attention_out) {
  if (x_pri.rank() != 2 || y_aux.rank() != 2) {
    throw ShapeError("cross_attention: inputs must be M x C rows");
  }
  if (x_pri.shape() != y_aux.shape()) {
    throw ShapeError("cross_attention: primary " + shape_str(x_pri.shape()) +
                     " and auxiliary " + shape_str(y_aux.shape()) +
                     " disagree");
  }
  const std::size_t c = x_pri.shape()[1];
  if (c != w.channels) {
    throw ShapeError("cross_attention: weights built for " +
                     std::to_string(w.channels) + " channels, input has " +
                     std::to_string(c));
  }

  if (w.mode == FusionMode::Concat) {
    auto mixed = matmul(concat<T>({x_pri, y_aux}, 1), w.concat_mix);
    return add(mixed, x_pri);
  }

  auto q = qkv_transform(ln_affine(x_pri, w.ln_pri_gamma, w.ln_pri_beta),
                         w.query_w, w.spatial_qkv, grid_h, grid_w);
  auto aux_ln = ln_affine(y_aux, w.ln_aux_gamma, w.ln_aux_beta);
  auto k = qkv_transform(aux_ln, w.key_w, w.spatial_qkv, grid_h, grid_w);
  auto v = qkv_transform(aux_ln, w.value_w, w.spatial_qkv, grid_h, grid_w);

  auto tau = exp(w.log_temperature);
  auto scores = div(matmul(transpose(q), k), tau);  // C x C
  // Normalizing over the axis contracted with the value channels makes each
  // fused channel a convex combination of auxiliary value channels.
  auto attention = softmax(scores, 0);
  if (attention.shape()[0] != c || attention.shape()[1] != c) {
    throw ShapeError("cross_attention: attention matrix must be C x C");
  }
  if (attention_out != nullptr) *attention_out = attention;
  auto fused = matmul(matmul(v, attention), w.proj);
  return add(fused, x_pri);
}

template <typename T>
Tensor<T> fuse_grid(const Tensor<T>& primary,
                    std::span<const Tensor<T>> aux_maps,
                    const MafWeights<T>& w) {
  if (primary.rank() != 3) {
    throw ShapeError("fuse_grid: primary must be H x W x C");
  }
  const std::size_t h = primary.shape()[0];
  const std::size_t wd = primary.shape()[1];
  const std::size_t c = primary.shape()[2];
  std::vector<Tensor<T>> flat;
  flat.reserve(aux_maps.size());
  for (const auto& m : aux_maps) {
    if (m.rank() != 3 || m.shape()[0] != h || m.shape()[1] != wd) {
      throw ShapeError("fuse_grid: auxiliary grid extents disagree");
    }
    flat.push_back(reshape(m, {h * wd, m.shape()[2]}));
  }
  auto y_aux = align_aux(std::span<const Tensor<T>>(flat), w.align);
  auto fused = cross_attention(reshape(primary, {h * wd, c}), y_aux, w, h, wd);
  return reshape(fused, {h, wd, c});
}

template <typename T>
Tensor<T> fuse_rows(const Tensor<T>& primary,
                    std::span<const Tensor<T>> aux_rows,
                    const MafWeights<T>& w) {
  if (primary.rank() != 2) {
    throw ShapeError("fuse_rows: primary must be N x C");
  }
  auto y_aux = align_aux(aux_rows, w.align);
  return cross_attention(primary, y_aux, w);
}

template <typename T>
Tensor<T> maf_2d(const Tensor<T>& image_feat,
                 const std::optional<Tensor<T>>& event_feat,
                 const PointSet<T>& points, const CameraIntrinsics& cam,
                 const Tensor<T>& scatter_mix, const MafWeights<T>& w) {
  const std::size_t h = image_feat.shape()[0];
  const std::size_t wd = image_feat.shape()[1];
  auto projected = scatter_interpolate(points, cam, h, wd, scatter_mix);
  std::vector<Tensor<T>> aux{projected};
  if (event_feat) aux.push_back(*event_feat);
  return fuse_grid(image_feat, std::span<const Tensor<T>>(aux), w);
}

template <typename T>
Tensor<T> maf_3d(const PointSet<T>& points, const Tensor<T>& image_feat,
                 const std::optional<Tensor<T>>& event_feat,
                 const CameraIntrinsics& cam, const MafWeights<T>& w) {
  if (!points.features.defined()) {
    throw ShapeError("maf_3d: point set carries no features");
  }
  auto coords = project(points.positions, cam);
  std::vector<Tensor<T>> aux{bilinear_sample(image_feat, coords)};
  if (event_feat) aux.push_back(bilinear_sample(*event_feat, coords));
  return fuse_rows(points.features, std::span<const Tensor<T>>(aux), w);
}

#define RPEFLOW_INSTANTIATE_FUSION(T)                                         \
  template struct MafWeights<T>;                                              \
  template MafWeights<T> make_maf_weights<T>(ParamStore<T>&,                  \
                                             const std::string&, std::size_t, \
                                             std::size_t, bool, FusionMode);  \
  template Tensor<T> align_aux<T>(std::span<const Tensor<T>>,                 \
                                  const Tensor<T>&);                          \
  template Tensor<T> cross_attention<T>(const Tensor<T>&, const Tensor<T>&,   \
                                        const MafWeights<T>&, std::size_t,    \
                                        std::size_t, Tensor<T>*);             \
  template Tensor<T> fuse_grid<T>(const Tensor<T>&,                           \
                                  std::span<const Tensor<T>>,                 \
                                  const MafWeights<T>&);                      \
  template Tensor<T> fuse_rows<T>(const Tensor<T>&,                           \
                                  std::span<const Tensor<T>>,                 \
                                  const MafWeights<T>&);                      \
  template Tensor<T> maf_2d<T>(const Tensor<T>&,                              \
                               const std::optional<Tensor<T>>&,               \
                               const PointSet<T>&, const CameraIntrinsics&,   \
                               const Tensor<T>&, const MafWeights<T>&);       \
  template Tensor<T> maf_3d<T>(const PointSet<T>&, const Tensor<T>&,          \
                               const std::optional<Tensor<T>>&,               \
                               const CameraIntrinsics&, const MafWeights<T>&);

RPEFLOW_INSTANTIATE_FUSION(float)
RPEFLOW_INSTANTIATE_FUSION(double)

#undef RPEFLOW_INSTANTIATE_FUSION

}  // namespace rpeflow
