#pragma once

#include <optional>
#include <span>
#include <string>

#include "rpeflow/geometry.hpp"
#include "rpeflow/ops.hpp"
#include "rpeflow/params.hpp"

namespace rpeflow {

enum class FusionMode {
  Attention,  // channel cross-attention with residual projection
  Concat,     // channel concatenation + 1x1 mixing (ablation baseline)
};

// Weights of one multimodal fusion block. The query/key/value transforms
// are depthwise 3x3 convolutions on the 2D branch (spatial_qkv) and
// per-channel scales on the 3D branch, where point sets carry no grid
// neighborhood.
template <typename T>
struct MafWeights {
  std::size_t channels = 0;
  bool spatial_qkv = false;
  FusionMode mode = FusionMode::Attention;

  Tensor<T> align;          // C_aux_total x C
  Tensor<T> ln_pri_gamma;   // C
  Tensor<T> ln_pri_beta;    // C
  Tensor<T> ln_aux_gamma;   // C
  Tensor<T> ln_aux_beta;    // C
  Tensor<T> query_w;        // 3x3xC or C
  Tensor<T> key_w;          // 3x3xC or C
  Tensor<T> value_w;        // 3x3xC or C
  Tensor<T> proj;           // C x C
  Tensor<T> log_temperature;  // scalar; tau = exp(log_temperature) > 0
  Tensor<T> concat_mix;     // 2C x C, Concat mode only
};

template <typename T>
MafWeights<T> make_maf_weights(ParamStore<T>& store, const std::string& prefix,
                               std::size_t channels,
                               std::size_t aux_channels_total,
                               bool spatial_qkv, FusionMode mode);

// Channel concatenation of the auxiliary features followed by 1x1 learnable
// mixing to the primary channel count. Inputs are flattened rows M x C_i.
template <typename T>
Tensor<T> align_aux(std::span<const Tensor<T>> aux, const Tensor<T>& align_w);

// Channel cross-attention between flattened primary rows (M x C) and the
// aligned auxiliary rows (M x C). The attention matrix is C x C, never
// M x M; when `attention_out` is given, it receives that matrix. For the
// spatial form, grid_h x grid_w must equal M.
template <typename T>
Tensor<T> cross_attention(const Tensor<T>& x_pri, const Tensor<T>& y_aux,
                          const MafWeights<T>& w, std::size_t grid_h = 0,
                          std::size_t grid_w = 0,
                          Tensor<T>* attention_out = nullptr);

// Grid-primary fusion: primary H x W x C with auxiliary maps of arbitrary
// channel counts on the same grid.
template <typename T>
Tensor<T> fuse_grid(const Tensor<T>& primary,
                    std::span<const Tensor<T>> aux_maps,
                    const MafWeights<T>& w);

// Point-primary fusion: primary N x C with auxiliary rows on the same
// points (auxiliaries are pre-sampled at the projected coordinates).
template <typename T>
Tensor<T> fuse_rows(const Tensor<T>& primary,
                    std::span<const Tensor<T>> aux_rows,
                    const MafWeights<T>& w);

// Fusion with the image grid as primary modality: point features are
// scatter-interpolated onto the plane and fused together with the optional
// event map.
template <typename T>
Tensor<T> maf_2d(const Tensor<T>& image_feat,
                 const std::optional<Tensor<T>>& event_feat,
                 const PointSet<T>& points, const CameraIntrinsics& cam,
                 const Tensor<T>& scatter_mix, const MafWeights<T>& w);

// Fusion with the point set as primary modality: grid features are sampled
// at the projected point coordinates and fused.
template <typename T>
Tensor<T> maf_3d(const PointSet<T>& points, const Tensor<T>& image_feat,
                 const std::optional<Tensor<T>>& event_feat,
                 const CameraIntrinsics& cam, const MafWeights<T>& w);

}  // namespace rpeflow
