#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "rpeflow/events.hpp"
#include "rpeflow/fusion.hpp"
#include "rpeflow/geometry.hpp"
#include "rpeflow/mireg.hpp"
#include "rpeflow/scenegen.hpp"

namespace rpeflow {

struct ModelConfig {
  std::size_t levels = 5;
  // finest-first; processing runs from the last (coarsest) entry down
  std::vector<std::size_t> channels2d = {16, 32, 48, 64, 96};
  std::vector<std::size_t> channels3d = {16, 32, 48, 64, 96};
  std::size_t corr_radius = 4;
  std::size_t knn = 16;
  std::size_t event_bins = 10;
  std::size_t latent_dim = 32;

  void validate() const;
  static ModelConfig tiny();

  nlohmann::json to_json() const;
  // Rejects unknown keys.
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ModelOptions {
  FusionMode fusion = FusionMode::Attention;
  bool use_events = true;  // false zeroes the event voxel grid
  bool compute_mi = true;  // false skips every MI term
};

template <typename T>
struct ModelInputs {
  Tensor<T> intensity0;  // H x W x 1
  Tensor<T> intensity1;
  Tensor<T> pc0;         // N x 3
  Tensor<T> pc1;         // M x 3
  Tensor<T> event_grid;  // H x W x B
  CameraIntrinsics cam;
};

template <typename T>
ModelInputs<T> make_inputs(const Sample& sample, const ModelConfig& cfg,
                           const ModelOptions& opt);

template <typename T>
struct LevelEstimate {
  std::size_t height = 0, width = 0;
  Tensor<T> flow2d;     // H_l x W_l x 2
  Tensor<T> flow3d;     // N_l x 3
  Tensor<T> positions;  // N_l x 3
  std::vector<std::size_t> point_indices;  // into the original pc0
  Tensor<T> mi_fs1, mi_fs2, mi_ms, mi_es;  // undefined when MI is off
};

template <typename T>
struct ForwardResult {
  std::vector<LevelEstimate<T>> levels;  // index 0 = finest level
  Tensor<T> flow2d_full;                 // H x W x 2
  Tensor<T> flow3d_full;                 // N x 3 on the original pc0
};

// Coarse-to-fine joint estimator: Siamese pyramid encoders for images,
// events and point clouds, per-level feature/motion/estimation fusion
// stages, 2D and 3D cost volumes, and residual flow heads.
template <typename T>
class Model {
 public:
  Model(ModelConfig cfg, ModelOptions opt, std::uint64_t seed);

  ForwardResult<T> forward(const ModelInputs<T>& in);

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const ModelOptions& options() const { return opt_; }

  struct PointLevel {
    Tensor<T> positions;
    Tensor<T> features;
    std::vector<std::size_t> indices;  // into the original cloud
  };

  // Siamese feature pyramids; the same weights serve both frames.
  std::vector<Tensor<T>> encode_grid(const Tensor<T>& input, bool events);
  std::vector<PointLevel> encode_points(const Tensor<T>& positions);

 private:
  struct Conv {
    Tensor<T> w, b;
  };
  struct Mlp {
    Tensor<T> w, b;
  };
  struct LevelWeights {
    Conv img1, img2;  // stride-2 then stride-1 blocks, shared across frames
    Conv ev1, ev2;
    Mlp enc3d;

    MafWeights<T> fs2d, fs3d;
    Tensor<T> fs_scatter;
    MiHead<T> fs_head_r, fs_head_pc;

    Mlp cv3d;
    MafWeights<T> ms2d, ms3d;
    Tensor<T> ms_scatter;
    MiHead<T> ms_head_m2d, ms_head_m3d, ms_head_ev;

    Conv dec2d_a, dec2d_b, dec2d_c;
    Mlp dec3d_a, dec3d_b, dec3d_c;
    MafWeights<T> es2d, es3d;
    Tensor<T> es_scatter;
    MiHead<T> es_head_h2d, es_head_h3d, es_head_ev;

    Conv flow_head2d;
    Mlp flow_head3d;
  };

  ModelConfig cfg_;
  ModelOptions opt_;
  ParamStore<T> params_;
  std::vector<LevelWeights> levels_;
};

}  // namespace rpeflow
