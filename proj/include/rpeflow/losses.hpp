#pragma once

#include <span>
#include <vector>

#include "rpeflow/model.hpp"

namespace rpeflow {

template <typename T>
struct LossWeights {
  T alpha = T(10.0);  // 2D/3D balance
  T beta = T(0.01);   // feature-loss weight
  // Per-level weights, finest first; defaults to 2^(l-2) for level l.
  std::vector<T> lambda;
  // Normalizes each level's 2D term by valid-pixel count and 3D term by
  // point count; false restores the literal unaveraged sums.
  bool normalize = true;

  static LossWeights defaults(std::size_t levels);
};

template <typename T>
struct LevelGroundTruth {
  Tensor<T> flow2d;                  // H_l x W_l x 2, level-pixel units
  Tensor<T> valid;                   // (H_l*W_l), 1 where supervised
  std::size_t valid_count = 0;
  Tensor<T> flow3d;                  // N_l x 3
};

// Per-level targets: the full-resolution flow is area-averaged and value
// rescaled per halving; scene-flow targets reuse the model's sampling
// indices. The validity mask keeps a level pixel only when all children
// are valid.
template <typename T>
std::vector<LevelGroundTruth<T>> build_level_ground_truth(
    const Sample& sample, std::span<const LevelEstimate<T>> levels);

template <typename T>
Tensor<T> task_loss(std::span<const LevelEstimate<T>> levels,
                    std::span<const LevelGroundTruth<T>> gts,
                    const LossWeights<T>& weights);

template <typename T>
Tensor<T> feature_loss(std::span<const LevelEstimate<T>> levels,
                       const LossWeights<T>& weights);

template <typename T>
Tensor<T> total_loss(const Tensor<T>& task, const Tensor<T>& feat,
                     const LossWeights<T>& weights);

}  // namespace rpeflow
