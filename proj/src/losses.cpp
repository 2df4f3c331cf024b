#include "rpeflow/losses.hpp"

#include <cmath>

namespace rpeflow {

template <typename T>
LossWeights<T> LossWeights<T>::defaults(std::size_t levels) {
  LossWeights<T> w;
  w.lambda.resize(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    // level l+1 carries weight 2^(l-1) in zero-based terms
    w.lambda[l] = static_cast<T>(
        std::pow(2.0, static_cast<double>(l + 1) - 2.0));
  }
  return w;
}

template <typename T>
std::vector<LevelGroundTruth<T>> build_level_ground_truth(
    const Sample& sample, std::span<const LevelEstimate<T>> levels) {
  const std::size_t h0 = sample.height, w0 = sample.width;

  std::vector<LevelGroundTruth<T>> out(levels.size());
  // running area-mean pyramid of the flow and an all-children-valid mask
  std::vector<double> flow(sample.opticalflow_gt);
  std::vector<double> valid(h0 * w0);
  for (std::size_t p = 0; p < h0 * w0; ++p) {
    valid[p] = sample.valid[p] ? 1.0 : 0.0;
  }
  std::size_t h = h0, w = w0;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const std::size_t hh = h / 2, ww = w / 2;
    std::vector<double> f2(hh * ww * 2);
    std::vector<double> v2(hh * ww);
    for (std::size_t y = 0; y < hh; ++y) {
      for (std::size_t x = 0; x < ww; ++x) {
        double fu = 0, fv = 0, vv = 1;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t p = (2 * y + dy) * w + (2 * x + dx);
            fu += flow[2 * p];
            fv += flow[2 * p + 1];
            vv = std::min(vv, valid[p]);
          }
        }
        // area mean, then the pixel-unit rescale for the coarser level
        f2[(y * ww + x) * 2] = fu / 4.0 / 2.0;
        f2[(y * ww + x) * 2 + 1] = fv / 4.0 / 2.0;
        v2[y * ww + x] = vv;
      }
    }
    flow = std::move(f2);
    valid = std::move(v2);
    h = hh;
    w = ww;
    if (levels[li].height != h || levels[li].width != w) {
      throw ShapeError("ground truth: level extents disagree with the model");
    }

    LevelGroundTruth<T>& gt = out[li];
    gt.flow2d = Tensor<T>::from({h, w, 2},
                                std::vector<T>(flow.begin(), flow.end()));
    std::vector<T> mask(valid.begin(), valid.end());
    gt.valid_count = 0;
    for (T m : mask) {
      if (m > T(0)) ++gt.valid_count;
    }
    gt.valid = Tensor<T>::from({h * w}, std::move(mask));

    const auto& idx = levels[li].point_indices;
    std::vector<T> sf(idx.size() * 3);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t d = 0; d < 3; ++d) {
        sf[i * 3 + d] = static_cast<T>(sample.sceneflow_gt[idx[i] * 3 + d]);
      }
    }
    gt.flow3d = Tensor<T>::from({idx.size(), 3}, std::move(sf));
  }
  return out;
}

namespace {

// Sum over rows of the Euclidean norm of (pred - target), optionally
// masked. Exact zeros stay exact; sqrt carries a zero subgradient there.
template <typename T>
Tensor<T> residual_norm_sum(const Tensor<T>& pred, const Tensor<T>& target,
                            const Tensor<T>* mask, std::size_t rows,
                            std::size_t dims) {
  auto diff = reshape(sub(pred, target), {rows, dims});
  auto norms = sqrt(sum(square(diff), 1));
  if (mask != nullptr) {
    norms = mul(norms, *mask);
  }
  return sum(norms);
}

}  // namespace

template <typename T>
Tensor<T> task_loss(std::span<const LevelEstimate<T>> levels,
                    std::span<const LevelGroundTruth<T>> gts,
                    const LossWeights<T>& weights) {
  if (levels.size() != gts.size()) {
    throw ShapeError("task_loss: level count mismatch");
  }
  if (weights.lambda.size() != levels.size()) {
    throw ShapeError("task_loss: lambda list must cover every level");
  }
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const auto& est = levels[li];
    const auto& gt = gts[li];
    if (!same_shape(est.flow2d.shape(), gt.flow2d.shape()) ||
        !same_shape(est.flow3d.shape(), gt.flow3d.shape())) {
      throw ShapeError("task_loss: estimate and target shapes disagree at "
                       "level " + std::to_string(li + 1));
    }
    const std::size_t npx = est.height * est.width;
    auto term2d = residual_norm_sum(est.flow2d, gt.flow2d, &gt.valid, npx, 2);
    const std::size_t n_points = est.flow3d.shape()[0];
    auto term3d = residual_norm_sum<T>(est.flow3d, gt.flow3d, nullptr,
                                       n_points, 3);
    if (weights.normalize) {
      term2d = term2d * (T(1) / static_cast<T>(std::max<std::size_t>(
                                    1, gt.valid_count)));
      term3d = term3d * (T(1) / static_cast<T>(
                                    std::max<std::size_t>(1, n_points)));
    }
    auto level_term = add(term2d, term3d * weights.alpha) * weights.lambda[li];
    total = add(total, level_term);
  }
  return total;
}

template <typename T>
Tensor<T> feature_loss(std::span<const LevelEstimate<T>> levels,
                       const LossWeights<T>& weights) {
  if (weights.lambda.size() != levels.size()) {
    throw ShapeError("feature_loss: lambda list must cover every level");
  }
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const auto& est = levels[li];
    if (!est.mi_fs1.defined() || !est.mi_fs2.defined() ||
        !est.mi_ms.defined() || !est.mi_es.defined()) {
      throw ContractError("feature_loss: missing MI term at level " +
                          std::to_string(li + 1));
    }
    auto stage_sum =
        add(add(est.mi_fs1, est.mi_fs2), add(est.mi_ms, est.mi_es));
    total = add(total, stage_sum * weights.lambda[li]);
  }
  return total;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& task, const Tensor<T>& feat,
                     const LossWeights<T>& weights) {
  if (!std::isfinite(static_cast<double>(task.item())) ||
      !std::isfinite(static_cast<double>(feat.item()))) {
    throw DataError("total_loss: non-finite loss term");
  }
  return add(task, feat * weights.beta);
}

#define RPEFLOW_INSTANTIATE_LOSSES(T)                                        \
  template struct LossWeights<T>;                                            \
  template struct LevelGroundTruth<T>;                                       \
  template std::vector<LevelGroundTruth<T>> build_level_ground_truth<T>(     \
      const Sample&, std::span<const LevelEstimate<T>>);                     \
  template Tensor<T> task_loss<T>(std::span<const LevelEstimate<T>>,         \
                                  std::span<const LevelGroundTruth<T>>,      \
                                  const LossWeights<T>&);                    \
  template Tensor<T> feature_loss<T>(std::span<const LevelEstimate<T>>,      \
                                     const LossWeights<T>&);                 \
  template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&,       \
                                   const LossWeights<T>&);

RPEFLOW_INSTANTIATE_LOSSES(float)
RPEFLOW_INSTANTIATE_LOSSES(double)

#undef RPEFLOW_INSTANTIATE_LOSSES

}  // namespace rpeflow
