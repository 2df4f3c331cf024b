#pragma once

#include <string>

#include "rpeflow/ops.hpp"
#include "rpeflow/params.hpp"

namespace rpeflow {

// Diagonal Gaussian latent code per location.
template <typename T>
struct GaussianLatent {
  Tensor<T> mean;    // M x d
  Tensor<T> logvar;  // M x d, clamped to [-10, 10]
};

// Two-layer perceptron mapping C feature channels to 2d outputs (mean and
// log-variance); hidden width 2d with leaky-relu.
template <typename T>
struct MiHead {
  std::size_t latent_dim = 0;
  Tensor<T> w1, b1;
  Tensor<T> w2, b2;
};

template <typename T>
MiHead<T> make_mi_head(ParamStore<T>& store, const std::string& prefix,
                       std::size_t in_channels, std::size_t latent_dim);

// Features may be H x W x C grids or N x C rows; grids flatten to rows.
template <typename T>
GaussianLatent<T> encode_latent(const Tensor<T>& feature,
                                const MiHead<T>& head);

// Closed-form KL divergence between diagonal Gaussians, averaged over
// locations and summed over latent dimensions.
template <typename T>
Tensor<T> kl_gaussians(const GaussianLatent<T>& a, const GaussianLatent<T>& b);

// Symmetrized pairwise bound: 0.5 * (KL(a||b) + KL(b||a)).
template <typename T>
Tensor<T> mi_pair(const Tensor<T>& feature_a, const Tensor<T>& feature_b,
                  const MiHead<T>& head_a, const MiHead<T>& head_b);

// Three-way sum of the pairwise bounds.
template <typename T>
Tensor<T> mi_triple(const Tensor<T>& feature_r, const Tensor<T>& feature_pc,
                    const Tensor<T>& feature_ev, const MiHead<T>& head_r,
                    const MiHead<T>& head_pc, const MiHead<T>& head_ev);

}  // namespace rpeflow
