#include "rpeflow/mireg.hpp"

namespace rpeflow {

template <typename T>
MiHead<T> make_mi_head(ParamStore<T>& store, const std::string& prefix,
                       std::size_t in_channels, std::size_t latent_dim) {
  MiHead<T> head;
  head.latent_dim = latent_dim;
  const std::size_t hidden = 2 * latent_dim;
  head.w1 = store.create(prefix + ".w1", {in_channels, hidden},
                         Init::HeUniform, in_channels);
  head.b1 = store.create(prefix + ".b1", {hidden}, Init::Zero);
  head.w2 =
      store.create(prefix + ".w2", {hidden, hidden}, Init::HeUniform, hidden);
  head.b2 = store.create(prefix + ".b2", {hidden}, Init::Zero);
  return head;
}

template <typename T>
GaussianLatent<T> encode_latent(const Tensor<T>& feature,
                                const MiHead<T>& head) {
  Tensor<T> rows = feature;
  if (rows.rank() == 3) {
    rows = reshape(rows, {rows.shape()[0] * rows.shape()[1], rows.shape()[2]});
  }
  if (rows.rank() != 2) {
    throw ShapeError("encode_latent: feature must be rows or a grid");
  }
  if (rows.shape()[1] != head.w1.shape()[0]) {
    throw ShapeError("encode_latent: head expects " +
                     std::to_string(head.w1.shape()[0]) + " channels, got " +
                     std::to_string(rows.shape()[1]));
  }
  auto hidden = leaky_relu(add(matmul(rows, head.w1), head.b1));
  auto out = add(matmul(hidden, head.w2), head.b2);
  const std::size_t d = head.latent_dim;
  GaussianLatent<T> latent;
  latent.mean = slice(out, 1, 0, d);
  latent.logvar = clamp(slice(out, 1, d, d), T(-10), T(10));
  return latent;
}

template <typename T>
Tensor<T> kl_gaussians(const GaussianLatent<T>& a,
                       const GaussianLatent<T>& b) {
  if (a.mean.shape() != b.mean.shape()) {
    throw ShapeError("kl_gaussians: latents disagree on shape: " +
                     shape_str(a.mean.shape()) + " vs " +
                     shape_str(b.mean.shape()));
  }
  auto dl = sub(a.logvar, b.logvar);
  auto ratio = exp(dl);
  auto md = sub(b.mean, a.mean);
  auto quad = mul(square(md), exp(neg(b.logvar)));
  auto per_dim = sub(add(ratio, quad) - T(1), dl);
  auto per_loc = sum(per_dim, 1);
  return mean(per_loc) * T(0.5);
}

template <typename T>
Tensor<T> mi_pair(const Tensor<T>& feature_a, const Tensor<T>& feature_b,
                  const MiHead<T>& head_a, const MiHead<T>& head_b) {
  auto la = encode_latent(feature_a, head_a);
  auto lb = encode_latent(feature_b, head_b);
  auto forward_kl = kl_gaussians(la, lb);
  auto reverse_kl = kl_gaussians(lb, la);
  return add(forward_kl, reverse_kl) * T(0.5);
}

template <typename T>
Tensor<T> mi_triple(const Tensor<T>& feature_r, const Tensor<T>& feature_pc,
                    const Tensor<T>& feature_ev, const MiHead<T>& head_r,
                    const MiHead<T>& head_pc, const MiHead<T>& head_ev) {
  auto r_pc = mi_pair(feature_r, feature_pc, head_r, head_pc);
  auto pc_ev = mi_pair(feature_pc, feature_ev, head_pc, head_ev);
  auto r_ev = mi_pair(feature_r, feature_ev, head_r, head_ev);
  return add(add(r_pc, pc_ev), r_ev);
}

#define RPEFLOW_INSTANTIATE_MIREG(T)                                       \
  template struct GaussianLatent<T>;                                       \
  template struct MiHead<T>;                                               \
  template MiHead<T> make_mi_head<T>(ParamStore<T>&, const std::string&,   \
                                     std::size_t, std::size_t);            \
  template GaussianLatent<T> encode_latent<T>(const Tensor<T>&,            \
                                              const MiHead<T>&);           \
  template Tensor<T> kl_gaussians<T>(const GaussianLatent<T>&,             \
                                     const GaussianLatent<T>&);            \
  template Tensor<T> mi_pair<T>(const Tensor<T>&, const Tensor<T>&,        \
                                const MiHead<T>&, const MiHead<T>&);       \
  template Tensor<T> mi_triple<T>(const Tensor<T>&, const Tensor<T>&,      \
                                  const Tensor<T>&, const MiHead<T>&,      \
                                  const MiHead<T>&, const MiHead<T>&);

RPEFLOW_INSTANTIATE_MIREG(float)
RPEFLOW_INSTANTIATE_MIREG(double)

#undef RPEFLOW_INSTANTIATE_MIREG

}  // namespace rpeflow
