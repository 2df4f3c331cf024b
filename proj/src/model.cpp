#include "rpeflow/model.hpp"

#include <cmath>

namespace rpeflow {

void ModelConfig::validate() const {
  if (levels < 2) throw ConfigError("model: need at least two pyramid levels");
  if (channels2d.size() != levels || channels3d.size() != levels) {
    throw ConfigError("model: channel lists must have one entry per level");
  }
  for (std::size_t c : channels2d) {
    if (c < 2) throw ConfigError("model: 2D channels must be >= 2");
  }
  for (std::size_t c : channels3d) {
    if (c < 2) throw ConfigError("model: 3D channels must be >= 2");
  }
  if (corr_radius < 1) throw ConfigError("model: correlation radius >= 1");
  if (knn < 2) throw ConfigError("model: neighbor count must be >= 2");
  if (event_bins < 1) throw ConfigError("model: need at least one event bin");
  if (latent_dim < 2) throw ConfigError("model: latent dimension >= 2");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.levels = 2;
  cfg.channels2d = {8, 8};
  cfg.channels3d = {8, 8};
  cfg.corr_radius = 2;
  cfg.knn = 6;
  cfg.event_bins = 5;
  cfg.latent_dim = 8;
  return cfg;
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["levels"] = levels;
  j["channels2d"] = channels2d;
  j["channels3d"] = channels3d;
  j["corr_radius"] = corr_radius;
  j["knn"] = knn;
  j["event_bins"] = event_bins;
  j["latent_dim"] = latent_dim;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "levels") {
      cfg.levels = value.get<std::size_t>();
    } else if (key == "channels2d") {
      cfg.channels2d = value.get<std::vector<std::size_t>>();
    } else if (key == "channels3d") {
      cfg.channels3d = value.get<std::vector<std::size_t>>();
    } else if (key == "corr_radius") {
      cfg.corr_radius = value.get<std::size_t>();
    } else if (key == "knn") {
      cfg.knn = value.get<std::size_t>();
    } else if (key == "event_bins") {
      cfg.event_bins = value.get<std::size_t>();
    } else if (key == "latent_dim") {
      cfg.latent_dim = value.get<std::size_t>();
    } else {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

template <typename T>
ModelInputs<T> make_inputs(const Sample& sample, const ModelConfig& cfg,
                           const ModelOptions& opt) {
  ModelInputs<T> in;
  in.cam = sample.cam;
  const std::size_t h = sample.height, w = sample.width;
  auto to_tensor = [](const std::vector<double>& v, Shape shape) {
    std::vector<T> data(v.begin(), v.end());
    return Tensor<T>::from(std::move(shape), std::move(data));
  };
  in.intensity0 = to_tensor(sample.rgb0, {h, w, 1});
  in.intensity1 = to_tensor(sample.rgb1, {h, w, 1});
  in.pc0 = to_tensor(sample.pc0, {sample.n_points(), 3});
  in.pc1 = to_tensor(sample.pc1, {sample.n_points2(), 3});
  if (opt.use_events) {
    in.event_grid = voxelize<T>(sample.events, cfg.event_bins, h, w);
  } else {
    in.event_grid = Tensor<T>::zeros({h, w, cfg.event_bins});
  }
  return in;
}

namespace {

// He-uniform conv block builders; biases start at zero.
template <typename T>
Tensor<T> conv_weight(ParamStore<T>& store, const std::string& name,
                      std::size_t k, std::size_t cin, std::size_t cout) {
  return store.create(name, {k, k, cin, cout}, Init::HeUniform, k * k * cin);
}

}  // namespace

template <typename T>
Model<T>::Model(ModelConfig cfg, ModelOptions opt, std::uint64_t seed)
    : cfg_(std::move(cfg)), opt_(opt), params_(seed) {
  cfg_.validate();
  const std::size_t L = cfg_.levels;
  levels_.resize(L);
  const std::size_t corr_ch =
      (2 * cfg_.corr_radius + 1) * (2 * cfg_.corr_radius + 1);

  for (std::size_t l = 0; l < L; ++l) {
    LevelWeights& lw = levels_[l];
    const std::string p = "level" + std::to_string(l);
    const std::size_t c2 = cfg_.channels2d[l];
    const std::size_t c3 = cfg_.channels3d[l];
    const std::size_t c2_prev = l == 0 ? 1 : cfg_.channels2d[l - 1];
    const std::size_t cev_prev = l == 0 ? cfg_.event_bins : cfg_.channels2d[l - 1];
    const std::size_t c3_prev = l == 0 ? 3 : cfg_.channels3d[l - 1];

    lw.img1.w = conv_weight(params_, p + ".enc2d.conv1.w", 3, c2_prev, c2);
    lw.img1.b = params_.create(p + ".enc2d.conv1.b", {c2}, Init::Zero);
    lw.img2.w = conv_weight(params_, p + ".enc2d.conv2.w", 3, c2, c2);
    lw.img2.b = params_.create(p + ".enc2d.conv2.b", {c2}, Init::Zero);
    lw.ev1.w = conv_weight(params_, p + ".encev.conv1.w", 3, cev_prev, c2);
    lw.ev1.b = params_.create(p + ".encev.conv1.b", {c2}, Init::Zero);
    lw.ev2.w = conv_weight(params_, p + ".encev.conv2.w", 3, c2, c2);
    lw.ev2.b = params_.create(p + ".encev.conv2.b", {c2}, Init::Zero);
    lw.enc3d.w = params_.create(p + ".enc3d.w", {c3_prev + 3, c3},
                                Init::HeUniform, c3_prev + 3);
    lw.enc3d.b = params_.create(p + ".enc3d.b", {c3}, Init::Zero);

    lw.fs2d = make_maf_weights(params_, p + ".fs2d", c2, c3, true, opt_.fusion);
    lw.fs_scatter =
        params_.create(p + ".fs.scatter", {c3, c3}, Init::HeUniform, c3);
    lw.fs3d =
        make_maf_weights(params_, p + ".fs3d", c3, c2, false, opt_.fusion);
    lw.fs_head_r = make_mi_head(params_, p + ".fs.mi_r", c2, cfg_.latent_dim);
    lw.fs_head_pc =
        make_mi_head(params_, p + ".fs.mi_pc", c3, cfg_.latent_dim);

    lw.cv3d.w = params_.create(p + ".cv3d.w", {2 * c3 + 3, c3},
                               Init::HeUniform, 2 * c3 + 3);
    lw.cv3d.b = params_.create(p + ".cv3d.b", {c3}, Init::Zero);

    lw.ms2d = make_maf_weights(params_, p + ".ms2d", corr_ch, c2 + c3, true,
                               opt_.fusion);
    lw.ms_scatter =
        params_.create(p + ".ms.scatter", {c3, c3}, Init::HeUniform, c3);
    lw.ms3d = make_maf_weights(params_, p + ".ms3d", c3, c2 + corr_ch, false,
                               opt_.fusion);
    lw.ms_head_m2d =
        make_mi_head(params_, p + ".ms.mi_m2d", corr_ch, cfg_.latent_dim);
    lw.ms_head_m3d =
        make_mi_head(params_, p + ".ms.mi_m3d", c3, cfg_.latent_dim);
    lw.ms_head_ev =
        make_mi_head(params_, p + ".ms.mi_ev", c2, cfg_.latent_dim);

    lw.dec2d_a.w =
        conv_weight(params_, p + ".dec2d.a.w", 3, corr_ch + c2 + 2, c2);
    lw.dec2d_a.b = params_.create(p + ".dec2d.a.b", {c2}, Init::Zero);
    lw.dec2d_b.w = conv_weight(params_, p + ".dec2d.b.w", 3, c2, c2);
    lw.dec2d_b.b = params_.create(p + ".dec2d.b.b", {c2}, Init::Zero);
    lw.dec2d_c.w = conv_weight(params_, p + ".dec2d.c.w", 3, c2, c2);
    lw.dec2d_c.b = params_.create(p + ".dec2d.c.b", {c2}, Init::Zero);
    lw.dec3d_a.w = params_.create(p + ".dec3d.a.w", {2 * c3 + 3, c3},
                                  Init::HeUniform, 2 * c3 + 3);
    lw.dec3d_a.b = params_.create(p + ".dec3d.a.b", {c3}, Init::Zero);
    lw.dec3d_b.w =
        params_.create(p + ".dec3d.b.w", {c3, c3}, Init::HeUniform, c3);
    lw.dec3d_b.b = params_.create(p + ".dec3d.b.b", {c3}, Init::Zero);
    lw.dec3d_c.w =
        params_.create(p + ".dec3d.c.w", {c3, c3}, Init::HeUniform, c3);
    lw.dec3d_c.b = params_.create(p + ".dec3d.c.b", {c3}, Init::Zero);

    lw.es2d =
        make_maf_weights(params_, p + ".es2d", c2, c2 + c3, true, opt_.fusion);
    lw.es_scatter =
        params_.create(p + ".es.scatter", {c3, c3}, Init::HeUniform, c3);
    lw.es3d = make_maf_weights(params_, p + ".es3d", c3, 2 * c2, false,
                               opt_.fusion);
    lw.es_head_h2d =
        make_mi_head(params_, p + ".es.mi_h2d", c2, cfg_.latent_dim);
    lw.es_head_h3d =
        make_mi_head(params_, p + ".es.mi_h3d", c3, cfg_.latent_dim);
    lw.es_head_ev =
        make_mi_head(params_, p + ".es.mi_ev", c2, cfg_.latent_dim);

    lw.flow_head2d.w = conv_weight(params_, p + ".head2d.w", 3, c2, 2);
    lw.flow_head2d.b = params_.create(p + ".head2d.b", {2}, Init::Zero);
    lw.flow_head3d.w =
        params_.create(p + ".head3d.w", {c3, 3}, Init::HeUniform, c3);
    lw.flow_head3d.b = params_.create(p + ".head3d.b", {3}, Init::Zero);
  }
}

template <typename T>
std::vector<Tensor<T>> Model<T>::encode_grid(const Tensor<T>& input,
                                             bool events) {
  std::vector<Tensor<T>> feats;
  Tensor<T> x = input;
  for (std::size_t l = 0; l < cfg_.levels; ++l) {
    const Conv& c1 = events ? levels_[l].ev1 : levels_[l].img1;
    const Conv& c2 = events ? levels_[l].ev2 : levels_[l].img2;
    x = leaky_relu(add(conv2d(x, c1.w, 2, 1), c1.b));
    x = leaky_relu(add(conv2d(x, c2.w, 1, 1), c2.b));
    feats.push_back(x);
  }
  return feats;
}

template <typename T>
auto Model<T>::encode_points(const Tensor<T>& positions)
    -> std::vector<PointLevel> {
  std::vector<PointLevel> levels;
  Tensor<T> pos = positions;
  Tensor<T> feat = positions;  // initial per-point feature: the position
  std::vector<std::size_t> index_map(positions.shape()[0]);
  for (std::size_t i = 0; i < index_map.size(); ++i) index_map[i] = i;

  for (std::size_t l = 0; l < cfg_.levels; ++l) {
    const std::size_t n_in = pos.shape()[0];
    const std::size_t n_out =
        std::min(n_in, std::max<std::size_t>(4, n_in / 2));
    const auto pv = pos.values();
    std::vector<double> pos_d(pv.begin(), pv.end());
    const auto picked = furthest_point_sample(pos_d, 3, n_out);

    std::vector<double> centers_d(n_out * 3);
    for (std::size_t i = 0; i < n_out; ++i) {
      for (std::size_t d = 0; d < 3; ++d) {
        centers_d[i * 3 + d] = pos_d[picked[i] * 3 + d];
      }
    }
    const std::size_t k = std::min(cfg_.knn, n_in);
    const auto nn = knn_indices(centers_d, pos_d, 3, k);

    auto centers = gather_rows(pos, picked);
    std::vector<std::size_t> center_rep(n_out * k);
    for (std::size_t i = 0; i < n_out; ++i) {
      for (std::size_t j = 0; j < k; ++j) center_rep[i * k + j] = i;
    }
    auto grouped_pos = gather_rows(pos, nn);
    auto rel = sub(grouped_pos, gather_rows(centers, center_rep));
    auto grouped_feat = gather_rows(feat, nn);
    auto stacked = concat<T>({grouped_feat, rel}, 1);
    auto hidden = leaky_relu(
        add(matmul(stacked, levels_[l].enc3d.w), levels_[l].enc3d.b));
    const std::size_t c_out = levels_[l].enc3d.w.shape()[1];
    auto pooled = max_axis(reshape(hidden, {n_out, k, c_out}), 1);

    PointLevel lvl;
    lvl.positions = centers;
    lvl.features = pooled;
    lvl.indices.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      lvl.indices[i] = index_map[picked[i]];
    }
    levels.push_back(lvl);
    pos = centers;
    feat = pooled;
    index_map = lvl.indices;
  }
  return levels;
}

namespace {

template <typename T>
void guard_finite(const Tensor<T>& t, std::size_t level, const char* stage) {
  if (!t.all_finite()) {
    throw DataError("forward: non-finite values at level " +
                    std::to_string(level + 1) + ", stage " + stage);
  }
}

// Per-pixel correlation against integer displacements in [-r, r]^2, each
// channel normalized by the feature channel count.
template <typename T>
Tensor<T> correlation_volume(const Tensor<T>& ref, const Tensor<T>& warped,
                             std::size_t radius) {
  const std::size_t h = ref.shape()[0];
  const std::size_t w = ref.shape()[1];
  const std::size_t c = ref.shape()[2];
  auto ref_rows = reshape(ref, {h * w, c});
  auto grid = coords_grid<T>(h, w);
  std::vector<Tensor<T>> channels;
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
      auto offset = Tensor<T>::from(
          {1, 2}, {static_cast<T>(dx), static_cast<T>(dy)});
      auto sampled = bilinear_sample(warped, add(grid, offset));
      channels.push_back(mean(mul(ref_rows, sampled), 1, true));
    }
  }
  auto cat = concat(std::span<const Tensor<T>>(channels), 1);
  return reshape(cat, {h, w, channels.size()});
}

}  // namespace

template <typename T>
ForwardResult<T> Model<T>::forward(const ModelInputs<T>& in) {
  const std::size_t L = cfg_.levels;
  const std::size_t h0 = in.intensity0.shape()[0];
  const std::size_t w0 = in.intensity0.shape()[1];
  if ((h0 >> L) << L != h0 || (w0 >> L) << L != w0) {
    throw ShapeError("forward: image extents must be divisible by 2^levels");
  }
  if (in.event_grid.shape()[2] != cfg_.event_bins) {
    throw ShapeError("forward: event grid has the wrong bin count");
  }
  check_finite(in.intensity0, "intensity0");
  check_finite(in.intensity1, "intensity1");
  check_finite(in.event_grid, "event grid");

  Tensor<T> event_grid = in.event_grid;
  if (!opt_.use_events) {
    event_grid = Tensor<T>::zeros(in.event_grid.shape());
  }

  auto er1 = encode_grid(in.intensity0, false);
  auto er2 = encode_grid(in.intensity1, false);
  auto eev = encode_grid(event_grid, true);
  auto pc1_levels = encode_points(in.pc0);
  auto pc2_levels = encode_points(in.pc1);

  std::vector<CameraIntrinsics> cams(L);
  CameraIntrinsics cam = in.cam;
  for (std::size_t l = 0; l < L; ++l) {
    cam = cam.halved();
    cams[l] = cam;
  }

  ForwardResult<T> result;
  result.levels.resize(L);

  Tensor<T> flow2d, flow3d;
  for (std::size_t li = L; li-- > 0;) {
    const LevelWeights& lw = levels_[li];
    const std::size_t hl = h0 >> (li + 1);
    const std::size_t wl = w0 >> (li + 1);
    const CameraIntrinsics& lcam = cams[li];
    const auto& p1 = pc1_levels[li];
    const auto& p2 = pc2_levels[li];
    const std::size_t n1 = p1.positions.shape()[0];

    // ---- feature stage: fuse image and point features per frame ----
    PointSet<T> ps1{p1.positions, p1.features};
    PointSet<T> ps2{p2.positions, p2.features};
    auto r1f = maf_2d<T>(er1[li], std::nullopt, ps1, lcam, lw.fs_scatter,
                         lw.fs2d);
    auto r2f = maf_2d<T>(er2[li], std::nullopt, ps2, lcam, lw.fs_scatter,
                         lw.fs2d);
    auto pc1f = maf_3d<T>(ps1, er1[li], std::nullopt, lcam, lw.fs3d);
    auto pc2f = maf_3d<T>(ps2, er2[li], std::nullopt, lcam, lw.fs3d);
    guard_finite(r1f, li, "feature fusion");
    guard_finite(pc1f, li, "feature fusion");

    LevelEstimate<T>& est = result.levels[li];
    if (opt_.compute_mi) {
      auto coords1 = project(p1.positions, lcam);
      auto coords2 = project(p2.positions, lcam);
      est.mi_fs1 = mi_pair(bilinear_sample(er1[li], coords1), p1.features,
                           lw.fs_head_r, lw.fs_head_pc);
      est.mi_fs2 = mi_pair(bilinear_sample(er2[li], coords2), p2.features,
                           lw.fs_head_r, lw.fs_head_pc);
    }

    // ---- prior estimates ----
    Tensor<T> f_prior, s_prior;
    if (li == L - 1) {
      f_prior = Tensor<T>::zeros({hl, wl, 2});
      s_prior = Tensor<T>::zeros({n1, 3});
    } else {
      f_prior = upsample_flow2d(flow2d, hl, wl);
      s_prior = interpolate_points_idw(flow3d, pc1_levels[li + 1].positions,
                                       p1.positions, 3);
    }

    // ---- correlation construction ----
    auto r2w = warp2d(r2f, f_prior);
    auto cv2d = correlation_volume(r1f, r2w, cfg_.corr_radius);
    guard_finite(cv2d, li, "2d cost volume");

    auto gathered2 = warp3d(pc2f, p2.positions, p1.positions, s_prior, 3);
    const std::size_t k = std::min(cfg_.knn, n1);
    Tensor<T> cv3d;
    {
      const auto pv = p1.positions.values();
      std::vector<double> pos_d(pv.begin(), pv.end());
      const auto nn = knn_indices(pos_d, pos_d, 3, k);
      std::vector<std::size_t> center_rep(n1 * k);
      for (std::size_t i = 0; i < n1; ++i) {
        for (std::size_t j = 0; j < k; ++j) center_rep[i * k + j] = i;
      }
      auto rel = sub(gather_rows(p1.positions, nn),
                     gather_rows(p1.positions, center_rep));
      auto stacked = concat<T>(
          {gather_rows(pc1f, nn), gather_rows(gathered2, nn), rel}, 1);
      auto hidden = leaky_relu(add(matmul(stacked, lw.cv3d.w), lw.cv3d.b));
      const std::size_t c_out = lw.cv3d.w.shape()[1];
      cv3d = max_axis(reshape(hidden, {n1, k, c_out}), 1);
    }
    guard_finite(cv3d, li, "3d cost volume");

    // ---- motion stage: fuse cost volumes with the event feature ----
    PointSet<T> motion_points{p1.positions, cv3d};
    auto cv3d_splat =
        scatter_interpolate(motion_points, lcam, hl, wl, lw.ms_scatter);
    std::vector<Tensor<T>> aux2d{eev[li], cv3d_splat};
    auto cv2d_fused =
        fuse_grid(cv2d, std::span<const Tensor<T>>(aux2d), lw.ms2d);

    auto coords1 = project(p1.positions, lcam);
    std::vector<Tensor<T>> aux3d{
        bilinear_sample(eev[li], coords1),
        bilinear_sample(cv2d, coords1)};
    auto cv3d_fused =
        fuse_rows(cv3d, std::span<const Tensor<T>>(aux3d), lw.ms3d);
    guard_finite(cv2d_fused, li, "motion fusion");
    guard_finite(cv3d_fused, li, "motion fusion");

    if (opt_.compute_mi) {
      est.mi_ms = mi_triple(cv2d, cv3d_splat, eev[li], lw.ms_head_m2d,
                            lw.ms_head_m3d, lw.ms_head_ev);
    }

    // ---- decoders and estimation stage ----
    auto dec_in = concat<T>({cv2d_fused, r1f, f_prior}, 2);
    auto h2d = leaky_relu(add(conv2d(dec_in, lw.dec2d_a.w, 1, 1),
                              lw.dec2d_a.b));
    h2d = leaky_relu(add(conv2d(h2d, lw.dec2d_b.w, 1, 1), lw.dec2d_b.b));
    h2d = leaky_relu(add(conv2d(h2d, lw.dec2d_c.w, 1, 1), lw.dec2d_c.b));

    auto dec3_in = concat<T>({cv3d_fused, pc1f, s_prior}, 1);
    auto h3d = leaky_relu(add(matmul(dec3_in, lw.dec3d_a.w), lw.dec3d_a.b));
    h3d = leaky_relu(add(matmul(h3d, lw.dec3d_b.w), lw.dec3d_b.b));
    h3d = leaky_relu(add(matmul(h3d, lw.dec3d_c.w), lw.dec3d_c.b));

    PointSet<T> hidden_points{p1.positions, h3d};
    auto h3d_splat =
        scatter_interpolate(hidden_points, lcam, hl, wl, lw.es_scatter);
    std::vector<Tensor<T>> es_aux2d{eev[li], h3d_splat};
    auto h2d_fused =
        fuse_grid(h2d, std::span<const Tensor<T>>(es_aux2d), lw.es2d);
    std::vector<Tensor<T>> es_aux3d{
        bilinear_sample(eev[li], coords1),
        bilinear_sample(h2d, coords1)};
    auto h3d_fused =
        fuse_rows(h3d, std::span<const Tensor<T>>(es_aux3d), lw.es3d);
    guard_finite(h2d_fused, li, "estimation fusion");
    guard_finite(h3d_fused, li, "estimation fusion");

    if (opt_.compute_mi) {
      est.mi_es = mi_triple(h2d, h3d_splat, eev[li], lw.es_head_h2d,
                            lw.es_head_h3d, lw.es_head_ev);
    }

    // ---- residual flow heads ----
    auto delta_f = add(conv2d(h2d_fused, lw.flow_head2d.w, 1, 1),
                       lw.flow_head2d.b);
    auto delta_s = add(matmul(h3d_fused, lw.flow_head3d.w), lw.flow_head3d.b);
    flow2d = add(f_prior, delta_f);
    flow3d = add(s_prior, delta_s);
    guard_finite(flow2d, li, "flow estimate");
    guard_finite(flow3d, li, "flow estimate");

    est.height = hl;
    est.width = wl;
    est.flow2d = flow2d;
    est.flow3d = flow3d;
    est.positions = p1.positions;
    est.point_indices = p1.indices;
  }

  result.flow2d_full = upsample_flow2d(flow2d, h0, w0);
  result.flow3d_full = interpolate_points_idw(
      flow3d, pc1_levels[0].positions, in.pc0, 3);
  return result;
}

template struct ModelInputs<float>;
template struct ModelInputs<double>;
template ModelInputs<float> make_inputs<float>(const Sample&,
                                               const ModelConfig&,
                                               const ModelOptions&);
template ModelInputs<double> make_inputs<double>(const Sample&,
                                                 const ModelConfig&,
                                                 const ModelOptions&);
template class Model<float>;
template class Model<double>;

}  // namespace rpeflow
