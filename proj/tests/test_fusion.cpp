#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rpeflow/fusion.hpp"
#include "rpeflow/gradcheck.hpp"
#include "rpeflow/rng.hpp"

using namespace rpeflow;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v));
}

void randomize(Tensor<double> t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.raw_values()) v = rng.uniform(lo, hi);
}

// Straight-line dense evaluation of the fusion block for the pointwise
// (per-channel q/k/v) form, kept independent of the library's tensor ops.
std::vector<double> dense_fusion_reference(
    const std::vector<double>& x, const std::vector<double>& y, std::size_t m,
    std::size_t c, const std::vector<double>& gp, const std::vector<double>& bp,
    const std::vector<double>& ga, const std::vector<double>& ba,
    const std::vector<double>& qw, const std::vector<double>& kw,
    const std::vector<double>& vw, const std::vector<double>& proj,
    double tau) {
  auto layer_norm = [&](const std::vector<double>& in,
                        const std::vector<double>& gamma,
                        const std::vector<double>& beta) {
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < m; ++i) {
      double mu = 0;
      for (std::size_t j = 0; j < c; ++j) mu += in[i * c + j];
      mu /= static_cast<double>(c);
      double var = 0;
      for (std::size_t j = 0; j < c; ++j) {
        const double d = in[i * c + j] - mu;
        var += d * d;
      }
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      for (std::size_t j = 0; j < c; ++j) {
        out[i * c + j] = gamma[j] * ((in[i * c + j] - mu) * inv) + beta[j];
      }
    }
    return out;
  };
  const auto lx = layer_norm(x, gp, bp);
  const auto ly = layer_norm(y, ga, ba);
  std::vector<double> q(m * c), k(m * c), v(m * c);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      q[i * c + j] = qw[j] * lx[i * c + j];
      k[i * c + j] = kw[j] * ly[i * c + j];
      v[i * c + j] = vw[j] * ly[i * c + j];
    }
  }
  // scores(i, j) = sum_m q(m, i) k(m, j) / tau
  std::vector<double> scores(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0;
      for (std::size_t mm = 0; mm < m; ++mm) {
        acc += q[mm * c + i] * k[mm * c + j];
      }
      scores[i * c + j] = acc / tau;
    }
  }
  // softmax over the row axis of each column
  std::vector<double> attn(c * c);
  for (std::size_t j = 0; j < c; ++j) {
    double mx = scores[j];
    for (std::size_t i = 1; i < c; ++i) {
      mx = std::max(mx, scores[i * c + j]);
    }
    double denom = 0;
    for (std::size_t i = 0; i < c; ++i) {
      attn[i * c + j] = std::exp(scores[i * c + j] - mx);
      denom += attn[i * c + j];
    }
    for (std::size_t i = 0; i < c; ++i) attn[i * c + j] /= denom;
  }
  // out = (V A) proj + x
  std::vector<double> out(m * c);
  for (std::size_t mm = 0; mm < m; ++mm) {
    std::vector<double> va(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t i = 0; i < c; ++i) {
        va[j] += v[mm * c + i] * attn[i * c + j];
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0;
      for (std::size_t i = 0; i < c; ++i) acc += va[i] * proj[i * c + j];
      out[mm * c + j] = acc + x[mm * c + j];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("align_aux passes a single modality through identity weights") {
  Rng rng(3);
  auto aux = random_tensor({6, 4}, rng);
  auto eye = Tensor<double>::from(
      {4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  std::vector<Tensor<double>> list{aux};
  auto out = align_aux(std::span<const Tensor<double>>(list), eye);
  for (std::size_t i = 0; i < aux.size(); ++i) CHECK(out.at(i) == aux.at(i));
}

TEST_CASE("align_aux maps two modalities to the primary channel count") {
  Rng rng(5);
  auto a = random_tensor({7, 3}, rng);
  auto b = random_tensor({7, 3}, rng);
  auto w = random_tensor({6, 5}, rng);
  std::vector<Tensor<double>> list{a, b};
  auto out = align_aux(std::span<const Tensor<double>>(list), w);
  CHECK(out.shape() == Shape{7, 5});

  auto bad = random_tensor({6, 3}, rng);
  std::vector<Tensor<double>> mismatched{a, bad};
  CHECK_THROWS_AS(
      align_aux(std::span<const Tensor<double>>(mismatched), w), ShapeError);
}

TEST_CASE("align_aux gradient w.r.t. the alignment weights") {
  Rng rng(7);
  auto a = random_tensor({5, 2}, rng);
  auto b = random_tensor({5, 2}, rng);
  auto w0 = random_tensor({4, 3}, rng);
  auto report = gradcheck<double>(
      [&](const Tensor<double>& w) {
        std::vector<Tensor<double>> list{a, b};
        return sum(square(align_aux(std::span<const Tensor<double>>(list), w)));
      },
      w0, 1e-6, 1e-5);
  CHECK(report.pass);
}

TEST_CASE("zero projection makes cross attention the identity") {
  Rng rng(11);
  ParamStore<double> store(1);
  auto w = make_maf_weights(store, "maf", 4, 4, false, FusionMode::Attention);
  randomize(w.query_w, rng);
  randomize(w.key_w, rng);
  randomize(w.value_w, rng);
  for (auto& v : w.proj.raw_values()) v = 0.0;
  auto x = random_tensor({6, 4}, rng);
  auto y = random_tensor({6, 4}, rng);
  auto out = cross_attention(x, y, w);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.at(i) == x.at(i));
}

TEST_CASE("zero query weights give uniform attention columns") {
  Rng rng(13);
  ParamStore<double> store(2);
  const std::size_t m = 5, c = 3;
  auto w = make_maf_weights(store, "maf", c, c, false, FusionMode::Attention);
  for (auto& v : w.query_w.raw_values()) v = 0.0;
  randomize(w.value_w, rng);
  randomize(w.proj, rng);
  auto x = random_tensor({m, c}, rng);
  auto y = random_tensor({m, c}, rng);
  Tensor<double> attn;
  auto out = cross_attention(x, y, w, 0, 0, &attn);
  REQUIRE(attn.shape() == Shape{c, c});
  for (std::size_t i = 0; i < attn.size(); ++i) {
    CHECK(attn.at(i) == doctest::Approx(1.0 / c).epsilon(1e-12));
  }
  // V A replicates the per-location channel mean of V into every channel
  auto ly = add(mul(layernorm(y, 1), w.ln_aux_gamma), w.ln_aux_beta);
  auto v = mul(ly, w.value_w);
  auto vmean = mean(v, 1, true);
  std::vector<Tensor<double>> rep{vmean, vmean, vmean};
  auto va = concat(std::span<const Tensor<double>>(rep), 1);
  auto expected = add(matmul(va, w.proj), x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.at(i) == doctest::Approx(expected.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("cross attention matches the dense reference on a small instance") {
  Rng rng(17);
  ParamStore<double> store(3);
  const std::size_t m = 3, c = 2;
  auto w = make_maf_weights(store, "maf", c, c, false, FusionMode::Attention);
  randomize(w.ln_pri_gamma, rng, 0.5, 1.5);
  randomize(w.ln_pri_beta, rng);
  randomize(w.ln_aux_gamma, rng, 0.5, 1.5);
  randomize(w.ln_aux_beta, rng);
  randomize(w.query_w, rng);
  randomize(w.key_w, rng);
  randomize(w.value_w, rng);
  randomize(w.proj, rng);
  w.log_temperature.raw_values()[0] = std::log(1.7);

  auto x = random_tensor({m, c}, rng);
  auto y = random_tensor({m, c}, rng);
  Tensor<double> attn;
  auto out = cross_attention(x, y, w, 0, 0, &attn);
  REQUIRE(attn.shape() == Shape{c, c});

  auto to_vec = [](const Tensor<double>& t) {
    return std::vector<double>(t.values().begin(), t.values().end());
  };
  const auto expected = dense_fusion_reference(
      to_vec(x), to_vec(y), m, c, to_vec(w.ln_pri_gamma),
      to_vec(w.ln_pri_beta), to_vec(w.ln_aux_gamma), to_vec(w.ln_aux_beta),
      to_vec(w.query_w), to_vec(w.key_w), to_vec(w.value_w), to_vec(w.proj),
      1.7);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(std::fabs(out.at(i) - expected[i]) < 1e-9);
  }
}

TEST_CASE("attention columns are probability vectors") {
  Rng rng(19);
  ParamStore<double> store(4);
  const std::size_t c = 6;
  auto w = make_maf_weights(store, "maf", c, c, false, FusionMode::Attention);
  randomize(w.query_w, rng);
  randomize(w.key_w, rng);
  auto x = random_tensor({8, c}, rng, -3, 3);
  auto y = random_tensor({8, c}, rng, -3, 3);
  Tensor<double> attn;
  cross_attention(x, y, w, 0, 0, &attn);
  for (std::size_t j = 0; j < c; ++j) {
    double total = 0;
    for (std::size_t i = 0; i < c; ++i) {
      CHECK(attn.at2(i, j) >= 0.0);
      total += attn.at2(i, j);
    }
    CHECK(std::fabs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("channel attention is location-equivariant") {
  Rng rng(23);
  ParamStore<double> store(5);
  const std::size_t m = 5, c = 3;
  auto w = make_maf_weights(store, "maf", c, c, false, FusionMode::Attention);
  randomize(w.query_w, rng);
  randomize(w.key_w, rng);
  randomize(w.value_w, rng);
  randomize(w.proj, rng);
  auto x = random_tensor({m, c}, rng);
  auto y = random_tensor({m, c}, rng);
  auto base = cross_attention(x, y, w);

  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  auto xp = gather_rows(x, perm);
  auto yp = gather_rows(y, perm);
  auto permuted = cross_attention(xp, yp, w);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      CHECK(permuted.at2(i, j) ==
            doctest::Approx(base.at2(perm[i], j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("channel mismatch raises a shape error") {
  Rng rng(29);
  ParamStore<double> store(6);
  auto w = make_maf_weights(store, "maf", 4, 4, false, FusionMode::Attention);
  auto x = random_tensor({5, 4}, rng);
  auto y = random_tensor({5, 3}, rng);
  CHECK_THROWS_AS(cross_attention(x, y, w), ShapeError);
}

TEST_CASE("concat fusion mode keeps the residual identity") {
  Rng rng(31);
  ParamStore<double> store(7);
  auto w = make_maf_weights(store, "maf", 4, 4, false, FusionMode::Concat);
  for (auto& v : w.concat_mix.raw_values()) v = 0.0;
  auto x = random_tensor({5, 4}, rng);
  auto y = random_tensor({5, 4}, rng);
  auto out = cross_attention(x, y, w);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.at(i) == x.at(i));
}

TEST_CASE("maf_2d composes projection, alignment and attention") {
  Rng rng(37);
  CameraIntrinsics cam{4.0, 4.0, 4.0, 8, 8};
  ParamStore<double> store(8);
  const std::size_t c2 = 4, c3 = 3;
  auto w = make_maf_weights(store, "maf2d", c2, c3 + c2, true,
                            FusionMode::Attention);
  auto scatter_mix = store.create("scatter", {c3, c3}, Init::HeUniform, c3);

  PointSet<double> pc;
  std::vector<double> pos;
  for (int i = 0; i < 10; ++i) {
    pos.push_back(rng.uniform(-0.7, 0.7));
    pos.push_back(rng.uniform(-0.7, 0.7));
    pos.push_back(rng.uniform(1.0, 2.0));
  }
  pc.positions = Tensor<double>::from({10, 3}, pos);
  pc.features = random_tensor({10, c3}, rng);

  auto image = random_tensor({8, 8, c2}, rng);
  auto events = random_tensor({8, 8, c2}, rng);

  auto fused = maf_2d<double>(image, events, pc, cam, scatter_mix, w);
  CHECK(fused.shape() == Shape{8, 8, c2});

  // hand-wire the same pipeline
  auto projected = scatter_interpolate(pc, cam, 8, 8, scatter_mix);
  std::vector<Tensor<double>> flat{
      reshape(projected, {64, c3}), reshape(events, {64, c2})};
  auto y_aux = align_aux(std::span<const Tensor<double>>(flat), w.align);
  auto expect =
      cross_attention(reshape(image, {64, c2}), y_aux, w, 8, 8);
  for (std::size_t i = 0; i < fused.size(); ++i) {
    CHECK(fused.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("maf_2d with an empty point set still runs") {
  Rng rng(41);
  CameraIntrinsics cam{4.0, 4.0, 4.0, 8, 8};
  ParamStore<double> store(9);
  const std::size_t c2 = 3, c3 = 2;
  // single-modality alignment: the feature-stage form without events
  auto w = make_maf_weights(store, "maf2d", c2, c3, true,
                            FusionMode::Attention);
  auto scatter_mix = store.create("scatter", {c3, c3}, Init::HeUniform, c3);
  PointSet<double> pc;
  pc.positions = Tensor<double>::zeros({0, 3});
  pc.features = Tensor<double>::zeros({0, c3});
  auto image = random_tensor({8, 8, c2}, rng);
  auto projected = scatter_interpolate(pc, cam, 8, 8, scatter_mix);
  for (std::size_t i = 0; i < projected.size(); ++i) {
    CHECK(projected.at(i) == 0.0);
  }
  auto fused = maf_2d<double>(image, std::nullopt, pc, cam, scatter_mix, w);
  CHECK(fused.shape() == Shape{8, 8, c2});
}

TEST_CASE("maf_3d composes sampling, alignment and attention") {
  Rng rng(43);
  CameraIntrinsics cam{4.0, 4.0, 4.0, 8, 8};
  ParamStore<double> store(10);
  const std::size_t c2 = 3, c3 = 4;
  auto w = make_maf_weights(store, "maf3d", c3, 2 * c2, false,
                            FusionMode::Attention);

  PointSet<double> pc;
  std::vector<double> pos;
  for (int i = 0; i < 9; ++i) {
    pos.push_back(rng.uniform(-0.7, 0.7));
    pos.push_back(rng.uniform(-0.7, 0.7));
    pos.push_back(rng.uniform(1.0, 2.0));
  }
  pc.positions = Tensor<double>::from({9, 3}, pos);
  pc.features = random_tensor({9, c3}, rng);
  auto image = random_tensor({8, 8, c2}, rng);
  auto events = random_tensor({8, 8, c2}, rng);

  auto fused = maf_3d<double>(pc, image, events, cam, w);
  CHECK(fused.shape() == Shape{9, c3});

  auto coords = project(pc.positions, cam);
  std::vector<Tensor<double>> aux{bilinear_sample(image, coords),
                                  bilinear_sample(events, coords)};
  auto y_aux = align_aux(std::span<const Tensor<double>>(aux), w.align);
  auto expect = cross_attention(pc.features, y_aux, w);
  for (std::size_t i = 0; i < fused.size(); ++i) {
    CHECK(fused.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("maf_3d samples the center pixel for an optical-axis point") {
  CameraIntrinsics cam{4.0, 4.0, 4.0, 8, 8};
  Rng rng(47);
  ParamStore<double> store(11);
  auto image = random_tensor({8, 8, 2}, rng);
  PointSet<double> pc;
  pc.positions = Tensor<double>::from({1, 3}, {0, 0, 1.5});
  auto coords = project(pc.positions, cam);
  auto sampled = bilinear_sample(image, coords);
  CHECK(sampled.at2(0, 0) == image.at3(4, 4, 0));
  CHECK(sampled.at2(0, 1) == image.at3(4, 4, 1));
}

TEST_CASE("end-to-end gradients through both fusion branches") {
  Rng rng(53);
  CameraIntrinsics cam{2.0, 2.0, 2.0, 4, 4};
  ParamStore<double> store(12);
  const std::size_t c2 = 2, c3 = 2;
  auto w2 = make_maf_weights(store, "maf2d", c2, c3 + c2, true,
                             FusionMode::Attention);
  auto scatter_mix = store.create("scatter", {c3, c3}, Init::HeUniform, c3);
  auto w3 = make_maf_weights(store, "maf3d", c3, 2 * c2, false,
                             FusionMode::Attention);

  std::vector<double> pos;
  for (int i = 0; i < 5; ++i) {
    pos.push_back(rng.uniform(-0.5, 0.5));
    pos.push_back(rng.uniform(-0.5, 0.5));
    pos.push_back(rng.uniform(1.0, 2.0));
  }
  auto positions = Tensor<double>::from({5, 3}, pos);
  auto image = random_tensor({4, 4, c2}, rng);
  auto events = random_tensor({4, 4, c2}, rng);
  auto pfeat0 = random_tensor({5, c3}, rng);

  auto loss = [&]() {
    PointSet<double> pc{positions, store.get("pfeat")};
    auto f2 = maf_2d<double>(image, events, pc, cam, scatter_mix, w2);
    auto f3 = maf_3d<double>(pc, image, events, cam, w3);
    return add(sum(square(f2)), sum(square(f3)));
  };
  store.create_const("pfeat", {5, c3},
                     std::vector<double>(pfeat0.values().begin(),
                                         pfeat0.values().end()));
  auto report = gradcheck_params<double>(loss, store.items(), 60, 99, 1e-6,
                                         1e-4);
  CHECK(report.pass);
}
