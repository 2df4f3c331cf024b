#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rpeflow/gradcheck.hpp"
#include "rpeflow/mireg.hpp"
#include "rpeflow/optim.hpp"
#include "rpeflow/rng.hpp"

using namespace rpeflow;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v));
}

GaussianLatent<double> latent_from(std::vector<double> mean,
                                   std::vector<double> logvar) {
  GaussianLatent<double> l;
  const std::size_t d = mean.size();
  l.mean = Tensor<double>::from({1, d}, std::move(mean));
  l.logvar = Tensor<double>::from({1, d}, std::move(logvar));
  return l;
}

// Monte-Carlo estimate of KL(a || b) for diagonal Gaussians.
double monte_carlo_kl(const std::vector<double>& mu_a,
                      const std::vector<double>& lv_a,
                      const std::vector<double>& mu_b,
                      const std::vector<double>& lv_b, std::size_t samples,
                      std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = mu_a.size();
  double acc = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t j = 0; j < d; ++j) {
      const double sa = std::exp(0.5 * lv_a[j]);
      const double z = mu_a[j] + sa * rng.normal();
      const double za = (z - mu_a[j]) / sa;
      const double sb = std::exp(0.5 * lv_b[j]);
      const double zb = (z - mu_b[j]) / sb;
      // log N(z; a) - log N(z; b)
      acc += -0.5 * za * za - 0.5 * lv_a[j] + 0.5 * zb * zb + 0.5 * lv_b[j];
    }
  }
  return acc / static_cast<double>(samples);
}

}  // namespace

TEST_CASE("zero-weight head encodes a standard normal latent") {
  ParamStore<double> store(1);
  auto head = make_mi_head(store, "head", 5, 4);
  for (auto& [name, t] : store.items()) {
    for (auto& v : t.raw_values()) v = 0.0;
  }
  Rng rng(2);
  auto feature = random_tensor({7, 5}, rng);
  auto latent = encode_latent(feature, head);
  for (std::size_t i = 0; i < latent.mean.size(); ++i) {
    CHECK(latent.mean.at(i) == 0.0);
    CHECK(latent.logvar.at(i) == 0.0);
  }
}

TEST_CASE("encode_latent flattens grids to location rows") {
  ParamStore<double> store(3);
  auto head = make_mi_head(store, "head", 3, 8);
  Rng rng(4);
  auto grid = random_tensor({4, 5, 3}, rng);
  auto latent = encode_latent(grid, head);
  CHECK(latent.mean.shape() == Shape{20, 8});
  CHECK(latent.logvar.shape() == Shape{20, 8});

  auto bad = random_tensor({4, 4}, rng);
  CHECK_THROWS_AS(encode_latent(bad, head), ShapeError);
}

TEST_CASE("head gradcheck") {
  ParamStore<double> store(5);
  auto head = make_mi_head(store, "head", 4, 3);
  Rng rng(6);
  auto fa = random_tensor({6, 4}, rng);
  auto fb = random_tensor({6, 4}, rng);
  auto headb = make_mi_head(store, "headb", 4, 3);
  auto report = gradcheck_params<double>(
      [&]() { return mi_pair(fa, fb, head, headb); }, store.items(), 50, 77,
      1e-6, 1e-4);
  CHECK(report.pass);

  // gradient w.r.t. the features themselves
  auto rf = gradcheck<double>(
      [&](const Tensor<double>& f) { return mi_pair(f, fb, head, headb); },
      fa, 1e-6, 1e-4);
  CHECK(rf.pass);
}

TEST_CASE("kl of identical latents is exactly zero") {
  Rng rng(7);
  auto mean = random_tensor({5, 3}, rng);
  auto logvar = random_tensor({5, 3}, rng);
  GaussianLatent<double> a{mean, logvar};
  GaussianLatent<double> b{mean, logvar};
  CHECK(kl_gaussians(a, b).item() == 0.0);
}

TEST_CASE("kl closed form on unit-variance mean shift") {
  auto a = latent_from({0.0}, {0.0});
  auto b = latent_from({1.0}, {0.0});
  CHECK(kl_gaussians(a, b).item() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("kl shape mismatch") {
  auto a = latent_from({0.0, 0.0}, {0.0, 0.0});
  auto b = latent_from({0.0}, {0.0});
  CHECK_THROWS_AS(kl_gaussians(a, b), ShapeError);
}

TEST_CASE("kl is nonnegative after clamping") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    GaussianLatent<double> a{random_tensor({3, 4}, rng, -2, 2),
                             random_tensor({3, 4}, rng, -3, 3)};
    GaussianLatent<double> b{random_tensor({3, 4}, rng, -2, 2),
                             random_tensor({3, 4}, rng, -3, 3)};
    CHECK(kl_gaussians(a, b).item() >= 0.0);
  }
}

TEST_CASE("kl matches a Monte-Carlo estimate within two percent") {
  Rng rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t d = 3;
    std::vector<double> mu_a(d), lv_a(d), mu_b(d), lv_b(d);
    for (std::size_t j = 0; j < d; ++j) {
      mu_a[j] = rng.uniform(-1.5, 1.5);
      lv_a[j] = rng.uniform(-1.0, 1.0);
      mu_b[j] = mu_a[j] + rng.uniform(0.5, 1.5);
      lv_b[j] = rng.uniform(-1.0, 1.0);
    }
    auto a = latent_from(mu_a, lv_a);
    auto b = latent_from(mu_b, lv_b);
    const double closed = kl_gaussians(a, b).item();
    const double mc =
        monte_carlo_kl(mu_a, lv_a, mu_b, lv_b, 1000000, 1000 + trial);
    CHECK(std::fabs(closed - mc) / std::max(closed, 1e-9) < 0.02);
  }
}

TEST_CASE("mi_pair is symmetric and zero on identical features") {
  ParamStore<double> store(10);
  auto head = make_mi_head(store, "head", 4, 3);
  Rng rng(11);
  auto f = random_tensor({6, 4}, rng);
  CHECK(mi_pair(f, f, head, head).item() == 0.0);

  auto head_b = make_mi_head(store, "head_b", 4, 3);
  auto g = random_tensor({6, 4}, rng);
  const double fg = mi_pair(f, g, head, head_b).item();
  const double gf = mi_pair(g, f, head_b, head).item();
  CHECK(fg == gf);
}

TEST_CASE("mi_pair equals the symmetrized KL composition") {
  ParamStore<double> store(12);
  auto ha = make_mi_head(store, "ha", 4, 3);
  auto hb = make_mi_head(store, "hb", 4, 3);
  Rng rng(13);
  auto fa = random_tensor({5, 4}, rng);
  auto fb = random_tensor({5, 4}, rng);
  const double pair = mi_pair(fa, fb, ha, hb).item();
  const auto la = encode_latent(fa, ha);
  const auto lb = encode_latent(fb, hb);
  const double manual =
      0.5 * (kl_gaussians(la, lb).item() + kl_gaussians(lb, la).item());
  CHECK(std::fabs(pair - manual) < 1e-9);
}

TEST_CASE("mi_triple sums its three pairwise terms") {
  ParamStore<double> store(14);
  auto hr = make_mi_head(store, "hr", 3, 4);
  auto hp = make_mi_head(store, "hp", 3, 4);
  auto he = make_mi_head(store, "he", 3, 4);
  Rng rng(15);
  auto fr = random_tensor({7, 3}, rng);
  auto fp = random_tensor({7, 3}, rng);
  auto fe = random_tensor({7, 3}, rng);
  const double triple = mi_triple(fr, fp, fe, hr, hp, he).item();
  const double parts = mi_pair(fr, fp, hr, hp).item() +
                       mi_pair(fp, fe, hp, he).item() +
                       mi_pair(fr, fe, hr, he).item();
  CHECK(std::fabs(triple - parts) < 1e-12);

  CHECK(mi_triple(fr, fr, fr, hr, hr, hr).item() == 0.0);
}

TEST_CASE("mi_triple stays nonnegative across random seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ParamStore<double> store(seed + 100);
    auto hr = make_mi_head(store, "hr", 2, 2);
    auto hp = make_mi_head(store, "hp", 2, 2);
    auto he = make_mi_head(store, "he", 2, 2);
    Rng rng(seed);
    auto fr = random_tensor({4, 2}, rng);
    auto fp = random_tensor({4, 2}, rng);
    auto fe = random_tensor({4, 2}, rng);
    CHECK(mi_triple(fr, fp, fe, hr, hp, he).item() >= 0.0);
  }
}

TEST_CASE("minimizing mi_pair on shared features drives the loss down") {
  ParamStore<double> store(16);
  auto ha = make_mi_head(store, "ha", 3, 2);
  auto hb = make_mi_head(store, "hb", 3, 2);
  Rng rng(17);
  auto f = random_tensor({6, 3}, rng);

  AdamConfig<double> cfg;
  cfg.lr = 5e-2;
  cfg.weight_decay = 0.0;
  Adam<double> opt(cfg);
  double last = 0;
  for (int it = 0; it < 200; ++it) {
    store.zero_all_grads();
    Tape<double> tape;
    auto loss = mi_pair(f, f, ha, hb);
    last = loss.item();
    if (last < 1e-3) break;
    tape.backward(loss);
    opt.step(store.items());
  }
  CHECK(last < 1e-3);
}
