#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rpeflow/gradcheck.hpp"
#include "rpeflow/losses.hpp"
#include "rpeflow/model.hpp"
#include "rpeflow/rng.hpp"

using namespace rpeflow;

namespace {

SceneSpec toy_scene(std::uint64_t seed, std::size_t hw, std::size_t points) {
  SceneSpec spec;
  spec.seed = seed;
  spec.object_count = 1;
  spec.width = hw;
  spec.height = hw;
  spec.substeps = 4;
  spec.target_points = points;
  spec.speed = SpeedClass::Fast;
  return spec;
}

ModelConfig config_l3() {
  ModelConfig cfg;
  cfg.levels = 3;
  cfg.channels2d = {6, 8, 8};
  cfg.channels3d = {6, 8, 8};
  cfg.corr_radius = 2;
  cfg.knn = 6;
  cfg.event_bins = 4;
  cfg.latent_dim = 6;
  return cfg;
}

bool same_values(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.at(i) != b.at(i)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("grid encoder halves the spatial extent per level") {
  ModelConfig cfg;  // defaults: L = 5
  Model<double> model(cfg, {}, 7);
  auto x = Tensor<double>::zeros({64, 64, 1});
  auto feats = model.encode_grid(x, false);
  REQUIRE(feats.size() == 5);
  const std::size_t expect[5] = {32, 16, 8, 4, 2};
  for (std::size_t l = 0; l < 5; ++l) {
    CHECK(feats[l].shape()[0] == expect[l]);
    CHECK(feats[l].shape()[1] == expect[l]);
    CHECK(feats[l].shape()[2] == cfg.channels2d[l]);
  }
}

TEST_CASE("point encoder halves the point count per level") {
  ModelConfig cfg;
  Model<double> model(cfg, {}, 7);
  Rng rng(3);
  std::vector<double> pos(512 * 3);
  for (auto& v : pos) v = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < 512; ++i) pos[3 * i + 2] += 3.0;
  auto levels =
      model.encode_points(Tensor<double>::from({512, 3}, pos));
  REQUIRE(levels.size() == 5);
  const std::size_t expect[5] = {256, 128, 64, 32, 16};
  for (std::size_t l = 0; l < 5; ++l) {
    CHECK(levels[l].positions.shape()[0] == expect[l]);
    CHECK(levels[l].features.shape() ==
          Shape{expect[l], cfg.channels3d[l]});
    CHECK(levels[l].indices.size() == expect[l]);
  }
}

TEST_CASE("siamese encoders reuse one set of weights across frames") {
  ModelConfig cfg = config_l3();
  Model<double> model(cfg, {}, 11);
  Rng rng(5);
  std::vector<double> img(32 * 32);
  for (auto& v : img) v = rng.uniform(0, 1);
  auto x = Tensor<double>::from({32, 32, 1}, img);
  auto a = model.encode_grid(x, false);
  auto b = model.encode_grid(x, false);
  for (std::size_t l = 0; l < a.size(); ++l) {
    CHECK(same_values(a[l], b[l]));
  }
  // there is exactly one image encoder parameter set per level
  CHECK(model.params().contains("level0.enc2d.conv1.w"));
  CHECK_FALSE(model.params().contains("level0.enc2d_frame2.conv1.w"));
}

TEST_CASE("forward satisfies the level shape contract") {
  ModelConfig cfg = config_l3();
  Model<double> model(cfg, {}, 13);
  auto sample = generate(toy_scene(21, 32, 256));
  auto inputs = make_inputs<double>(sample, cfg, model.options());
  NoGradGuard<double> inference;
  auto out = model.forward(inputs);

  REQUIRE(out.levels.size() == 3);
  const std::size_t hw[3] = {16, 8, 4};
  const std::size_t np[3] = {128, 64, 32};
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(out.levels[l].flow2d.shape() == Shape{hw[l], hw[l], 2});
    CHECK(out.levels[l].flow3d.shape() == Shape{np[l], 3});
    CHECK(out.levels[l].mi_fs1.defined());
    CHECK(out.levels[l].mi_ms.defined());
    CHECK(out.levels[l].mi_es.defined());
  }
  CHECK(out.flow2d_full.shape() == Shape{32, 32, 2});
  CHECK(out.flow3d_full.shape() == Shape{sample.n_points(), 3});
}

TEST_CASE("zeroed flow heads leave every estimate at zero") {
  ModelConfig cfg = config_l3();
  Model<double> model(cfg, {}, 17);
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    const std::string p = "level" + std::to_string(l);
    for (const char* name : {".head2d.w", ".head2d.b", ".head3d.w",
                             ".head3d.b"}) {
      for (auto& v : model.params().get(p + name).raw_values()) v = 0.0;
    }
  }
  auto sample = generate(toy_scene(23, 32, 128));
  auto inputs = make_inputs<double>(sample, cfg, model.options());
  NoGradGuard<double> inference;
  auto out = model.forward(inputs);
  for (const auto& level : out.levels) {
    for (std::size_t i = 0; i < level.flow2d.size(); ++i) {
      CHECK(level.flow2d.at(i) == 0.0);
    }
    for (std::size_t i = 0; i < level.flow3d.size(); ++i) {
      CHECK(level.flow3d.at(i) == 0.0);
    }
  }
  for (std::size_t i = 0; i < out.flow2d_full.size(); ++i) {
    CHECK(out.flow2d_full.at(i) == 0.0);
  }
}

TEST_CASE("forward is deterministic") {
  ModelConfig cfg = config_l3();
  Model<double> model(cfg, {}, 19);
  auto sample = generate(toy_scene(29, 32, 128));
  auto inputs = make_inputs<double>(sample, cfg, model.options());
  NoGradGuard<double> inference;
  auto a = model.forward(inputs);
  auto b = model.forward(inputs);
  CHECK(same_values(a.flow2d_full, b.flow2d_full));
  CHECK(same_values(a.flow3d_full, b.flow3d_full));
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    CHECK(same_values(a.levels[l].flow2d, b.levels[l].flow2d));
    CHECK(a.levels[l].mi_ms.item() == b.levels[l].mi_ms.item());
  }
}

TEST_CASE("zeroing the event grid leaves feature-stage outputs untouched") {
  ModelConfig cfg = config_l3();
  auto sample = generate(toy_scene(31, 32, 128));

  Model<double> with_events(cfg, ModelOptions{}, 23);
  ModelOptions no_ev;
  no_ev.use_events = false;
  Model<double> without_events(cfg, no_ev, 23);  // same seed, same weights

  NoGradGuard<double> inference;
  auto a = with_events.forward(
      make_inputs<double>(sample, cfg, with_events.options()));
  auto b = without_events.forward(
      make_inputs<double>(sample, cfg, without_events.options()));
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    CHECK(a.levels[l].mi_fs1.item() == b.levels[l].mi_fs1.item());
    CHECK(a.levels[l].mi_fs2.item() == b.levels[l].mi_fs2.item());
  }
}

TEST_CASE("forward rejects non-divisible extents and wrong bin counts") {
  ModelConfig cfg = config_l3();
  Model<double> model(cfg, {}, 29);
  ModelInputs<double> inputs;
  inputs.cam = CameraIntrinsics{24.0, 12.0, 12.0, 24, 24};
  inputs.intensity0 = Tensor<double>::zeros({24, 24, 1});  // 24 % 8 != 0
  inputs.intensity1 = Tensor<double>::zeros({24, 24, 1});
  inputs.pc0 = Tensor<double>::from({4, 3}, {0, 0, 1, 0, 0, 1, 0, 0, 1,
                                             0, 0, 1});
  inputs.pc1 = inputs.pc0;
  inputs.event_grid = Tensor<double>::zeros({24, 24, 4});
  CHECK_THROWS_AS(model.forward(inputs), ShapeError);
}

TEST_CASE("full-model gradcheck on a tiny configuration") {
  ModelConfig cfg = ModelConfig::tiny();
  Model<double> model(cfg, {}, 31);
  SceneSpec spec = toy_scene(37, 8, 32);
  spec.substeps = 3;
  auto sample = generate(spec);
  auto inputs = make_inputs<double>(sample, cfg, model.options());
  auto weights = LossWeights<double>::defaults(cfg.levels);

  auto loss = [&]() {
    auto out = model.forward(inputs);
    auto gts = build_level_ground_truth<double>(
        sample, std::span<const LevelEstimate<double>>(out.levels));
    auto task = task_loss<double>(
        std::span<const LevelEstimate<double>>(out.levels),
        std::span<const LevelGroundTruth<double>>(gts), weights);
    auto feat = feature_loss<double>(
        std::span<const LevelEstimate<double>>(out.levels), weights);
    return total_loss(task, feat, weights);
  };
  auto report = gradcheck_params<double>(loss, model.params().items(), 50,
                                         1234, 1e-6, 1e-4);
  INFO(report.worst_location, " rel err ", report.max_rel_err);
  CHECK(report.pass);
}
