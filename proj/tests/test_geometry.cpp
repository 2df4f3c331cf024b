#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rpeflow/geometry.hpp"
#include "rpeflow/gradcheck.hpp"
#include "rpeflow/rng.hpp"

using namespace rpeflow;

namespace {

CameraIntrinsics centered_cam(std::size_t w, std::size_t h, double f) {
  return CameraIntrinsics{f, static_cast<double>(w) / 2.0,
                          static_cast<double>(h) / 2.0, w, h};
}

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("project substitutes the pinhole formula") {
  CameraIntrinsics cam{2.0, 0.0, 0.0, 8, 8};
  auto p = Tensor<double>::from({1, 3}, {1, 2, 2});
  auto uv = project(p, cam);
  CHECK(uv.at2(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(uv.at2(0, 1) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("project keeps the optical axis fixed") {
  CameraIntrinsics cam{3.5, 0.0, 0.0, 8, 8};
  for (double z : {0.5, 1.0, 7.25}) {
    auto p = Tensor<double>::from({1, 3}, {0, 0, z});
    auto uv = project(p, cam);
    CHECK(uv.at2(0, 0) == 0.0);
    CHECK(uv.at2(0, 1) == 0.0);
  }
}

TEST_CASE("project rejects points behind the camera naming the index") {
  CameraIntrinsics cam = centered_cam(8, 8, 4.0);
  auto p = Tensor<double>::from({2, 3}, {0, 0, 1, 0, 0, -1});
  try {
    project(p, cam);
    FAIL("expected GeometryError");
  } catch (const GeometryError& e) {
    CHECK(std::string(e.what()).find("point 1") != std::string::npos);
  }
}

TEST_CASE("project is differentiable w.r.t. positions") {
  CameraIntrinsics cam = centered_cam(16, 16, 8.0);
  Rng rng(3);
  std::vector<double> pos;
  for (int i = 0; i < 4; ++i) {
    pos.push_back(rng.uniform(-1, 1));
    pos.push_back(rng.uniform(-1, 1));
    pos.push_back(rng.uniform(1.5, 4.0));
  }
  auto p0 = Tensor<double>::from({4, 3}, pos);
  auto report = gradcheck<double>(
      [&](const Tensor<double>& p) { return sum(square(project(p, cam))); },
      p0, 1e-6, 1e-4);
  CHECK(report.pass);
}

TEST_CASE("backproject of constant depth hits the optical axis") {
  CameraIntrinsics cam = centered_cam(4, 4, 2.0);
  auto depth = Tensor<double>::full({4, 4}, 3.0);
  auto bp = backproject(depth, {}, cam);
  // pixel (cx, cy) = (2, 2) is row-major index 10
  bool found = false;
  for (std::size_t i = 0; i < bp.pixel_index.size(); ++i) {
    if (bp.pixel_index[i] == 10) {
      CHECK(bp.positions.at2(i, 0) == 0.0);
      CHECK(bp.positions.at2(i, 1) == 0.0);
      CHECK(bp.positions.at2(i, 2) == 3.0);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("backproject yields one point per valid pixel") {
  CameraIntrinsics cam = centered_cam(2, 2, 1.0);
  auto depth = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto bp = backproject(depth, {}, cam);
  CHECK(bp.positions.shape()[0] == 4);

  std::vector<std::uint8_t> none(4, 0);
  CHECK_THROWS_AS(backproject(depth, none, cam), GeometryError);
}

TEST_CASE("project and backproject are mutual inverses") {
  CameraIntrinsics cam = centered_cam(6, 5, 3.0);
  Rng rng(7);
  std::vector<double> d(30);
  for (auto& v : d) v = rng.uniform(0.5, 5.0);
  auto depth = Tensor<double>::from({5, 6}, d);
  auto bp = backproject(depth, {}, cam);
  auto uv = project(bp.positions, cam);
  for (std::size_t i = 0; i < bp.pixel_index.size(); ++i) {
    const double u = static_cast<double>(bp.pixel_index[i] % 6);
    const double v = static_cast<double>(bp.pixel_index[i] / 6);
    CHECK(std::fabs(uv.at2(i, 0) - u) < 1e-9);
    CHECK(std::fabs(uv.at2(i, 1) - v) < 1e-9);
    CHECK(std::fabs(bp.positions.at2(i, 2) - depth.at(bp.pixel_index[i])) <
          1e-9);
  }
}

TEST_CASE("bilinear sample hits grid values at integer coords") {
  Rng rng(11);
  auto feat = random_tensor({3, 4, 2}, rng);
  auto coords = Tensor<double>::from({2, 2}, {1, 2, 3, 0});
  auto out = bilinear_sample(feat, coords);
  CHECK(out.at2(0, 0) == feat.at3(2, 1, 0));
  CHECK(out.at2(0, 1) == feat.at3(2, 1, 1));
  CHECK(out.at2(1, 0) == feat.at3(0, 3, 0));
}

TEST_CASE("bilinear sample midpoint averages four cells") {
  auto feat = Tensor<double>::from({2, 2, 1}, {0, 0, 2, 2});
  auto coords = Tensor<double>::from({1, 2}, {0.5, 0.5});
  auto out = bilinear_sample(feat, coords);
  CHECK(out.at2(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bilinear sample clamps to the border") {
  auto feat = Tensor<double>::from({2, 2, 1}, {1, 2, 3, 4});
  auto coords = Tensor<double>::from({2, 2}, {-5.0, 0.0, 9.0, 9.0});
  auto out = bilinear_sample(feat, coords);
  CHECK(out.at2(0, 0) == 1.0);
  CHECK(out.at2(1, 0) == 4.0);
}

TEST_CASE("bilinear sample is linear in the grid") {
  // Dyadic coefficients and integer features keep the identity exact.
  Rng rng(13);
  std::vector<double> av(12), bv(12);
  for (auto& v : av) v = std::floor(rng.uniform(-8, 8));
  for (auto& v : bv) v = std::floor(rng.uniform(-8, 8));
  auto a = Tensor<double>::from({2, 3, 2}, av);
  auto b = Tensor<double>::from({2, 3, 2}, bv);
  auto coords = Tensor<double>::from({3, 2}, {0.25, 0.5, 1.75, 0.125, 2.0, 1.0});
  const double alpha = 0.5, beta = 0.25;
  auto mixv = add(a * alpha, b * beta);
  auto lhs = bilinear_sample(mixv, coords);
  auto ra = bilinear_sample(a, coords);
  auto rb = bilinear_sample(b, coords);
  auto rhs = add(ra * alpha, rb * beta);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    CHECK(lhs.at(i) == rhs.at(i));
  }
}

TEST_CASE("splat puts a centered point in exactly one pixel") {
  auto features = Tensor<double>::from({1, 2}, {3.0, -1.5});
  auto coords = Tensor<double>::from({1, 2}, {2.0, 1.0});
  auto grid = splat_bilinear(features, coords, 4, 4, false);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      if (y == 1 && x == 2) {
        CHECK(grid.at3(y, x, 0) == 3.0);
        CHECK(grid.at3(y, x, 1) == -1.5);
      } else {
        CHECK(grid.at3(y, x, 0) == 0.0);
        CHECK(grid.at3(y, x, 1) == 0.0);
      }
    }
  }
}

TEST_CASE("splat normalization keeps coincident identical features") {
  auto features = Tensor<double>::from({2, 1}, {2.5, 2.5});
  auto coords = Tensor<double>::from({2, 2}, {1.0, 1.0, 1.0, 1.0});
  auto grid = splat_bilinear(features, coords, 3, 3, true);
  CHECK(grid.at3(1, 1, 0) == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("splat mass equals the point count before normalization") {
  Rng rng(17);
  const std::size_t n = 37;
  std::vector<double> cv(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    cv[2 * i] = rng.uniform(0.0, 6.99);
    cv[2 * i + 1] = rng.uniform(0.0, 6.99);
  }
  auto coords = Tensor<double>::from({n, 2}, cv);
  auto wmap = splat_weight_map(coords, 8, 8);
  double total = 0;
  for (double w : wmap) total += w;
  CHECK(std::fabs(total - static_cast<double>(n)) < 1e-9);
}

TEST_CASE("splat drops out-of-view points entirely") {
  auto features = Tensor<double>::from({2, 1}, {5.0, 7.0});
  auto coords = Tensor<double>::from({2, 2}, {-3.0, 1.0, 12.0, 12.0});
  auto grid = splat_bilinear(features, coords, 4, 4, true);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(grid.at(i) == 0.0);
}

TEST_CASE("scatter_interpolate composes splat and 1x1 mixing") {
  CameraIntrinsics cam = centered_cam(4, 4, 2.0);
  PointSet<double> points;
  points.positions = Tensor<double>::from({1, 3}, {0, 0, 1});  // pixel (2,2)
  points.features = Tensor<double>::from({1, 2}, {1.0, 2.0});
  auto mix = Tensor<double>::from({2, 2}, {0, 1, 1, 0});  // swap channels
  auto out = scatter_interpolate(points, cam, 4, 4, mix);
  CHECK(out.at3(2, 2, 0) == 2.0);
  CHECK(out.at3(2, 2, 1) == 1.0);
  CHECK(out.at3(0, 0, 0) == 0.0);
}

TEST_CASE("scatter_interpolate gradients reach features and mixing") {
  CameraIntrinsics cam = centered_cam(6, 6, 3.0);
  Rng rng(19);
  std::vector<double> pos;
  for (int i = 0; i < 5; ++i) {
    pos.push_back(rng.uniform(-0.8, 0.8));
    pos.push_back(rng.uniform(-0.8, 0.8));
    pos.push_back(rng.uniform(1.0, 2.0));
  }
  auto positions = Tensor<double>::from({5, 3}, pos);
  auto f0 = random_tensor({5, 3}, rng);
  auto mix0 = random_tensor({3, 2}, rng);
  auto rf = gradcheck<double>(
      [&](const Tensor<double>& f) {
        PointSet<double> ps{positions, f};
        return sum(square(scatter_interpolate(ps, cam, 6, 6, mix0)));
      },
      f0, 1e-6, 1e-4);
  CHECK(rf.pass);
  auto rm = gradcheck<double>(
      [&](const Tensor<double>& m) {
        PointSet<double> ps{positions, f0};
        return sum(square(scatter_interpolate(ps, cam, 6, 6, m)));
      },
      mix0, 1e-6, 1e-4);
  CHECK(rm.pass);
}

TEST_CASE("warp2d with zero flow is the identity") {
  Rng rng(23);
  auto feat = random_tensor({4, 5, 3}, rng);
  auto flow = Tensor<double>::zeros({4, 5, 2});
  auto out = warp2d(feat, flow);
  for (std::size_t i = 0; i < feat.size(); ++i) CHECK(out.at(i) == feat.at(i));
}

TEST_CASE("warp2d shifts a ramp by one column") {
  // feat(y, x) = x; flow (1, 0) pulls from x+1.
  std::vector<double> v(4 * 4);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) v[y * 4 + x] = static_cast<double>(x);
  }
  auto feat = Tensor<double>::from({4, 4, 1}, v);
  std::vector<double> fv(4 * 4 * 2, 0.0);
  for (std::size_t i = 0; i < 16; ++i) fv[2 * i] = 1.0;
  auto flow = Tensor<double>::from({4, 4, 2}, fv);
  auto out = warp2d(feat, flow);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x + 1 < 4; ++x) {
      CHECK(out.at3(y, x, 0) == doctest::Approx(x + 1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("warp2d is differentiable in features and flow") {
  Rng rng(29);
  auto feat0 = random_tensor({4, 4, 2}, rng);
  auto flow0 = random_tensor({4, 4, 2}, rng, -0.8, 0.8);
  auto rf = gradcheck<double>(
      [&](const Tensor<double>& f) { return sum(square(warp2d(f, flow0))); },
      feat0, 1e-6, 1e-4);
  CHECK(rf.pass);
  auto rw = gradcheck<double>(
      [&](const Tensor<double>& w) { return sum(square(warp2d(feat0, w))); },
      flow0, 1e-6, 1e-4);
  CHECK(rw.pass);
}

TEST_CASE("warp3d recovers features under exact correspondence") {
  Rng rng(31);
  const std::size_t n = 12;
  std::vector<double> pos, sf;
  for (std::size_t i = 0; i < n; ++i) {
    pos.push_back(rng.uniform(-1, 1));
    pos.push_back(rng.uniform(-1, 1));
    pos.push_back(rng.uniform(1, 3));
    sf.push_back(rng.uniform(-0.2, 0.2));
    sf.push_back(rng.uniform(-0.2, 0.2));
    sf.push_back(rng.uniform(-0.2, 0.2));
  }
  auto pc1 = Tensor<double>::from({n, 3}, pos);
  auto flow = Tensor<double>::from({n, 3}, sf);
  auto pc2 = add(pc1, flow);
  auto features = random_tensor({n, 4}, rng);
  auto gathered = warp3d(features, pc2, pc1, flow, 3);
  for (std::size_t i = 0; i < gathered.size(); ++i) {
    CHECK(gathered.at(i) == doctest::Approx(features.at(i)).epsilon(1e-6));
  }
}

TEST_CASE("warp3d with a single frame-2 point returns its feature") {
  auto pos2 = Tensor<double>::from({1, 3}, {5, 5, 5});
  auto feat2 = Tensor<double>::from({1, 2}, {7.0, -3.0});
  auto pc1 = Tensor<double>::from({2, 3}, {0, 0, 1, 1, 1, 1});
  auto sf = Tensor<double>::zeros({2, 3});
  auto out = warp3d(feat2, pos2, pc1, sf, 3);
  CHECK(out.at2(0, 0) == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(out.at2(1, 1) == doctest::Approx(-3.0).epsilon(1e-12));
}

TEST_CASE("warp3d IDW weights sum to one per query") {
  Rng rng(37);
  const std::size_t n = 9, m = 14;
  std::vector<double> p1, p2;
  for (std::size_t i = 0; i < n * 3; ++i) p1.push_back(rng.uniform(-1, 1));
  for (std::size_t i = 0; i < m * 3; ++i) p2.push_back(rng.uniform(-1, 1));
  auto pc1 = Tensor<double>::from({n, 3}, p1);
  auto pc2 = Tensor<double>::from({m, 3}, p2);
  auto ones = Tensor<double>::full({m, 1}, 1.0);
  auto sf = Tensor<double>::zeros({n, 3});
  auto out = warp3d(ones, pc2, pc1, sf, 3);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(std::fabs(out.at2(i, 0) - 1.0) < 1e-9);
  }
}

TEST_CASE("warp3d rejects an empty frame-2 set") {
  auto feat2 = Tensor<double>::zeros({0, 2});
  auto pos2 = Tensor<double>::zeros({0, 3});
  auto pc1 = Tensor<double>::from({1, 3}, {0, 0, 1});
  auto sf = Tensor<double>::zeros({1, 3});
  CHECK_THROWS_AS(warp3d(feat2, pos2, pc1, sf, 3), GeometryError);
}

TEST_CASE("warp3d is differentiable in features and scene flow") {
  Rng rng(41);
  const std::size_t n = 6, m = 8;
  std::vector<double> p1, p2;
  for (std::size_t i = 0; i < n * 3; ++i) p1.push_back(rng.uniform(-1, 1));
  for (std::size_t i = 0; i < m * 3; ++i) p2.push_back(rng.uniform(-1, 1));
  auto pc1 = Tensor<double>::from({n, 3}, p1);
  auto pc2 = Tensor<double>::from({m, 3}, p2);
  auto feat0 = random_tensor({m, 2}, rng);
  auto sf0 = random_tensor({n, 3}, rng, -0.1, 0.1);
  auto rf = gradcheck<double>(
      [&](const Tensor<double>& f) {
        return sum(square(warp3d(f, pc2, pc1, sf0, 3)));
      },
      feat0, 1e-6, 1e-4);
  CHECK(rf.pass);
  auto rs = gradcheck<double>(
      [&](const Tensor<double>& s) {
        return sum(square(warp3d(feat0, pc2, pc1, s, 3)));
      },
      sf0, 1e-6, 1e-4);
  CHECK(rs.pass);
}

TEST_CASE("flow upsampling doubles constant values") {
  std::vector<double> v(2 * 2 * 2);
  for (std::size_t i = 0; i < 4; ++i) {
    v[2 * i] = 1.0;
    v[2 * i + 1] = 0.0;
  }
  auto coarse = Tensor<double>::from({2, 2, 2}, v);
  auto fine = upsample_flow2d(coarse, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(fine.at(2 * i) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fine.at(2 * i + 1) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("IDW point interpolation preserves constants") {
  Rng rng(43);
  std::vector<double> pc, pf;
  for (int i = 0; i < 5 * 3; ++i) pc.push_back(rng.uniform(-1, 1));
  for (int i = 0; i < 9 * 3; ++i) pf.push_back(rng.uniform(-1, 1));
  auto coarse_pos = Tensor<double>::from({5, 3}, pc);
  auto fine_pos = Tensor<double>::from({9, 3}, pf);
  auto values = Tensor<double>::full({5, 3}, 4.25);
  auto out = interpolate_points_idw(values, coarse_pos, fine_pos, 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.at(i) == doctest::Approx(4.25).epsilon(1e-12));
  }

  auto zeros = Tensor<double>::zeros({5, 3});
  auto outz = interpolate_points_idw(zeros, coarse_pos, fine_pos, 3);
  for (std::size_t i = 0; i < outz.size(); ++i) CHECK(outz.at(i) == 0.0);
}

TEST_CASE("furthest point sampling and knn basics") {
  std::vector<double> line = {0, 0, 0, 1, 0, 0, 2, 0, 0, 10, 0, 0};
  auto picked = furthest_point_sample(line, 3, 2);
  REQUIRE(picked.size() == 2);
  CHECK(picked[0] == 0);
  CHECK(picked[1] == 3);  // the far point

  auto idx = knn_indices({0.9, 0, 0}, line, 3, 2);
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 0);
}
